// Copyright 2026 The lgdumap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LGDUMAP_CONFIG_HPP
#define LGDUMAP_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace lgdumap {

// Experiment configuration. The model/train/privacy/calibration/federation
// blocks follow the standard config schema; data/sim/ablation/proposer,
// seeds and output_dir are artifact extensions documented in the README.
// Unknown keys and out-of-range values are rejected with their key path.
struct ExperimentConfig {
  struct Model {
    std::string gnn = "graphsage";
    int hidden = 256;
    int umap_dim = 32;
    int neighbors = 15;
    int markers_pos = 8;
    int markers_neg = 8;
    double align_weight = 0.2;
    double umap_weight = 1.0;
    double kl_weight = 0.1;
  } model;

  struct Train {
    int rounds = 50;
    int local_epochs = 2;
    int batch_pairs = 1024;
    double lr_gnn_umap = 2e-3;
    double lr_adapter = 5e-5;  // accepted for schema parity; mock has no adapters
  } train;

  struct Privacy {
    double clip = 1.0;
    double noise_sigma_dp = 0.9;
    double sampling_rate = 0.2;
  } privacy;

  struct Calibration {
    bool use_temperature = true;
    double threshold_tau = 0.8;
  } calibration;

  struct Federation {
    std::vector<double> client_sampling = {0.2, 0.5, 1.0};
  } federation;

  struct Data {
    std::string source = "synth";  // synth | a directory of client graphs
    std::string path;
    int nodes = 800;
    int classes = 4;
    int feature_dim = 16;
    double intra_p = 0.08;
    double inter_p = 0.01;
    int text_vocab = 64;
    int n_clients = 20;
    double label_skew_alpha = 0.3;
    int fewshot_k = 10;
    double coldstart_fraction = 0.0;
  } data;

  struct Sim {
    int umap_warmup_epochs = 1;
    int n_neg_umap = 5;
    double bce_neg_ratio = 1.0;
    int eq_samples = 1;
    int kl_samples = 64;
    bool mask_aggregation = true;
    bool dp_enabled = false;
    double participation = 1.0;
    int mlp_hidden = 64;
    double min_dist = 0.1;
    double spread = 1.0;
    double sigma_kern = 1.0;
    int mrr_k = 10;
    double dp_delta = 1e-5;
  } sim;

  struct Ablation {
    bool aggregate_markers = true;
    bool use_proposals = true;
    bool pseudo_to_bce = true;
    bool pseudo_to_nll = true;
  } ablation;

  struct Proposer {
    double precision = 0.9;
    double skew = 2.0;
    int budget = 20;
    int probe_budget = 128;
  } proposer;

  std::vector<int> seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "runs/out";
};

// Parses the YAML config; an empty file (or empty string content) yields
// the defaults above. Unknown keys and range violations throw
// std::invalid_argument naming the key path.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_string(const std::string& yaml);

// Canonical serialization; parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& c);

std::uint64_t config_hash(const ExperimentConfig& c);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace lgdumap

#endif  // LGDUMAP_CONFIG_HPP
