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

#ifndef LGDUMAP_TRAINER_HPP
#define LGDUMAP_TRAINER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lgdumap/encoder.hpp"
#include "lgdumap/federation.hpp"
#include "lgdumap/graph.hpp"
#include "lgdumap/llmguide.hpp"
#include "lgdumap/markers.hpp"
#include "lgdumap/privacy.hpp"

namespace lgdumap {

// Everything the round loop needs, resolved from the experiment config.
struct TrainSettings {
  ModelConfig model;
  int neighbors = 15;
  ObjectiveWeights weights;
  int rounds = 50;
  int local_epochs = 2;
  int batch_pairs = 1024;
  double lr = 2e-3;
  int umap_warmup_epochs = 1;
  int n_neg_umap = 5;
  double bce_neg_ratio = 1.0;
  int eq_samples = 1;
  int kl_samples = 64;
  double participation = 1.0;
  bool dp_on = false;
  DpConfig dp;
  bool mask_aggregation = true;
  bool aggregate = true;
  bool use_proposals = true;
  MockOracleProposer proposer;
  bool use_temperature = true;
  double tau = 0.8;
  bool pseudo_to_bce = true;
  bool pseudo_to_nll = true;
  int mrr_k = 10;
  std::uint64_t seed = 1;
};

// Per-client persistent state across rounds. Only marker statistics ever
// leave this struct toward the server.
struct ClientState {
  int id = 0;
  ClientGraph graph;
  ClientModel model;
  Adam opt{2e-3};
  bool initialized = false;
  bool markers_initialized = false;
  std::vector<std::pair<int, int>> pseudo_edges;
  std::vector<std::pair<int, int>> pseudo_labels;  // (node, proposed class)
  MatrixXd text_emb;
  std::vector<std::uint8_t> has_text;
  double temperature = 1.0;
  MatrixXd last_fused;  // encoder input view after the last update
  MatrixXd last_z;      // embedding after the last update
};

struct ClientRoundReport {
  int client_id = 0;
  int n_nodes = 0, n_train_nodes = 0, n_train_edges = 0;
  LossBundle losses;
  int n_proposed = 0, n_admitted = 0;
  double admit_precision = 0.0;
  double temperature = 1.0;
  double ece_pre = 0.0, ece_post = 0.0, brier_pre = 0.0, brier_post = 0.0;
  double grad_norm = 0.0, drift_norm = 0.0;
  std::size_t payload_bytes = 0;
  double val_acc = 0.0, test_acc = 0.0, test_f1 = 0.0;
  double elapsed_ms = 0.0;  // volatile; excluded from deterministic logs
};

struct RoundReport {
  int round = 0;
  bool skipped = false;
  std::vector<int> participants;
  std::vector<ClientRoundReport> clients;
  double agg_update_norm = 0.0;
  double epsilon = 0.0;  // +inf when noise is off
};

std::vector<ClientState> make_clients(std::vector<ClientGraph> graphs,
                                      const TrainSettings& s);

// One full federated round: fuse, neighborhood build, warmup, proposal
// admission, marker fit, local optimization with optional clipping/noise,
// payload share, aggregation and broadcast.
RoundReport run_round(ServerState& server, std::vector<ClientState>& clients,
                      const TrainSettings& s);

// Label-evaluation protocol: pseudo-label proposals may only target the
// augmentable half of the test nodes; accuracy is reported on the other
// half so oracle-derived labels never touch the evaluated items.
std::vector<int> augmentable_label_nodes(const ClientGraph& g);
std::vector<int> eval_label_nodes(const ClientGraph& g);

struct ClientEvalResult {
  double val_acc = 0.0, test_acc = 0.0, test_f1 = 0.0;
  double trust = 0.0, continuity = 0.0;
  double cka_text = 0.0, procrustes_text = 0.0;
  double mrr = 0.0, hits = 0.0;
  std::vector<double> member_losses;     // train-edge BCE vs global markers
  std::vector<double> nonmember_losses;  // held-out-edge BCE, same markers
};

// Full post-training evaluation of one client against the final global
// markers (manifold diagnostics and ranking included when `full`).
ClientEvalResult evaluate_client(const ClientState& cs,
                                 const Eigen::VectorXd& global_markers,
                                 const std::vector<std::int8_t>& polarity,
                                 const TrainSettings& s, bool full);

// Shipped gradient-verification mode: every objective term on a small
// random instance, analytic tape gradients against central differences.
struct GradCheckEntry {
  std::string term;   // nll / bce / kl / align / umap / total
  std::string block;  // parameter block name
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass(double tol = 1e-4) const { return worst <= tol; }
};

GradCheckReport run_gradcheck(std::uint64_t seed, double fd_step = 1e-4);

}  // namespace lgdumap

#endif  // LGDUMAP_TRAINER_HPP
