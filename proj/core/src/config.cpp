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

#include "lgdumap/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lgdumap/rng.hpp"

namespace lgdumap {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config: " + path + ": " + what);
}

void check_keys(const YAML::Node& n, const std::string& path,
                const std::set<std::string>& known) {
  if (!n) return;
  if (!n.IsMap()) fail(path, "expected a mapping");
  for (const auto& kv : n) {
    std::string key = kv.first.as<std::string>();
    if (!known.count(key)) fail(path + "." + key, "unknown key");
  }
}

template <typename T>
void get(const YAML::Node& n, const std::string& path, const char* key, T& out) {
  if (!n || !n[key]) return;
  try {
    out = n[key].as<T>();
  } catch (const YAML::Exception&) {
    fail(path + "." + key, "bad value type");
  }
}

void get_doubles(const YAML::Node& n, const std::string& path, const char* key,
                 std::vector<double>& out) {
  if (!n || !n[key]) return;
  if (!n[key].IsSequence()) fail(path + "." + key, "expected a list");
  out.clear();
  for (const auto& v : n[key]) out.push_back(v.as<double>());
}

void get_ints(const YAML::Node& n, const std::string& path, const char* key,
              std::vector<int>& out) {
  if (!n || !n[key]) return;
  if (!n[key].IsSequence()) fail(path + "." + key, "expected a list");
  out.clear();
  for (const auto& v : n[key]) out.push_back(v.as<int>());
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) fail(path, what);
}

void validate(const ExperimentConfig& c) {
  require(c.model.gnn == "graphsage", "model.gnn", "only 'graphsage' is supported");
  require(c.model.hidden >= 1, "model.hidden", "must be >= 1");
  require(c.model.umap_dim >= 1, "model.umap_dim", "must be >= 1");
  require(c.model.neighbors >= 1, "model.neighbors", "must be >= 1");
  require(c.model.markers_pos >= 1, "model.markers_pos", "must be >= 1");
  require(c.model.markers_neg >= 1, "model.markers_neg", "must be >= 1");
  require(c.model.align_weight >= 0, "model.align_weight", "must be >= 0");
  require(c.model.umap_weight >= 0, "model.umap_weight", "must be >= 0");
  require(c.model.kl_weight >= 0, "model.kl_weight", "must be >= 0");
  require(c.train.rounds >= 0, "train.rounds", "must be >= 0");
  require(c.train.local_epochs >= 0, "train.local_epochs", "must be >= 0");
  require(c.train.batch_pairs >= 1, "train.batch_pairs", "must be >= 1");
  require(c.train.lr_gnn_umap > 0, "train.lr_gnn_umap", "must be > 0");
  require(c.train.lr_adapter > 0, "train.lr_adapter", "must be > 0");
  require(c.privacy.clip > 0, "privacy.clip", "must be > 0");
  require(c.privacy.noise_sigma_dp >= 0, "privacy.noise_sigma_dp", "must be >= 0");
  require(c.privacy.sampling_rate > 0 && c.privacy.sampling_rate <= 1,
          "privacy.sampling_rate", "must be in (0,1]");
  require(c.calibration.threshold_tau > 0 && c.calibration.threshold_tau < 1,
          "calibration.threshold_tau", "must be in (0,1)");
  require(!c.federation.client_sampling.empty(), "federation.client_sampling",
          "must be nonempty");
  for (double q : c.federation.client_sampling)
    require(q > 0 && q <= 1, "federation.client_sampling", "entries must be in (0,1]");
  require(c.data.source == "synth" || c.data.source == "dir", "data.source",
          "must be 'synth' or 'dir'");
  require(c.data.nodes >= 1, "data.nodes", "must be >= 1");
  require(c.data.classes >= 1, "data.classes", "must be >= 1");
  require(c.data.feature_dim >= 1, "data.feature_dim", "must be >= 1");
  require(c.data.inter_p >= 0 && c.data.inter_p <= c.data.intra_p &&
              c.data.intra_p <= 1,
          "data.intra_p", "need 0 <= inter_p <= intra_p <= 1");
  require(c.data.text_vocab >= 1, "data.text_vocab", "must be >= 1");
  require(c.data.n_clients >= 1, "data.n_clients", "must be >= 1");
  require(c.data.label_skew_alpha > 0, "data.label_skew_alpha", "must be > 0");
  require(c.data.fewshot_k >= 0, "data.fewshot_k", "must be >= 0");
  require(c.data.coldstart_fraction >= 0 && c.data.coldstart_fraction <= 1,
          "data.coldstart_fraction", "must be in [0,1]");
  require(c.sim.umap_warmup_epochs >= 0, "sim.umap_warmup_epochs", "must be >= 0");
  require(c.sim.n_neg_umap >= 0, "sim.n_neg_umap", "must be >= 0");
  require(c.sim.bce_neg_ratio >= 0, "sim.bce_neg_ratio", "must be >= 0");
  require(c.sim.eq_samples >= 1, "sim.eq_samples", "must be >= 1");
  require(c.sim.kl_samples >= 1, "sim.kl_samples", "must be >= 1");
  require(c.sim.participation >= 0 && c.sim.participation <= 1,
          "sim.participation", "must be in [0,1]");
  require(c.sim.mlp_hidden >= 1, "sim.mlp_hidden", "must be >= 1");
  require(c.sim.min_dist > 0, "sim.min_dist", "must be > 0");
  require(c.sim.spread > 0, "sim.spread", "must be > 0");
  require(c.sim.sigma_kern > 0, "sim.sigma_kern", "must be > 0");
  require(c.sim.mrr_k >= 1, "sim.mrr_k", "must be >= 1");
  require(c.sim.dp_delta > 0 && c.sim.dp_delta < 1, "sim.dp_delta", "must be in (0,1)");
  require(c.proposer.precision > 0 && c.proposer.precision < 1,
          "proposer.precision", "must be in (0,1)");
  require(c.proposer.skew > 0, "proposer.skew", "must be > 0");
  require(c.proposer.budget >= 0, "proposer.budget", "must be >= 0");
  require(c.proposer.probe_budget >= 0, "proposer.probe_budget", "must be >= 0");
  require(!c.seeds.empty(), "seeds", "must be nonempty");
  require(!c.output_dir.empty(), "output_dir", "must be nonempty");
}

ExperimentConfig from_yaml(const YAML::Node& root) {
  ExperimentConfig c;
  if (!root || root.IsNull()) return c;  // empty file: all defaults
  if (!root.IsMap()) throw std::invalid_argument("config: top level must be a mapping");

  check_keys(root, "",
             {"model", "train", "privacy", "calibration", "federation", "data",
              "sim", "ablation", "proposer", "seeds", "output_dir"});

  const YAML::Node model = root["model"];
  check_keys(model, "model",
             {"gnn", "hidden", "umap_dim", "neighbors", "markers_pos",
              "markers_neg", "align_weight", "umap_weight", "kl_weight"});
  get(model, "model", "gnn", c.model.gnn);
  get(model, "model", "hidden", c.model.hidden);
  get(model, "model", "umap_dim", c.model.umap_dim);
  get(model, "model", "neighbors", c.model.neighbors);
  get(model, "model", "markers_pos", c.model.markers_pos);
  get(model, "model", "markers_neg", c.model.markers_neg);
  get(model, "model", "align_weight", c.model.align_weight);
  get(model, "model", "umap_weight", c.model.umap_weight);
  get(model, "model", "kl_weight", c.model.kl_weight);

  const YAML::Node train = root["train"];
  check_keys(train, "train",
             {"rounds", "local_epochs", "batch_pairs", "lr_gnn_umap", "lr_adapter"});
  get(train, "train", "rounds", c.train.rounds);
  get(train, "train", "local_epochs", c.train.local_epochs);
  get(train, "train", "batch_pairs", c.train.batch_pairs);
  get(train, "train", "lr_gnn_umap", c.train.lr_gnn_umap);
  get(train, "train", "lr_adapter", c.train.lr_adapter);

  const YAML::Node priv = root["privacy"];
  check_keys(priv, "privacy", {"clip", "noise_sigma_dp", "sampling_rate"});
  get(priv, "privacy", "clip", c.privacy.clip);
  get(priv, "privacy", "noise_sigma_dp", c.privacy.noise_sigma_dp);
  get(priv, "privacy", "sampling_rate", c.privacy.sampling_rate);

  const YAML::Node cal = root["calibration"];
  check_keys(cal, "calibration", {"use_temperature", "threshold_tau"});
  get(cal, "calibration", "use_temperature", c.calibration.use_temperature);
  get(cal, "calibration", "threshold_tau", c.calibration.threshold_tau);

  const YAML::Node fed = root["federation"];
  check_keys(fed, "federation", {"client_sampling"});
  get_doubles(fed, "federation", "client_sampling", c.federation.client_sampling);

  const YAML::Node data = root["data"];
  check_keys(data, "data",
             {"source", "path", "nodes", "classes", "feature_dim", "intra_p",
              "inter_p", "text_vocab", "n_clients", "label_skew_alpha",
              "fewshot_k", "coldstart_fraction"});
  get(data, "data", "source", c.data.source);
  get(data, "data", "path", c.data.path);
  get(data, "data", "nodes", c.data.nodes);
  get(data, "data", "classes", c.data.classes);
  get(data, "data", "feature_dim", c.data.feature_dim);
  get(data, "data", "intra_p", c.data.intra_p);
  get(data, "data", "inter_p", c.data.inter_p);
  get(data, "data", "text_vocab", c.data.text_vocab);
  get(data, "data", "n_clients", c.data.n_clients);
  get(data, "data", "label_skew_alpha", c.data.label_skew_alpha);
  get(data, "data", "fewshot_k", c.data.fewshot_k);
  get(data, "data", "coldstart_fraction", c.data.coldstart_fraction);

  const YAML::Node sim = root["sim"];
  check_keys(sim, "sim",
             {"umap_warmup_epochs", "n_neg_umap", "bce_neg_ratio", "eq_samples",
              "kl_samples", "mask_aggregation", "dp_enabled", "participation",
              "mlp_hidden", "min_dist", "spread", "sigma_kern", "mrr_k", "dp_delta"});
  get(sim, "sim", "umap_warmup_epochs", c.sim.umap_warmup_epochs);
  get(sim, "sim", "n_neg_umap", c.sim.n_neg_umap);
  get(sim, "sim", "bce_neg_ratio", c.sim.bce_neg_ratio);
  get(sim, "sim", "eq_samples", c.sim.eq_samples);
  get(sim, "sim", "kl_samples", c.sim.kl_samples);
  get(sim, "sim", "mask_aggregation", c.sim.mask_aggregation);
  get(sim, "sim", "dp_enabled", c.sim.dp_enabled);
  get(sim, "sim", "participation", c.sim.participation);
  get(sim, "sim", "mlp_hidden", c.sim.mlp_hidden);
  get(sim, "sim", "min_dist", c.sim.min_dist);
  get(sim, "sim", "spread", c.sim.spread);
  get(sim, "sim", "sigma_kern", c.sim.sigma_kern);
  get(sim, "sim", "mrr_k", c.sim.mrr_k);
  get(sim, "sim", "dp_delta", c.sim.dp_delta);

  const YAML::Node abl = root["ablation"];
  check_keys(abl, "ablation",
             {"aggregate_markers", "use_proposals", "pseudo_to_bce", "pseudo_to_nll"});
  get(abl, "ablation", "aggregate_markers", c.ablation.aggregate_markers);
  get(abl, "ablation", "use_proposals", c.ablation.use_proposals);
  get(abl, "ablation", "pseudo_to_bce", c.ablation.pseudo_to_bce);
  get(abl, "ablation", "pseudo_to_nll", c.ablation.pseudo_to_nll);

  const YAML::Node prop = root["proposer"];
  check_keys(prop, "proposer", {"precision", "skew", "budget", "probe_budget"});
  get(prop, "proposer", "precision", c.proposer.precision);
  get(prop, "proposer", "skew", c.proposer.skew);
  get(prop, "proposer", "budget", c.proposer.budget);
  get(prop, "proposer", "probe_budget", c.proposer.probe_budget);

  get_ints(root, "", "seeds", c.seeds);
  get(root, "", "output_dir", c.output_dir);

  validate(c);
  return c;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile&) {
    throw std::invalid_argument("config: cannot open " + path);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return from_yaml(root);
}

ExperimentConfig parse_config_string(const std::string& yaml) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return from_yaml(root);
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "model:\n";
  o << "  gnn: " << c.model.gnn << "\n";
  o << "  hidden: " << c.model.hidden << "\n";
  o << "  umap_dim: " << c.model.umap_dim << "\n";
  o << "  neighbors: " << c.model.neighbors << "\n";
  o << "  markers_pos: " << c.model.markers_pos << "\n";
  o << "  markers_neg: " << c.model.markers_neg << "\n";
  o << "  align_weight: " << fmt(c.model.align_weight) << "\n";
  o << "  umap_weight: " << fmt(c.model.umap_weight) << "\n";
  o << "  kl_weight: " << fmt(c.model.kl_weight) << "\n";
  o << "train:\n";
  o << "  rounds: " << c.train.rounds << "\n";
  o << "  local_epochs: " << c.train.local_epochs << "\n";
  o << "  batch_pairs: " << c.train.batch_pairs << "\n";
  o << "  lr_gnn_umap: " << fmt(c.train.lr_gnn_umap) << "\n";
  o << "  lr_adapter: " << fmt(c.train.lr_adapter) << "\n";
  o << "privacy:\n";
  o << "  clip: " << fmt(c.privacy.clip) << "\n";
  o << "  noise_sigma_dp: " << fmt(c.privacy.noise_sigma_dp) << "\n";
  o << "  sampling_rate: " << fmt(c.privacy.sampling_rate) << "\n";
  o << "calibration:\n";
  o << "  use_temperature: " << (c.calibration.use_temperature ? "true" : "false") << "\n";
  o << "  threshold_tau: " << fmt(c.calibration.threshold_tau) << "\n";
  o << "federation:\n";
  o << "  client_sampling: [";
  for (std::size_t i = 0; i < c.federation.client_sampling.size(); ++i)
    o << (i ? ", " : "") << fmt(c.federation.client_sampling[i]);
  o << "]\n";
  o << "data:\n";
  o << "  source: " << c.data.source << "\n";
  if (!c.data.path.empty()) o << "  path: " << c.data.path << "\n";
  o << "  nodes: " << c.data.nodes << "\n";
  o << "  classes: " << c.data.classes << "\n";
  o << "  feature_dim: " << c.data.feature_dim << "\n";
  o << "  intra_p: " << fmt(c.data.intra_p) << "\n";
  o << "  inter_p: " << fmt(c.data.inter_p) << "\n";
  o << "  text_vocab: " << c.data.text_vocab << "\n";
  o << "  n_clients: " << c.data.n_clients << "\n";
  o << "  label_skew_alpha: " << fmt(c.data.label_skew_alpha) << "\n";
  o << "  fewshot_k: " << c.data.fewshot_k << "\n";
  o << "  coldstart_fraction: " << fmt(c.data.coldstart_fraction) << "\n";
  o << "sim:\n";
  o << "  umap_warmup_epochs: " << c.sim.umap_warmup_epochs << "\n";
  o << "  n_neg_umap: " << c.sim.n_neg_umap << "\n";
  o << "  bce_neg_ratio: " << fmt(c.sim.bce_neg_ratio) << "\n";
  o << "  eq_samples: " << c.sim.eq_samples << "\n";
  o << "  kl_samples: " << c.sim.kl_samples << "\n";
  o << "  mask_aggregation: " << (c.sim.mask_aggregation ? "true" : "false") << "\n";
  o << "  dp_enabled: " << (c.sim.dp_enabled ? "true" : "false") << "\n";
  o << "  participation: " << fmt(c.sim.participation) << "\n";
  o << "  mlp_hidden: " << c.sim.mlp_hidden << "\n";
  o << "  min_dist: " << fmt(c.sim.min_dist) << "\n";
  o << "  spread: " << fmt(c.sim.spread) << "\n";
  o << "  sigma_kern: " << fmt(c.sim.sigma_kern) << "\n";
  o << "  mrr_k: " << c.sim.mrr_k << "\n";
  o << "  dp_delta: " << fmt(c.sim.dp_delta) << "\n";
  o << "ablation:\n";
  o << "  aggregate_markers: " << (c.ablation.aggregate_markers ? "true" : "false") << "\n";
  o << "  use_proposals: " << (c.ablation.use_proposals ? "true" : "false") << "\n";
  o << "  pseudo_to_bce: " << (c.ablation.pseudo_to_bce ? "true" : "false") << "\n";
  o << "  pseudo_to_nll: " << (c.ablation.pseudo_to_nll ? "true" : "false") << "\n";
  o << "proposer:\n";
  o << "  precision: " << fmt(c.proposer.precision) << "\n";
  o << "  skew: " << fmt(c.proposer.skew) << "\n";
  o << "  budget: " << c.proposer.budget << "\n";
  o << "  probe_budget: " << c.proposer.probe_budget << "\n";
  o << "seeds: [";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? ", " : "") << c.seeds[i];
  o << "]\n";
  o << "output_dir: " << c.output_dir << "\n";
  return o.str();
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  return hash_str(serialize_config(c));
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace lgdumap
