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

#include "lgdumap/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>

#include "lgdumap/csv.hpp"
#include "lgdumap/llmguide.hpp"
#include "lgdumap/metrics.hpp"
#include "lgdumap/privacy.hpp"

namespace lgdumap {

namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
  return {m, s};
}

std::string now_string() {
  std::time_t t = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

}  // namespace

TrainSettings settings_from_config(const ExperimentConfig& cfg,
                                   std::uint64_t seed) {
  TrainSettings s;
  s.model.dims.feature_dim = cfg.data.feature_dim;
  s.model.dims.hidden = cfg.model.hidden;
  s.model.dims.text_dim = cfg.model.umap_dim;  // alignment is in output space
  s.model.dims.umap_dim = cfg.model.umap_dim;
  s.model.dims.mlp_hidden = cfg.sim.mlp_hidden;
  s.model.dims.n_classes = std::max(2, cfg.data.classes);
  s.model.markers_pos = cfg.model.markers_pos;
  s.model.markers_neg = cfg.model.markers_neg;
  s.model.sigma_kern = cfg.sim.sigma_kern;
  s.model.min_dist = cfg.sim.min_dist;
  s.model.spread = cfg.sim.spread;
  s.neighbors = cfg.model.neighbors;
  s.weights.lambda = cfg.model.kl_weight;
  s.weights.gamma = cfg.model.align_weight;
  s.weights.eta = cfg.model.umap_weight;
  s.rounds = cfg.train.rounds;
  s.local_epochs = cfg.train.local_epochs;
  s.batch_pairs = cfg.train.batch_pairs;
  s.lr = cfg.train.lr_gnn_umap;
  s.umap_warmup_epochs = cfg.sim.umap_warmup_epochs;
  s.n_neg_umap = cfg.sim.n_neg_umap;
  s.bce_neg_ratio = cfg.sim.bce_neg_ratio;
  s.eq_samples = cfg.sim.eq_samples;
  s.kl_samples = cfg.sim.kl_samples;
  s.participation = cfg.sim.participation;
  s.dp_on = cfg.sim.dp_enabled;
  s.dp.clip = cfg.privacy.clip;
  s.dp.noise_sigma_dp = cfg.privacy.noise_sigma_dp;
  s.dp.delta = cfg.sim.dp_delta;
  s.dp.sampling_rate = cfg.sim.participation;
  s.dp.rounds = std::max(1, cfg.train.rounds);
  s.mask_aggregation = cfg.sim.mask_aggregation;
  s.aggregate = cfg.ablation.aggregate_markers;
  s.use_proposals = cfg.ablation.use_proposals;
  s.proposer.precision = cfg.proposer.precision;
  s.proposer.skew = cfg.proposer.skew;
  s.proposer.budget = cfg.proposer.budget;
  s.proposer.probe_budget = cfg.proposer.probe_budget;
  s.proposer.seed = derive_seed(seed, "proposer-root");
  s.use_temperature = cfg.calibration.use_temperature;
  s.tau = cfg.calibration.threshold_tau;
  s.pseudo_to_bce = cfg.ablation.pseudo_to_bce;
  s.pseudo_to_nll = cfg.ablation.pseudo_to_nll;
  s.mrr_k = cfg.sim.mrr_k;
  s.seed = seed;
  return s;
}

std::vector<ClientGraph> build_client_graphs(const ExperimentConfig& cfg,
                                             std::uint64_t seed) {
  std::vector<ClientGraph> clients;
  if (cfg.data.source == "dir") {
    for (int k = 0;; ++k) {
      std::string dir = cfg.data.path + "/client_" + std::to_string(k);
      if (!fs::exists(dir)) break;
      clients.push_back(load_graph(dir));
    }
    if (clients.empty())
      throw std::runtime_error("data.path has no client_<k> directories: " + cfg.data.path);
    return clients;
  }

  ClientGraph global = synth_graph(cfg.data.nodes, cfg.data.classes,
                                   cfg.data.intra_p, cfg.data.inter_p,
                                   cfg.data.feature_dim, cfg.data.text_vocab,
                                   derive_seed(seed, "synth-data"));
  SplitConfig split;
  split.n_clients = cfg.data.n_clients;
  split.label_skew_alpha = cfg.data.label_skew_alpha;
  split.fewshot_k = cfg.data.fewshot_k;
  split.coldstart_fraction = cfg.data.coldstart_fraction;
  split.seed = derive_seed(seed, "partition");
  clients = partition_noniid(global, split);

  for (std::size_t k = 0; k < clients.size(); ++k) {
    int labeled = 0;
    for (int l : clients[k].labels) labeled += (l >= 0);
    int k_eff = std::min(cfg.data.fewshot_k, labeled);
    if (k_eff < cfg.data.fewshot_k)
      std::cerr << "client " << k << ": only " << labeled
                << " labeled nodes; clamping fewshot_k to " << k_eff << "\n";
    clients[k] = make_fewshot_split(clients[k], k_eff,
                                    derive_seed(seed, "fewshot", k));
    if (cfg.data.coldstart_fraction > 0.0)
      clients[k] = apply_coldstart(clients[k], cfg.data.coldstart_fraction,
                                   derive_seed(seed, "coldstart", k));
  }
  return clients;
}

SeedRunResult run_training_seed(const ExperimentConfig& cfg, int seed,
                                const std::string& out_dir) {
  const std::string seed_dir = out_dir + "/seed_" + std::to_string(seed);
  fs::create_directories(seed_dir);
  fs::create_directories(seed_dir + "/models");

  TrainSettings s = settings_from_config(cfg, static_cast<std::uint64_t>(seed));
  std::vector<ClientState> clients =
      make_clients(build_client_graphs(cfg, static_cast<std::uint64_t>(seed)), s);
  ServerState server =
      ServerState::init(s.model.markers_pos, s.model.markers_neg, s.rounds);

  const std::string hash = std::to_string(config_hash(cfg));
  const std::string seed_str = std::to_string(seed);

  CsvWriter rounds_csv(seed_dir + "/rounds.csv",
                       "round,participants,agg_update_norm,epsilon,seed,config_hash");
  CsvWriter clients_csv(
      seed_dir + "/round_clients.csv",
      "round,client,n_nodes,n_train_nodes,n_train_edges,loss_total,loss_nll,"
      "loss_bce,loss_kl,loss_align,loss_umap,val_acc,test_acc,test_f1,"
      "n_proposed,n_admitted,admit_precision,temperature,grad_norm,drift_norm,"
      "payload_bytes,seed,config_hash");
  CsvWriter timing_csv(seed_dir + "/timing.csv", "round,elapsed_ms,timestamp");

  for (int t = 0; t < s.rounds; ++t) {
    auto t0 = std::chrono::steady_clock::now();
    RoundReport rep = run_round(server, clients, s);
    double round_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    rounds_csv.field(rep.round)
        .field(static_cast<int>(rep.participants.size()))
        .field(rep.agg_update_norm)
        .field(rep.epsilon)
        .field(seed_str)
        .field(hash);
    rounds_csv.end_row();
    for (const auto& c : rep.clients) {
      clients_csv.field(rep.round)
          .field(c.client_id)
          .field(c.n_nodes)
          .field(c.n_train_nodes)
          .field(c.n_train_edges)
          .field(c.losses.total)
          .field(c.losses.nll)
          .field(c.losses.bce)
          .field(c.losses.kl)
          .field(c.losses.align)
          .field(c.losses.umap)
          .field(c.val_acc)
          .field(c.test_acc)
          .field(c.test_f1)
          .field(c.n_proposed)
          .field(c.n_admitted)
          .field(c.admit_precision)
          .field(c.temperature)
          .field(c.grad_norm)
          .field(c.drift_norm)
          .field(static_cast<unsigned long>(c.payload_bytes))
          .field(seed_str)
          .field(hash);
      clients_csv.end_row();
    }
    timing_csv.field(rep.round).field(round_ms).field(now_string());
    timing_csv.end_row();
  }

  // Post-training evaluation and exports.
  double epsilon = (s.dp_on && s.dp.noise_enabled())
                       ? accountant_epsilon(server.accountant, s.dp.delta)
                       : kInf;

  CsvWriter metrics_csv(seed_dir + "/metrics.csv",
                        "metric,scope,value,seed,config_hash");
  CsvWriter attack_csv(seed_dir + "/attack_inputs.csv",
                       "client,kind,member,loss,seed,config_hash");

  auto metric_row = [&](const std::string& name, const std::string& scope, double v) {
    metrics_csv.field(name).field(scope).field(v).field(seed_str).field(hash);
    metrics_csv.end_row();
  };

  SeedRunResult result;
  result.seed = seed;
  result.epsilon = epsilon;

  std::map<std::string, std::vector<double>> per_client;
  for (auto& cs : clients) {
    if (cs.last_z.rows() != cs.graph.n) continue;  // never participated
    ClientEvalResult ev =
        evaluate_client(cs, server.markers, server.polarity, s, true);
    std::string scope = "client_" + std::to_string(cs.id);
    metric_row("accuracy", scope, ev.test_acc);
    metric_row("micro_f1", scope, ev.test_f1);
    metric_row("val_accuracy", scope, ev.val_acc);
    metric_row("trustworthiness", scope, ev.trust);
    metric_row("continuity", scope, ev.continuity);
    metric_row("cka_text", scope, ev.cka_text);
    metric_row("procrustes_text", scope, ev.procrustes_text);
    metric_row("mrr", scope, ev.mrr);
    metric_row("hits_at_k", scope, ev.hits);
    per_client["accuracy"].push_back(ev.test_acc);
    per_client["micro_f1"].push_back(ev.test_f1);
    per_client["trustworthiness"].push_back(ev.trust);
    per_client["continuity"].push_back(ev.continuity);
    per_client["cka_text"].push_back(ev.cka_text);
    per_client["procrustes_text"].push_back(ev.procrustes_text);
    per_client["mrr"].push_back(ev.mrr);
    per_client["hits_at_k"].push_back(ev.hits);
    for (double l : ev.member_losses) {
      attack_csv.field(cs.id).field("edge").field(1).field(l).field(seed_str).field(hash);
      attack_csv.end_row();
      result.member_losses.push_back(l);
    }
    for (double l : ev.nonmember_losses) {
      attack_csv.field(cs.id).field("edge").field(0).field(l).field(seed_str).field(hash);
      attack_csv.end_row();
      result.nonmember_losses.push_back(l);
    }
    // Parameter snapshot in the flat named-tensor format.
    std::vector<std::pair<std::string, const MatrixXd*>> blocks;
    for (auto& [name, ptr] : cs.model.blocks()) blocks.emplace_back(name, ptr);
    save_named_tensors(blocks, seed_dir + "/models/client_" + std::to_string(cs.id) + ".tensors");
  }
  for (auto& [name, values] : per_client) {
    if (values.empty()) continue;
    auto [m, sd] = mean_std(values);
    metric_row(name, "mean", m);
    metric_row(name, "worst", worst_client(values));
    metric_row(name, "p10", percentile_10(values));
    (void)sd;
  }
  metric_row("epsilon", "server", epsilon);
  auto [acc_m, acc_sd] = mean_std(per_client["accuracy"]);
  auto [f1_m, f1_sd] = mean_std(per_client["micro_f1"]);
  (void)acc_sd;
  (void)f1_sd;
  result.test_acc_mean = acc_m;
  result.test_f1_mean = f1_m;

  // Final global markers (polarity, value).
  {
    CsvWriter markers_csv(seed_dir + "/markers_global.csv",
                          "polarity,value,seed,config_hash");
    for (Eigen::Index e = 0; e < server.markers.size(); ++e) {
      markers_csv
          .field(server.polarity[static_cast<std::size_t>(e)] > 0 ? "+1" : "-1")
          .field(server.markers(e))
          .field(seed_str)
          .field(hash);
      markers_csv.end_row();
    }
  }

  // Calibration sweep over the admission thresholds, on fresh proposals.
  {
    CsvWriter cal_csv(seed_dir + "/calibration.csv",
                      "client,tau,n_admitted,precision,ece_pre,ece_post,"
                      "brier_pre,brier_post,temperature,seed,config_hash");
    const std::vector<double> sweep = {0.6, 0.7, 0.8, 0.9};
    for (auto& cs : clients) {
      if (!cs.initialized || s.proposer.budget <= 0) continue;
      MockOracleProposer prop = s.proposer;
      prop.seed = derive_seed(s.proposer.seed, "client-proposer", cs.id);
      std::vector<int> label_candidates = augmentable_label_nodes(cs.graph);
      std::vector<Proposal> proposals = propose(
          cs.graph, prop, static_cast<std::uint64_t>(s.rounds), &label_candidates);
      std::vector<double> probe_logits;
      std::vector<int> probe_truth;
      for (const auto& p : proposals)
        if (p.probe) {
          probe_logits.push_back(p.raw_logit);
          probe_truth.push_back(p.ground_truth ? 1 : 0);
        }
      double temperature = 1.0;
      bool any0 = false, any1 = false;
      for (int t : probe_truth) (t ? any1 : any0) = true;
      if (s.use_temperature && any0 && any1)
        temperature = fit_temperature(probe_logits, probe_truth);
      double ece_pre = 0, ece_post = 0, brier_pre = 0, brier_post = 0;
      if (!probe_logits.empty()) {
        std::vector<double> cp, cq;
        for (double l : probe_logits) {
          cp.push_back(1.0 / (1.0 + std::exp(-l)));
          cq.push_back(1.0 / (1.0 + std::exp(-l / temperature)));
        }
        ece_pre = ece(cp, probe_truth);
        ece_post = ece(cq, probe_truth);
        brier_pre = brier(cp, probe_truth);
        brier_post = brier(cq, probe_truth);
      }
      for (double tau : sweep) {
        std::vector<Proposal> decided = admit(proposals, CalibrationModel{temperature, tau});
        AdmitStats st = admit_stats(decided);
        cal_csv.field(cs.id)
            .field(tau)
            .field(st.n_admitted)
            .field(st.precision)
            .field(ece_pre)
            .field(ece_post)
            .field(brier_pre)
            .field(brier_post)
            .field(temperature)
            .field(seed_str)
            .field(hash);
        cal_csv.end_row();
      }
    }
  }
  return result;
}

int cmd_train(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  {
    std::ofstream out(cfg.output_dir + "/config.yaml");
    out << serialize_config(cfg);
  }
  {
    CsvWriter meta(cfg.output_dir + "/run_meta.csv", "key,value");
    meta.field("config_hash").field(std::to_string(config_hash(cfg)));
    meta.end_row();
    meta.field("timestamp").field(now_string());
    meta.end_row();
    meta.field("n_seeds").field(static_cast<int>(cfg.seeds.size()));
    meta.end_row();
  }

  std::vector<double> accs, f1s;
  for (int seed : cfg.seeds) {
    SeedRunResult r = run_training_seed(cfg, seed, cfg.output_dir);
    std::cout << "seed " << seed << ": accuracy=" << r.test_acc_mean
              << " micro_f1=" << r.test_f1_mean << " epsilon=" << r.epsilon << "\n";
    accs.push_back(r.test_acc_mean);
    f1s.push_back(r.test_f1_mean);
  }
  auto [am, as] = mean_std(accs);
  auto [fm, fsd] = mean_std(f1s);
  {
    CsvWriter summary(cfg.output_dir + "/summary.csv", "metric,mean,std,n_seeds");
    summary.field("accuracy").field(am).field(as).field(static_cast<int>(accs.size()));
    summary.end_row();
    summary.field("micro_f1").field(fm).field(fsd).field(static_cast<int>(f1s.size()));
    summary.end_row();
  }
  std::cout << "summary over " << accs.size() << " seeds: accuracy=" << am
            << "+-" << as << " micro_f1=" << fm << "+-" << fsd << "\n";
  return 0;
}

int cmd_partition(const ExperimentConfig& cfg) {
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.seeds.front());
  std::vector<ClientGraph> clients = build_client_graphs(cfg, seed);
  fs::create_directories(cfg.output_dir);
  for (std::size_t k = 0; k < clients.size(); ++k)
    save_graph(clients[k], cfg.output_dir + "/client_" + std::to_string(k));
  std::cout << "wrote " << clients.size() << " client graphs under "
            << cfg.output_dir << "\n";
  return 0;
}

int cmd_accountant(const ExperimentConfig& cfg) {
  const double q = cfg.privacy.sampling_rate;
  const int rounds = std::max(1, cfg.train.rounds);
  const double delta = cfg.sim.dp_delta;
  std::cout << "setting,sigma,round,epsilon\n";
  const std::vector<std::pair<std::string, double>> settings = {
      {"no_dp", 0.0}, {"dp_a", 0.6}, {"dp_b", 0.9}, {"dp_c", 1.3}};
  for (const auto& [name, sigma] : settings) {
    AccountantState st = AccountantState::make_default();
    for (int t = 1; t <= rounds; ++t) {
      accountant_step(st, q, sigma);
      double eps = accountant_epsilon(st, delta);
      std::cout << name << "," << sigma << "," << t << ",";
      if (std::isinf(eps))
        std::cout << "inf\n";
      else
        std::cout << eps << "\n";
    }
  }
  return 0;
}

int cmd_attack(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) {
    std::cerr << "attack: need at least one run directory\n";
    return 1;
  }
  std::cout << "run,sigma,epsilon,auroc_mean,auroc_std,n_seeds\n";
  for (const auto& dir : run_dirs) {
    ExperimentConfig cfg = parse_config(dir + "/config.yaml");
    std::vector<double> aurocs;
    double epsilon = kInf;
    for (int seed : cfg.seeds) {
      std::string path = dir + "/seed_" + std::to_string(seed) + "/attack_inputs.csv";
      if (!fs::exists(path)) continue;
      CsvTable t = read_csv(path);
      int mcol = t.col("member"), lcol = t.col("loss");
      std::vector<double> member, nonmember;
      for (const auto& row : t.rows) {
        double loss = std::stod(row[static_cast<std::size_t>(lcol)]);
        if (row[static_cast<std::size_t>(mcol)] == "1")
          member.push_back(loss);
        else
          nonmember.push_back(loss);
      }
      if (member.empty() || nonmember.empty()) continue;
      aurocs.push_back(mi_attack(member, nonmember));
      std::string mpath = dir + "/seed_" + std::to_string(seed) + "/metrics.csv";
      if (fs::exists(mpath)) {
        CsvTable mt = read_csv(mpath);
        int name_c = mt.col("metric"), scope_c = mt.col("scope"), v_c = mt.col("value");
        for (const auto& row : mt.rows)
          if (row[static_cast<std::size_t>(name_c)] == "epsilon" &&
              row[static_cast<std::size_t>(scope_c)] == "server")
            epsilon = row[static_cast<std::size_t>(v_c)] == "inf"
                          ? kInf
                          : std::stod(row[static_cast<std::size_t>(v_c)]);
      }
    }
    auto [m, sd] = mean_std(aurocs);
    std::cout << dir << ","
              << (cfg.sim.dp_enabled ? cfg.privacy.noise_sigma_dp : 0.0) << ",";
    if (std::isinf(epsilon))
      std::cout << "inf";
    else
      std::cout << epsilon;
    std::cout << "," << m << "," << sd << "," << aurocs.size() << "\n";
  }
  return 0;
}

int cmd_metrics(const std::string& run_dir) {
  ExperimentConfig cfg = parse_config(run_dir + "/config.yaml");
  std::map<std::pair<std::string, std::string>, std::vector<double>> agg;
  for (int seed : cfg.seeds) {
    std::string path = run_dir + "/seed_" + std::to_string(seed) + "/metrics.csv";
    if (!fs::exists(path)) continue;
    CsvTable t = read_csv(path);
    int name_c = t.col("metric"), scope_c = t.col("scope"), v_c = t.col("value");
    for (const auto& row : t.rows) {
      const std::string& scope = row[static_cast<std::size_t>(scope_c)];
      if (scope.rfind("client_", 0) == 0) continue;  // aggregate rows only
      const std::string& raw = row[static_cast<std::size_t>(v_c)];
      double v = raw == "inf" ? kInf : std::stod(raw);
      agg[{row[static_cast<std::size_t>(name_c)], scope}].push_back(v);
    }
  }
  std::cout << "metric,scope,mean,std,n_seeds\n";
  for (const auto& [key, values] : agg) {
    auto [m, sd] = mean_std(values);
    std::cout << key.first << "," << key.second << "," << m << "," << sd << ","
              << values.size() << "\n";
  }
  return 0;
}

int cmd_report(const std::string& run_dir) {
  ExperimentConfig cfg = parse_config(run_dir + "/config.yaml");
  fs::create_directories(run_dir + "/report");

  // Metric table (mean +- std over seeds of the per-seed aggregates).
  cmd_metrics(run_dir);

  // Cost table: client->server kilobytes per round and time per round.
  {
    std::vector<double> kb_per_round, ms_per_round, proposals_per_round;
    for (int seed : cfg.seeds) {
      std::string dir = run_dir + "/seed_" + std::to_string(seed);
      if (fs::exists(dir + "/round_clients.csv")) {
        CsvTable t = read_csv(dir + "/round_clients.csv");
        int round_c = t.col("round"), bytes_c = t.col("payload_bytes"),
            prop_c = t.col("n_proposed");
        std::map<int, double> bytes_by_round;
        std::map<int, double> props_by_round;
        for (const auto& row : t.rows) {
          int r = std::stoi(row[static_cast<std::size_t>(round_c)]);
          bytes_by_round[r] += std::stod(row[static_cast<std::size_t>(bytes_c)]);
          props_by_round[r] += std::stod(row[static_cast<std::size_t>(prop_c)]);
        }
        for (const auto& [r, b] : bytes_by_round) kb_per_round.push_back(b / 1024.0);
        for (const auto& [r, p] : props_by_round) proposals_per_round.push_back(p);
      }
      if (fs::exists(dir + "/timing.csv")) {
        CsvTable t = read_csv(dir + "/timing.csv");
        int ms_c = t.col("elapsed_ms");
        for (const auto& row : t.rows)
          ms_per_round.push_back(std::stod(row[static_cast<std::size_t>(ms_c)]));
      }
    }
    auto [kb_m, kb_s] = mean_std(kb_per_round);
    auto [ms_m, ms_s] = mean_std(ms_per_round);
    auto [pr_m, pr_s] = mean_std(proposals_per_round);
    CsvWriter cost(run_dir + "/report/cost.csv", "quantity,mean,std");
    cost.field("kb_per_round").field(kb_m).field(kb_s);
    cost.end_row();
    cost.field("ms_per_round").field(ms_m).field(ms_s);
    cost.end_row();
    // The proposal count stands in for backend token counts, which have no
    // meaning for the mock proposer.
    cost.field("proposals_per_round").field(pr_m).field(pr_s);
    cost.end_row();
    std::cout << "cost: kb_per_round=" << kb_m << " ms_per_round=" << ms_m
              << " proposals_per_round=" << pr_m << "\n";
  }

  // Calibration table over the tau sweep.
  {
    std::map<double, std::vector<double>> admitted, precision, ece_post;
    for (int seed : cfg.seeds) {
      std::string path = run_dir + "/seed_" + std::to_string(seed) + "/calibration.csv";
      if (!fs::exists(path)) continue;
      CsvTable t = read_csv(path);
      int tau_c = t.col("tau"), adm_c = t.col("n_admitted"), pre_c = t.col("precision"),
          ece_c = t.col("ece_post");
      for (const auto& row : t.rows) {
        double tau = std::stod(row[static_cast<std::size_t>(tau_c)]);
        admitted[tau].push_back(std::stod(row[static_cast<std::size_t>(adm_c)]));
        precision[tau].push_back(std::stod(row[static_cast<std::size_t>(pre_c)]));
        ece_post[tau].push_back(std::stod(row[static_cast<std::size_t>(ece_c)]));
      }
    }
    CsvWriter cal(run_dir + "/report/calibration.csv",
                  "tau,admitted_mean,precision_mean,ece_post_mean");
    for (const auto& [tau, values] : admitted) {
      auto [am, as_] = mean_std(values);
      auto [pm, ps] = mean_std(precision[tau]);
      auto [em, es] = mean_std(ece_post[tau]);
      (void)as_;
      (void)ps;
      (void)es;
      cal.field(tau).field(am).field(pm).field(em);
      cal.end_row();
      std::cout << "tau=" << tau << ": admitted=" << am << " precision=" << pm
                << " ece_post=" << em << "\n";
    }
  }

  // Worst-client / percentile table for accuracy.
  {
    std::vector<double> worst, p10;
    for (int seed : cfg.seeds) {
      std::string path = run_dir + "/seed_" + std::to_string(seed) + "/metrics.csv";
      if (!fs::exists(path)) continue;
      CsvTable t = read_csv(path);
      int name_c = t.col("metric"), scope_c = t.col("scope"), v_c = t.col("value");
      for (const auto& row : t.rows) {
        if (row[static_cast<std::size_t>(name_c)] != "accuracy") continue;
        if (row[static_cast<std::size_t>(scope_c)] == "worst")
          worst.push_back(std::stod(row[static_cast<std::size_t>(v_c)]));
        if (row[static_cast<std::size_t>(scope_c)] == "p10")
          p10.push_back(std::stod(row[static_cast<std::size_t>(v_c)]));
      }
    }
    auto [wm, ws] = mean_std(worst);
    auto [pm, ps] = mean_std(p10);
    CsvWriter dist(run_dir + "/report/distribution.csv", "quantity,mean,std");
    dist.field("accuracy_worst_client").field(wm).field(ws);
    dist.end_row();
    dist.field("accuracy_p10").field(pm).field(ps);
    dist.end_row();
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  GradCheckReport rep = run_gradcheck(seed);
  std::cout << "term,block,max_rel_err\n";
  for (const auto& e : rep.entries)
    std::cout << e.term << "," << e.block << "," << e.max_rel_err << "\n";
  std::cout << "worst=" << rep.worst << " tol=1e-4 => "
            << (rep.pass() ? "PASS" : "FAIL") << "\n";
  return rep.pass() ? 0 : 2;
}

}  // namespace lgdumap
