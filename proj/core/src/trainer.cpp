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

#include "lgdumap/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

#include "lgdumap/metrics.hpp"

namespace lgdumap {

namespace {

std::uint64_t pack(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

std::vector<std::pair<int, int>> mask_edge_pairs(const ClientGraph& g, Mask m) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < g.edges.size(); ++i)
    if (g.edge_mask[i] == m) out.emplace_back(g.edges[i].u, g.edges[i].v);
  return out;
}

std::vector<Edge> structure_edges(const ClientGraph& g,
                                  const std::vector<std::pair<int, int>>& pseudo) {
  std::vector<Edge> edges = g.edges_with_mask(Mask::Train);
  for (auto [u, v] : pseudo) edges.push_back(Edge{u, v, -1});
  return edges;
}

struct ForwardValues {
  MatrixXd fused;
  MatrixXd z;
};

ForwardValues forward_values(const ClientState& cs, const std::vector<Edge>& edges) {
  ad::Tape tape;
  LiftedModel lm = lift_model(tape, cs.model, false);
  ad::Var g = gnn_forward_t(tape, lm, cs.graph, edges, Act::Tanh);
  ad::Var fused = fuse_t(tape, lm, g, cs.text_emb, cs.has_text);
  ad::Var z = umap_forward_t(tape, lm, fused);
  return {tape.value(fused), tape.value(z)};
}

std::vector<std::pair<int, int>> sample_non_edges(
    const ClientGraph& g, const std::set<std::pair<int, int>>& exclude,
    std::size_t count, Rng& rng) {
  std::vector<std::pair<int, int>> out;
  if (g.n < 2) return out;
  for (std::size_t t = 0; t < count; ++t) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      int u = rng.uniform_int(g.n);
      int v = rng.uniform_int(g.n);
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (exclude.count({u, v})) continue;
      out.emplace_back(u, v);
      break;
    }
  }
  return out;
}

std::set<std::pair<int, int>> all_edge_keys(const ClientGraph& g,
                                            const std::vector<std::pair<int, int>>& pseudo) {
  std::set<std::pair<int, int>> s;
  for (const auto& e : g.edges) s.insert({e.u, e.v});
  for (auto [u, v] : pseudo) s.insert({std::min(u, v), std::max(u, v)});
  return s;
}

std::vector<int> predict(const MatrixXd& Z, const ClassifierHead& head) {
  MatrixXd logits = (Z * head.w).rowwise() + head.b.row(0);
  std::vector<int> out(static_cast<std::size_t>(Z.rows()));
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    Eigen::Index best;
    logits.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double masked_accuracy(const std::vector<int>& preds, const ClientGraph& g,
                       const std::vector<int>& nodes) {
  if (nodes.empty()) return 0.0;
  int correct = 0;
  for (int i : nodes)
    correct += preds[static_cast<std::size_t>(i)] == g.labels[static_cast<std::size_t>(i)];
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

MatrixXd standard_normal_matrix(int rows, int cols, Rng& rng) {
  MatrixXd m(rows, cols);
  // Row-major fill so the draw order matches the scalar KL estimator.
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

double global_grad_norm(const std::vector<MatrixXd>& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += g.squaredNorm();
  return std::sqrt(s);
}

}  // namespace

std::vector<int> augmentable_label_nodes(const ClientGraph& g) {
  std::vector<int> test = g.nodes_with_mask(Mask::Test);
  std::vector<int> out;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (i % 2 == 0 && g.labels[static_cast<std::size_t>(test[i])] >= 0)
      out.push_back(test[i]);
  return out;
}

std::vector<int> eval_label_nodes(const ClientGraph& g) {
  std::vector<int> test = g.nodes_with_mask(Mask::Test);
  std::vector<int> out;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (i % 2 == 1 && g.labels[static_cast<std::size_t>(test[i])] >= 0)
      out.push_back(test[i]);
  return out;
}

std::vector<ClientState> make_clients(std::vector<ClientGraph> graphs,
                                      const TrainSettings& s) {
  std::vector<ClientState> out;
  out.reserve(graphs.size());
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    ClientState cs;
    cs.id = static_cast<int>(k);
    cs.graph = std::move(graphs[k]);
    cs.opt = Adam(s.lr);
    out.push_back(std::move(cs));
  }
  return out;
}

namespace {

void ensure_initialized(ClientState& cs, const TrainSettings& s) {
  if (cs.initialized) return;
  ModelConfig cfg = s.model;
  cfg.dims.feature_dim = cs.graph.feature_dim();
  cfg.dims.n_classes = std::max(2, cs.graph.n_classes);
  cs.model = ClientModel::init(cfg, derive_seed(s.seed, "model-init", cs.id));
  // The text encoder is shared infrastructure: one seed for every client.
  auto [h, has] = embed_texts(cs.graph, cfg.dims.text_dim,
                              derive_seed(s.seed, "text-encoder"));
  cs.text_emb = std::move(h);
  cs.has_text = std::move(has);
  cs.opt = Adam(s.lr);
  cs.initialized = true;
}

struct StepPlan {
  ObjectiveInputs inputs;
  std::vector<std::int8_t> polarity;
  double sigma_kern;
  MatrixXd xi_bce, xi_kl;
};

// One optimization step on the full objective; returns the tape losses.
LossBundle objective_step(ClientState& cs, const TrainSettings& s,
                          const std::vector<Edge>& edges, const StepPlan& plan,
                          const MarkerPrior& prior, double* grad_norm_out) {
  ad::Tape tape;
  LiftedModel lm = lift_model(tape, cs.model, true);
  ad::Var g = gnn_forward_t(tape, lm, cs.graph, edges, Act::Tanh);
  ad::Var fused = fuse_t(tape, lm, g, cs.text_emb, cs.has_text);
  ad::Var z = umap_forward_t(tape, lm, fused);
  ObjectiveVars vars =
      client_objective_t(tape, lm, z, plan.inputs, plan.polarity,
                         plan.sigma_kern, plan.xi_bce, plan.xi_kl, prior, s.weights);
  tape.backward(vars.total);

  auto blocks = cs.model.blocks();
  std::vector<MatrixXd> grads;
  grads.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const MatrixXd& gr = tape.grad(lm.vars[i].second);
    if (!gr.allFinite())
      throw std::runtime_error("non-finite gradient in block " + blocks[i].first);
    grads.push_back(gr);
  }
  double norm = global_grad_norm(grads);
  if (grad_norm_out) *grad_norm_out = norm;
  if (s.dp_on && s.dp.clip > 0.0 && norm > s.dp.clip) {
    double f = s.dp.clip / norm;
    for (auto& gr : grads) gr *= f;
  }
  cs.opt.step(blocks, grads);
  cs.model.marker_mu = cs.model.marker_mu.cwiseMax(0.0);

  LossBundle out;
  out.total = tape.scalar_value(vars.total);
  out.nll = tape.scalar_value(vars.nll);
  out.bce = tape.scalar_value(vars.bce);
  out.kl = tape.scalar_value(vars.kl);
  out.align = tape.scalar_value(vars.align);
  out.umap = tape.scalar_value(vars.umap);
  return out;
}

// UMAP-only warmup step over all encoder blocks.
void warmup_step(ClientState& cs, const TrainSettings& s,
                 const std::vector<Edge>& edges, const UmapBatch& batch) {
  ad::Tape tape;
  LiftedModel lm = lift_model(tape, cs.model, true);
  ad::Var g = gnn_forward_t(tape, lm, cs.graph, edges, Act::Tanh);
  ad::Var fused = fuse_t(tape, lm, g, cs.text_emb, cs.has_text);
  ad::Var z = umap_forward_t(tape, lm, fused);
  ad::Var loss = tape.scale(
      umap_loss_t(tape, z, batch, cs.model.umap.curve_a, cs.model.umap.curve_b),
      s.weights.eta);
  if (!tape.requires_grad(loss)) return;
  tape.backward(loss);
  auto blocks = cs.model.blocks();
  std::vector<MatrixXd> grads;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    MatrixXd gr = tape.grad(lm.vars[i].second);
    if (!gr.allFinite())
      throw std::runtime_error("non-finite gradient in block " + blocks[i].first);
    grads.push_back(std::move(gr));
  }
  double norm = global_grad_norm(grads);
  if (s.dp_on && s.dp.clip > 0.0 && norm > s.dp.clip) {
    double f = s.dp.clip / norm;
    for (auto& gr : grads) gr *= f;
  }
  cs.opt.step(blocks, grads);
  cs.model.marker_mu = cs.model.marker_mu.cwiseMax(0.0);
}

ClientRoundReport client_round(ClientState& cs, const ServerState& server,
                               const TrainSettings& s, int round,
                               ClientUpdate* update_out) {
  const auto t_start = std::chrono::steady_clock::now();
  ensure_initialized(cs, s);
  ClientRoundReport rep;
  rep.client_id = cs.id;
  rep.n_nodes = cs.graph.n;

  // Re-anchor the posterior mean on the broadcast markers; variances stay
  // personal. Local-only ablations keep their own markers.
  if (s.aggregate && cs.markers_initialized)
    cs.model.marker_mu = server.markers;

  std::vector<std::pair<int, int>> train_edges = mask_edge_pairs(cs.graph, Mask::Train);
  std::vector<int> train_nodes = cs.graph.nodes_with_mask(Mask::Train);
  rep.n_train_nodes = static_cast<int>(train_nodes.size());
  rep.n_train_edges = static_cast<int>(train_edges.size());

  std::vector<Edge> edges = structure_edges(cs.graph, cs.pseudo_edges);
  const int k_eff = std::min(s.neighbors, cs.graph.n - 1);

  auto neighbor_graph = [&](const MatrixXd& fused) {
    NeighborGraph ng;
    if (k_eff >= 1) ng = build_knn(fused, k_eff, edges);
    return ng;
  };

  ForwardValues fv = forward_values(cs, edges);
  NeighborGraph ng = neighbor_graph(fv.fused);

  // Alg. line 3: refresh the manifold on the fuzzy set before anything else.
  for (int epoch = 0; epoch < s.umap_warmup_epochs; ++epoch) {
    if (ng.pairs.empty()) break;
    const int steps = std::max<int>(
        1, static_cast<int>((ng.pairs.size() + s.batch_pairs - 1) / s.batch_pairs));
    for (int st = 0; st < steps; ++st) {
      Rng rng(derive_seed(s.seed, "warmup", pack(round, cs.id), pack(epoch, st)));
      UmapBatch batch =
          sample_umap_batch(ng, s.batch_pairs, s.n_neg_umap, cs.graph.n, rng);
      warmup_step(cs, s, edges, batch);
    }
  }

  // First participation: fit markers from the observed distance samples.
  if (!cs.markers_initialized) {
    ForwardValues cur = forward_values(cs, edges);
    std::vector<double> pos_d, neg_d;
    for (auto [u, v] : train_edges)
      pos_d.push_back((cur.z.row(u) - cur.z.row(v)).norm());
    Rng rng(derive_seed(s.seed, "marker-init-neg", cs.id));
    auto excl = all_edge_keys(cs.graph, cs.pseudo_edges);
    auto non_edges = sample_non_edges(cs.graph, excl,
                                      std::max<std::size_t>(16, pos_d.size()), rng);
    for (auto [u, v] : non_edges)
      neg_d.push_back((cur.z.row(u) - cur.z.row(v)).norm());
    if (!pos_d.empty() && !neg_d.empty()) {
      MarkerInit init = init_markers(pos_d, neg_d, s.model.markers_pos,
                                     s.model.markers_neg, s.model.sigma_kern);
      cs.model.marker_mu = init.posterior.mu;
      for (Eigen::Index e = 0; e < cs.model.marker_logvar.rows(); ++e)
        cs.model.marker_logvar(e, 0) = std::log(init.posterior.var(e));
      cs.model.marker_polarity = init.posterior.polarity;
    }
    cs.markers_initialized = true;
  }

  // Alg. line 5: propose, calibrate on the verifiable probes, admit.
  if (s.use_proposals) {
    MockOracleProposer prop = s.proposer;
    prop.seed = derive_seed(s.proposer.seed, "client-proposer", cs.id);
    std::vector<int> label_candidates = augmentable_label_nodes(cs.graph);
    std::vector<Proposal> proposals =
        propose(cs.graph, prop, static_cast<std::uint64_t>(round), &label_candidates);
    rep.n_proposed = 0;
    for (const auto& p : proposals) rep.n_proposed += p.probe ? 0 : 1;

    std::vector<double> probe_logits;
    std::vector<int> probe_truth;
    for (const auto& p : proposals)
      if (p.probe) {
        probe_logits.push_back(p.raw_logit);
        probe_truth.push_back(p.ground_truth ? 1 : 0);
      }
    double temperature = 1.0;
    if (s.use_temperature && !probe_logits.empty()) {
      bool any0 = false, any1 = false;
      for (int t : probe_truth) (t ? any1 : any0) = true;
      if (any0 && any1) temperature = fit_temperature(probe_logits, probe_truth);
    }
    cs.temperature = temperature;
    rep.temperature = temperature;
    if (!probe_logits.empty()) {
      std::vector<double> conf_pre, conf_post;
      for (double l : probe_logits) {
        conf_pre.push_back(1.0 / (1.0 + std::exp(-l)));
        conf_post.push_back(1.0 / (1.0 + std::exp(-l / temperature)));
      }
      rep.ece_pre = ece(conf_pre, probe_truth);
      rep.ece_post = ece(conf_post, probe_truth);
      rep.brier_pre = brier(conf_pre, probe_truth);
      rep.brier_post = brier(conf_post, probe_truth);
    }

    CalibrationModel cal{temperature, s.tau};
    std::vector<Proposal> decided = admit(std::move(proposals), cal);
    AdmitStats stats = admit_stats(decided);
    rep.n_admitted = stats.n_admitted;
    rep.admit_precision = stats.precision;

    std::set<std::pair<int, int>> train_set(train_edges.begin(), train_edges.end());
    std::set<std::pair<int, int>> pseudo_set(cs.pseudo_edges.begin(), cs.pseudo_edges.end());
    std::set<int> pseudo_nodes;
    for (auto [n, l] : cs.pseudo_labels) pseudo_nodes.insert(n);
    bool new_edges = false;
    for (const auto& p : decided) {
      if (!p.accepted) continue;
      if (p.kind == Proposal::Kind::Edge) {
        std::pair<int, int> key{std::min(p.u, p.v), std::max(p.u, p.v)};
        if (train_set.count(key) || pseudo_set.count(key)) continue;
        cs.pseudo_edges.push_back(key);
        pseudo_set.insert(key);
        new_edges = true;
      } else {
        if (cs.graph.node_mask[static_cast<std::size_t>(p.node)] == Mask::Train) continue;
        if (pseudo_nodes.count(p.node)) continue;
        cs.pseudo_labels.emplace_back(p.node, p.payload);
        pseudo_nodes.insert(p.node);
      }
    }
    if (new_edges) {
      edges = structure_edges(cs.graph, cs.pseudo_edges);
      fv = forward_values(cs, edges);
      ng = neighbor_graph(fv.fused);
    }
  }

  // Alg. lines 6-7: fit the posterior and optimize the full objective.
  ObjectiveInputs base;
  base.train_nodes = train_nodes;
  for (int i : train_nodes) base.train_labels.push_back(cs.graph.labels[static_cast<std::size_t>(i)]);
  if (s.pseudo_to_nll)
    for (auto [node, label] : cs.pseudo_labels) {
      base.train_nodes.push_back(node);
      base.train_labels.push_back(label);
    }
  base.n_classes = std::max(2, cs.graph.n_classes);
  base.pos_edges = train_edges;
  if (s.pseudo_to_bce)
    for (auto [u, v] : cs.pseudo_edges) base.pos_edges.emplace_back(u, v);
  base.H = &cs.text_emb;
  for (int i = 0; i < cs.graph.n; ++i)
    if (cs.has_text[static_cast<std::size_t>(i)]) base.align_mask.push_back(i);
  base.curve_a = cs.model.umap.curve_a;
  base.curve_b = cs.model.umap.curve_b;

  const bool can_train = !base.train_nodes.empty() || !base.pos_edges.empty();
  LossBundle last_losses;
  double grad_norm = 0.0;
  if (can_train && s.local_epochs > 0) {
    Rng kl_rng(derive_seed(s.seed, "kl-xi", pack(round, cs.id)));
    MatrixXd xi_kl =
        standard_normal_matrix(cs.model.marker_mu.rows(), s.kl_samples, kl_rng);
    auto excl = all_edge_keys(cs.graph, cs.pseudo_edges);
    for (int epoch = 0; epoch < s.local_epochs; ++epoch) {
      Rng neg_rng(derive_seed(s.seed, "bce-neg", pack(round, cs.id), epoch));
      StepPlan plan;
      plan.inputs = base;
      plan.inputs.neg_edges = sample_non_edges(
          cs.graph, excl,
          static_cast<std::size_t>(std::llround(
              s.bce_neg_ratio * static_cast<double>(base.pos_edges.size()))),
          neg_rng);
      plan.polarity = cs.model.marker_polarity;
      plan.sigma_kern = cs.model.sigma_kern;
      plan.xi_kl = xi_kl;
      const int steps = std::max<int>(
          1, ng.pairs.empty()
                 ? 1
                 : static_cast<int>((ng.pairs.size() + s.batch_pairs - 1) / s.batch_pairs));
      for (int st = 0; st < steps; ++st) {
        Rng rng(derive_seed(s.seed, "step", pack(round, cs.id), pack(epoch, st)));
        plan.inputs.umap_batch =
            ng.pairs.empty()
                ? UmapBatch{}
                : sample_umap_batch(ng, s.batch_pairs, s.n_neg_umap, cs.graph.n, rng);
        plan.xi_bce = standard_normal_matrix(cs.model.marker_mu.rows(), s.eq_samples, rng);
        last_losses = objective_step(cs, s, edges, plan, server.prior, &grad_norm);
      }
    }
  }
  rep.losses = last_losses;
  rep.grad_norm = grad_norm;

  // Alg. line 8: share expected markers after the clipped, noised drift.
  MarkerPosterior posterior;
  posterior.mu = cs.model.marker_mu.col(0);
  posterior.var = cs.model.marker_logvar.col(0).array().exp();
  posterior.polarity = cs.model.marker_polarity;
  Eigen::VectorXd expected = expected_markers(posterior);
  Eigen::VectorXd drift = expected - server.markers;
  rep.drift_norm = drift.norm();
  if (s.dp_on) {
    drift = clip_to_norm(drift, s.dp.clip);
    if (s.dp.noise_enabled()) {
      Rng noise_rng(derive_seed(s.seed, "dp-noise", pack(round, cs.id)));
      drift = gaussian_mechanism(drift, s.dp.clip, s.dp.noise_sigma_dp, noise_rng);
    }
  }
  if (update_out) {
    update_out->client_id = cs.id;
    update_out->weight =
        static_cast<double>(rep.n_train_nodes + rep.n_train_edges);
    if (update_out->weight <= 0.0) update_out->weight = 1.0;
    update_out->payload = server.markers + drift;
    update_out->payload_bytes = sizeof(std::int32_t) + sizeof(double) +
                                static_cast<std::size_t>(drift.size()) * sizeof(double);
    rep.payload_bytes = update_out->payload_bytes;
  }

  // Cache the final view for evaluation and score the held-out nodes.
  ForwardValues final_fv = forward_values(cs, edges);
  cs.last_fused = final_fv.fused;
  cs.last_z = final_fv.z;
  std::vector<int> preds = predict(final_fv.z, cs.model.head);
  rep.val_acc = masked_accuracy(preds, cs.graph, cs.graph.nodes_with_mask(Mask::Val));
  std::vector<int> eval_nodes = eval_label_nodes(cs.graph);
  rep.test_acc = masked_accuracy(preds, cs.graph, eval_nodes);
  if (!eval_nodes.empty()) {
    std::vector<int> p, l;
    for (int i : eval_nodes) {
      p.push_back(preds[static_cast<std::size_t>(i)]);
      l.push_back(cs.graph.labels[static_cast<std::size_t>(i)]);
    }
    rep.test_f1 = micro_f1(p, l, std::max(2, cs.graph.n_classes));
  }

  rep.elapsed_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t_start)
                       .count();
  return rep;
}

}  // namespace

RoundReport run_round(ServerState& server, std::vector<ClientState>& clients,
                      const TrainSettings& s) {
  RoundReport report;
  report.round = server.round;
  const int t = server.round;

  report.participants = sample_participants(
      static_cast<int>(clients.size()), s.participation,
      derive_seed(s.seed, "round-participants", t));

  if (report.participants.empty()) {
    std::cerr << "round " << t << ": no participants sampled, skipping\n";
    report.skipped = true;
    if (s.dp_on) accountant_step(server.accountant, s.participation, s.dp.noise_sigma_dp);
    report.epsilon = (s.dp_on && s.dp.noise_enabled())
                         ? accountant_epsilon(server.accountant, s.dp.delta)
                         : std::numeric_limits<double>::infinity();
    server.history.push_back(server.markers);
    if (t >= server.polyak_burn_in) {
      server.polyak_sum += server.markers;
      ++server.polyak_count;
    }
    server.agg_update_norms.push_back(0.0);
    ++server.round;
    return report;
  }

  std::vector<ClientUpdate> updates;
  for (int id : report.participants) {
    ClientUpdate u;
    ClientRoundReport rep = client_round(clients[static_cast<std::size_t>(id)],
                                         server, s, t, &u);
    report.clients.push_back(rep);
    updates.push_back(std::move(u));
  }

  Eigen::VectorXd before = server.markers;
  if (s.aggregate) {
    if (s.mask_aggregation) {
      MaskScheme scheme{derive_seed(s.seed, "mask-scheme", t), 20,
                        report.participants};
      std::vector<std::vector<std::uint64_t>> masked;
      double wsum = 0.0;
      for (const auto& u : updates) {
        Eigen::VectorXd scaled = u.weight * (u.payload - server.markers);
        masked.push_back(mask_update(scaled, u.client_id, scheme));
        wsum += u.weight;
      }
      Eigen::VectorXd sum =
          dequantize_fixed(unmask_sum(masked), scheme.fixed_point_bits);
      server.markers = (server.markers + sum / wsum).cwiseMax(0.0);
    } else {
      server.markers = aggregate_markers(server.markers, updates);
    }
    if (!server.prior_fitted) {
      // Two-component prior pinned from the first aggregated markers.
      std::vector<double> pos, neg;
      for (Eigen::Index e = 0; e < server.markers.size(); ++e)
        (server.polarity[static_cast<std::size_t>(e)] > 0 ? pos : neg)
            .push_back(server.markers(e));
      auto moments = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= std::max<std::size_t>(1, v.size());
        double var = 0.0;
        for (double x : v) var += (x - m) * (x - m);
        var /= std::max<std::size_t>(1, v.size());
        return std::pair<double, double>{m, std::max(0.25, var)};
      };
      auto [mp, vp] = moments(pos);
      auto [mn, vn] = moments(neg);
      server.prior.components = {{0.5, mp, vp}, {0.5, mn, vn}};
      server.prior_fitted = true;
    }
  }
  report.agg_update_norm = (server.markers - before).norm();

  if (s.dp_on)
    accountant_step(server.accountant, s.participation, s.dp.noise_sigma_dp);
  report.epsilon = (s.dp_on && s.dp.noise_enabled())
                       ? accountant_epsilon(server.accountant, s.dp.delta)
                       : std::numeric_limits<double>::infinity();

  server.history.push_back(server.markers);
  if (t >= server.polyak_burn_in) {
    server.polyak_sum += server.markers;
    ++server.polyak_count;
  }
  server.agg_update_norms.push_back(report.agg_update_norm);
  ++server.round;
  return report;
}

ClientEvalResult evaluate_client(const ClientState& cs,
                                 const Eigen::VectorXd& global_markers,
                                 const std::vector<std::int8_t>& polarity,
                                 const TrainSettings& s, bool full) {
  ClientEvalResult out;
  if (cs.last_z.rows() != cs.graph.n)
    throw std::logic_error("evaluate_client: client has not trained yet");
  const MatrixXd& Z = cs.last_z;

  std::vector<int> preds = predict(Z, cs.model.head);
  out.val_acc = masked_accuracy(preds, cs.graph, cs.graph.nodes_with_mask(Mask::Val));
  std::vector<int> eval_nodes = eval_label_nodes(cs.graph);
  out.test_acc = masked_accuracy(preds, cs.graph, eval_nodes);
  if (!eval_nodes.empty()) {
    std::vector<int> p, l;
    for (int i : eval_nodes) {
      p.push_back(preds[static_cast<std::size_t>(i)]);
      l.push_back(cs.graph.labels[static_cast<std::size_t>(i)]);
    }
    out.test_f1 = micro_f1(p, l, std::max(2, cs.graph.n_classes));
  }

  // Attack statistics: BCE of true edges against the aggregated markers.
  MarkerSet attack_markers;
  attack_markers.loc = global_markers.cwiseMax(0.0);
  attack_markers.polarity = polarity;
  attack_markers.sigma_kern = s.model.sigma_kern;
  std::set<std::pair<int, int>> pseudo_set(cs.pseudo_edges.begin(),
                                           cs.pseudo_edges.end());
  auto edge_loss = [&](int u, int v) {
    double dist = (Z.row(u) - Z.row(v)).norm();
    return -std::log(link_prob(dist, attack_markers));
  };
  if (attack_markers.n_pos() > 0 && attack_markers.n_neg() > 0) {
    for (auto [u, v] : mask_edge_pairs(cs.graph, Mask::Train))
      out.member_losses.push_back(edge_loss(u, v));
    for (auto [u, v] : mask_edge_pairs(cs.graph, Mask::Test))
      if (!pseudo_set.count({u, v})) out.nonmember_losses.push_back(edge_loss(u, v));
  }

  if (!full) return out;

  const int n = cs.graph.n;
  int k_manifold = std::min(15, (n - 1) / 2);
  if (k_manifold >= 1 && 2 * k_manifold < n) {
    out.trust = trustworthiness(cs.last_fused, Z, k_manifold);
    out.continuity = continuity(cs.last_fused, Z, k_manifold);
  }

  std::vector<int> text_rows;
  for (int i = 0; i < n; ++i)
    if (cs.has_text[static_cast<std::size_t>(i)]) text_rows.push_back(i);
  if (text_rows.size() >= 3) {
    MatrixXd Zt(static_cast<Eigen::Index>(text_rows.size()), Z.cols());
    MatrixXd Ht(static_cast<Eigen::Index>(text_rows.size()), cs.text_emb.cols());
    for (std::size_t i = 0; i < text_rows.size(); ++i) {
      Zt.row(static_cast<Eigen::Index>(i)) = Z.row(text_rows[i]);
      Ht.row(static_cast<Eigen::Index>(i)) = cs.text_emb.row(text_rows[i]);
    }
    try {
      out.cka_text = cka(Zt, Ht);
      if (Zt.cols() == Ht.cols()) out.procrustes_text = procrustes(Zt, Ht);
    } catch (const std::invalid_argument&) {
      // degenerate embeddings; leave diagnostics at zero
    }
  }

  // Ranking: each held-out edge against all structurally unknown partners.
  MarkerPosterior posterior;
  posterior.mu = cs.model.marker_mu.col(0);
  posterior.var = cs.model.marker_logvar.col(0).array().exp();
  posterior.polarity = cs.model.marker_polarity;
  MarkerSet local_markers;
  local_markers.loc = expected_markers(posterior);
  local_markers.polarity = posterior.polarity;
  local_markers.sigma_kern = s.model.sigma_kern;
  if (local_markers.n_pos() > 0 && local_markers.n_neg() > 0) {
    std::set<std::pair<int, int>> visible;
    for (auto [u, v] : mask_edge_pairs(cs.graph, Mask::Train)) visible.insert({u, v});
    for (auto [u, v] : cs.pseudo_edges) visible.insert({u, v});
    std::vector<RankQuery> queries;
    for (auto [u, v] : mask_edge_pairs(cs.graph, Mask::Test)) {
      if (pseudo_set.count({u, v})) continue;
      RankQuery q;
      q.true_idx = -1;
      for (int w = 0; w < n; ++w) {
        if (w == u) continue;
        std::pair<int, int> key{std::min(u, w), std::max(u, w)};
        if (w != v && visible.count(key)) continue;
        double dist = (Z.row(u) - Z.row(w)).norm();
        if (w == v) q.true_idx = static_cast<int>(q.scores.size());
        q.scores.push_back(link_prob(dist, local_markers));
      }
      if (q.true_idx >= 0 && q.scores.size() >= 2) queries.push_back(std::move(q));
    }
    if (!queries.empty()) {
      auto [mrr, hits] = mrr_hits(queries, s.mrr_k);
      out.mrr = mrr;
      out.hits = hits;
    }
  }
  return out;
}

GradCheckReport run_gradcheck(std::uint64_t seed, double fd_step) {
  // Small dense instance exercising every objective term.
  ClientGraph g = synth_graph(6, 2, 1.0, 0.5, 4, 8, seed);
  g = make_fewshot_split(g, 3, seed);

  ModelConfig cfg;
  cfg.dims = {4, 5, 3, 3, 6, 2};
  cfg.markers_pos = 2;
  cfg.markers_neg = 2;
  cfg.sigma_kern = 1.0;
  ClientModel model = ClientModel::init(cfg, derive_seed(seed, "gradcheck-model"));

  auto [H, has_text] = embed_texts(g, cfg.dims.text_dim, derive_seed(seed, "gradcheck-text"));

  std::vector<Edge> edges = g.edges_with_mask(Mask::Train);
  if (edges.empty()) edges = g.edges;

  ForwardValues fv = [&] {
    ad::Tape tape;
    LiftedModel lm = lift_model(tape, model, false);
    ad::Var gv = gnn_forward_t(tape, lm, g, edges, Act::Tanh);
    ad::Var fused = fuse_t(tape, lm, gv, H, has_text);
    ad::Var z = umap_forward_t(tape, lm, fused);
    return ForwardValues{tape.value(fused), tape.value(z)};
  }();
  NeighborGraph ng = build_knn(fv.fused, 2, edges);

  ObjectiveInputs in;
  in.train_nodes = g.nodes_with_mask(Mask::Train);
  for (int i : in.train_nodes) in.train_labels.push_back(g.labels[static_cast<std::size_t>(i)]);
  in.n_classes = 2;
  for (const auto& e : edges) in.pos_edges.emplace_back(e.u, e.v);
  Rng neg_rng(derive_seed(seed, "gradcheck-neg"));
  std::set<std::pair<int, int>> excl;
  for (const auto& e : g.edges) excl.insert({e.u, e.v});
  in.neg_edges = sample_non_edges(g, excl, in.pos_edges.size(), neg_rng);
  in.H = &H;
  for (int i = 0; i < g.n; ++i)
    if (has_text[static_cast<std::size_t>(i)]) in.align_mask.push_back(i);
  Rng batch_rng(derive_seed(seed, "gradcheck-batch"));
  in.umap_batch = full_umap_batch(ng, 2, g.n, batch_rng);
  in.curve_a = model.umap.curve_a;
  in.curve_b = model.umap.curve_b;

  Rng xi_rng(derive_seed(seed, "gradcheck-xi"));
  MatrixXd xi_bce = standard_normal_matrix(4, 2, xi_rng);
  MatrixXd xi_kl = standard_normal_matrix(4, 3, xi_rng);
  MarkerPrior prior;
  prior.components = {{0.5, 1.0, 0.5}, {0.5, 2.5, 1.0}};
  ObjectiveWeights w;

  struct TermVals {
    double nll, bce, kl, align, umap, total;
  };
  auto eval_terms = [&](ClientModel& m) -> TermVals {
    ad::Tape tape;
    LiftedModel lm = lift_model(tape, m, false);
    ad::Var gv = gnn_forward_t(tape, lm, g, edges, Act::Tanh);
    ad::Var fused = fuse_t(tape, lm, gv, H, has_text);
    ad::Var z = umap_forward_t(tape, lm, fused);
    ObjectiveVars vars = client_objective_t(tape, lm, z, in, m.marker_polarity,
                                            m.sigma_kern, xi_bce, xi_kl, prior, w);
    return {tape.scalar_value(vars.nll),   tape.scalar_value(vars.bce),
            tape.scalar_value(vars.kl),    tape.scalar_value(vars.align),
            tape.scalar_value(vars.umap),  tape.scalar_value(vars.total)};
  };

  // Analytic gradients: one tape, one backward pass per term.
  ad::Tape tape;
  LiftedModel lm = lift_model(tape, model, true);
  ad::Var gv = gnn_forward_t(tape, lm, g, edges, Act::Tanh);
  ad::Var fused = fuse_t(tape, lm, gv, H, has_text);
  ad::Var z = umap_forward_t(tape, lm, fused);
  ObjectiveVars vars = client_objective_t(tape, lm, z, in, model.marker_polarity,
                                          model.sigma_kern, xi_bce, xi_kl, prior, w);
  const std::vector<std::pair<std::string, ad::Var>> terms = {
      {"nll", vars.nll},     {"bce", vars.bce},   {"kl", vars.kl},
      {"align", vars.align}, {"umap", vars.umap}, {"total", vars.total}};

  GradCheckReport report;
  auto blocks = model.blocks();
  for (const auto& [term_name, term_var] : terms) {
    tape.backward(term_var);
    std::vector<MatrixXd> analytic;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      analytic.push_back(tape.grad(lm.vars[b].second));

    for (std::size_t b = 0; b < blocks.size(); ++b) {
      MatrixXd& p = *blocks[b].second;
      double worst = 0.0;
      for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
          double keep = p(i, j);
          p(i, j) = keep + fd_step;
          TermVals hi = eval_terms(model);
          p(i, j) = keep - fd_step;
          TermVals lo = eval_terms(model);
          p(i, j) = keep;
          double hi_v, lo_v;
          if (term_name == "nll") { hi_v = hi.nll; lo_v = lo.nll; }
          else if (term_name == "bce") { hi_v = hi.bce; lo_v = lo.bce; }
          else if (term_name == "kl") { hi_v = hi.kl; lo_v = lo.kl; }
          else if (term_name == "align") { hi_v = hi.align; lo_v = lo.align; }
          else if (term_name == "umap") { hi_v = hi.umap; lo_v = lo.umap; }
          else { hi_v = hi.total; lo_v = lo.total; }
          double fd = (hi_v - lo_v) / (2.0 * fd_step);
          double an = analytic[b](i, j);
          double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
          worst = std::max(worst, rel);
        }
      report.entries.push_back({term_name, blocks[b].first, worst});
      report.worst = std::max(report.worst, worst);
    }
  }
  return report;
}

}  // namespace lgdumap
