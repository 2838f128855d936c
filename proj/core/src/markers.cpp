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

#include "lgdumap/markers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "lgdumap/rng.hpp"

namespace lgdumap {

namespace {
constexpr double kLinkClamp = 1e-6;
constexpr double kVarFloor = 1e-4;
constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kDistEps = 1e-12;
}  // namespace

int MarkerSet::n_pos() const {
  int c = 0;
  for (auto p : polarity) c += (p > 0);
  return c;
}

int MarkerSet::n_neg() const { return size() - n_pos(); }

std::vector<int> MarkerSet::pos_indices() const {
  std::vector<int> idx;
  for (int e = 0; e < size(); ++e)
    if (polarity[static_cast<std::size_t>(e)] > 0) idx.push_back(e);
  return idx;
}

void MarkerSet::validate() const {
  if (static_cast<int>(polarity.size()) != size())
    throw std::invalid_argument("marker polarity length mismatch");
  if (sigma_kern <= 0.0) throw std::invalid_argument("sigma_kern must be positive");
  for (int e = 0; e < size(); ++e)
    if (!(loc(e) >= 0.0)) throw std::invalid_argument("marker location must be >= 0");
}

double MarkerPrior::log_density(double x) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(components.size());
  for (const auto& c : components) {
    double t = std::log(c.weight) - 0.5 * (kLog2Pi + std::log(c.var)) -
               (x - c.mean) * (x - c.mean) / (2.0 * c.var);
    terms.push_back(t);
    best = std::max(best, t);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - best);
  return best + std::log(s);
}

void MarkerPrior::validate() const {
  if (components.empty()) throw std::invalid_argument("prior needs components");
  double wsum = 0.0;
  for (const auto& c : components) {
    if (c.var <= 0.0) throw std::invalid_argument("prior variance must be positive");
    if (c.weight <= 0.0) throw std::invalid_argument("prior weight must be positive");
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("prior weights must sum to 1");
}

double quantile(std::vector<double> values, double level) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double pos = std::clamp(level, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, values.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {
double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}
}  // namespace

MarkerInit init_markers(const std::vector<double>& pos_dists,
                        const std::vector<double>& neg_dists, int n_pos,
                        int n_neg, double sigma_kern) {
  if (n_pos > 0 && pos_dists.empty())
    throw std::invalid_argument("init_markers: empty positive distance list");
  if (n_neg > 0 && neg_dists.empty())
    throw std::invalid_argument("init_markers: empty negative distance list");
  if (n_pos < 0 || n_neg < 0 || n_pos + n_neg == 0)
    throw std::invalid_argument("init_markers: need at least one marker");

  const int K = n_pos + n_neg;
  MarkerInit out;
  out.set.loc.resize(K);
  out.set.polarity.resize(static_cast<std::size_t>(K));
  out.set.sigma_kern = sigma_kern;
  out.posterior.mu.resize(K);
  out.posterior.var.resize(K);
  out.posterior.polarity.resize(static_cast<std::size_t>(K));

  const double var_pos =
      std::max(kVarFloor, std::pow(sample_std(pos_dists) / std::max(1, n_pos), 2));
  const double var_neg =
      std::max(kVarFloor, std::pow(sample_std(neg_dists) / std::max(1, n_neg), 2));

  for (int e = 0; e < n_pos; ++e) {
    double q = quantile(pos_dists, (e + 0.5) / n_pos);
    out.set.loc(e) = std::max(0.0, q);
    out.set.polarity[static_cast<std::size_t>(e)] = 1;
    out.posterior.mu(e) = out.set.loc(e);
    out.posterior.var(e) = var_pos;
    out.posterior.polarity[static_cast<std::size_t>(e)] = 1;
  }
  for (int e = 0; e < n_neg; ++e) {
    int i = n_pos + e;
    double q = quantile(neg_dists, (e + 0.5) / n_neg);
    out.set.loc(i) = std::max(0.0, q);
    out.set.polarity[static_cast<std::size_t>(i)] = -1;
    out.posterior.mu(i) = out.set.loc(i);
    out.posterior.var(i) = var_neg;
    out.posterior.polarity[static_cast<std::size_t>(i)] = -1;
  }
  out.set.validate();
  return out;
}

Eigen::VectorXd soft_assign(double s, const MarkerSet& markers) {
  if (markers.sigma_kern <= 0.0)
    throw std::invalid_argument("soft_assign: sigma_kern must be positive");
  const int K = markers.size();
  Eigen::VectorXd logits(K);
  for (int e = 0; e < K; ++e) {
    double d = s - markers.loc(e);
    logits(e) = -d * d / (2.0 * markers.sigma_kern * markers.sigma_kern);
  }
  double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp();
  return p / p.sum();
}

double link_prob(double s, const MarkerSet& markers) {
  if (markers.n_pos() == 0 || markers.n_neg() == 0)
    throw std::invalid_argument("link_prob: both polarities must be present");
  Eigen::VectorXd p = soft_assign(s, markers);
  double mass = 0.0;
  for (int e = 0; e < markers.size(); ++e)
    if (markers.polarity[static_cast<std::size_t>(e)] > 0) mass += p(e);
  return std::clamp(mass, kLinkClamp, 1.0 - kLinkClamp);
}

double kl_posterior_prior(const MarkerPosterior& q, const MarkerPrior& prior,
                          int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("kl_posterior_prior: n_samples >= 1");
  prior.validate();
  Rng rng(derive_seed(seed, "kl-samples"));
  const int K = static_cast<int>(q.mu.size());
  double total = 0.0;
  for (int e = 0; e < K; ++e) {
    double v = q.var(e);
    if (v <= 0.0) throw std::invalid_argument("posterior variance must be positive");
    double sd = std::sqrt(v);
    double acc = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      double xi = rng.normal();
      double m = q.mu(e) + sd * xi;
      double logq = -0.5 * (kLog2Pi + std::log(v)) - 0.5 * xi * xi;
      acc += logq - prior.log_density(m);
    }
    total += acc / n_samples;
  }
  return total;
}

MarkerSet sample_markers(const MarkerPosterior& q, double sigma_kern,
                         std::uint64_t seed) {
  Rng rng(derive_seed(seed, "marker-sample"));
  const int K = static_cast<int>(q.mu.size());
  MarkerSet out;
  out.loc.resize(K);
  out.polarity = q.polarity;
  out.sigma_kern = sigma_kern;
  for (int e = 0; e < K; ++e)
    out.loc(e) = std::max(0.0, q.mu(e) + std::sqrt(q.var(e)) * rng.normal());
  return out;
}

Eigen::VectorXd expected_markers(const MarkerPosterior& q) {
  return q.mu.cwiseMax(0.0);
}

std::string marker_posterior_to_table(const MarkerPosterior& q) {
  std::ostringstream out;
  char buf[64];
  for (int e = 0; e < static_cast<int>(q.mu.size()); ++e) {
    out << (q.polarity[static_cast<std::size_t>(e)] > 0 ? "+1" : "-1");
    std::snprintf(buf, sizeof(buf), "%.17g", q.mu(e));
    out << "," << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", q.var(e));
    out << "," << buf << "\n";
  }
  return out.str();
}

MarkerPosterior marker_posterior_from_table(const std::string& table) {
  MarkerPosterior q;
  std::istringstream in(table);
  std::string line;
  std::vector<double> mu, var;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    int pol;
    double m, v;
    if (!(ls >> pol >> m >> v))
      throw std::runtime_error("marker table: bad row '" + line + "'");
    q.polarity.push_back(static_cast<std::int8_t>(pol));
    mu.push_back(m);
    var.push_back(v);
  }
  q.mu = Eigen::Map<Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  q.var = Eigen::Map<Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()));
  return q;
}

namespace {

double bce_of(double p, int label) {
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace

LossBundle client_objective(const MatrixXd& Z, const MarkerSet& markers,
                            const ObjectiveInputs& in,
                            const ClassifierHead& head,
                            const ObjectiveWeights& w, double kl) {
  if (in.train_nodes.empty() && in.pos_edges.empty())
    throw std::invalid_argument(
        "client_objective: no train-masked nodes and no train edges");

  LossBundle out;
  out.kl = kl;

  if (!in.train_nodes.empty()) {
    double nll = 0.0;
    for (std::size_t i = 0; i < in.train_nodes.size(); ++i) {
      Eigen::RowVectorXd logits =
          Z.row(in.train_nodes[i]) * head.w + head.b.row(0);
      double m = logits.maxCoeff();
      double lse = m + std::log((logits.array() - m).exp().sum());
      nll += lse - logits(in.train_labels[i]);
    }
    out.nll = nll / static_cast<double>(in.train_nodes.size());
  }

  const std::size_t n_bce = in.pos_edges.size() + in.neg_edges.size();
  if (n_bce > 0) {
    double bce = 0.0;
    for (const auto& [u, v] : in.pos_edges) {
      double s = std::sqrt((Z.row(u) - Z.row(v)).squaredNorm() + kDistEps);
      bce += bce_of(link_prob(s, markers), 1);
    }
    for (const auto& [u, v] : in.neg_edges) {
      double s = std::sqrt((Z.row(u) - Z.row(v)).squaredNorm() + kDistEps);
      bce += bce_of(link_prob(s, markers), 0);
    }
    out.bce = bce / static_cast<double>(n_bce);
  }

  if (in.H != nullptr && !in.align_mask.empty())
    out.align = align_loss(Z, *in.H, in.align_mask);

  {
    double loss = 0.0;
    const auto& batch = in.umap_batch;
    for (std::size_t i = 0; i < batch.pos.size(); ++i) {
      auto [u, v] = batch.pos[i];
      double q = std::clamp(
          q_ij(Z.row(u).transpose(), Z.row(v).transpose(), in.curve_a, in.curve_b),
          1e-7, 1.0 - 1e-7);
      loss += -(batch.p[i] * std::log(q) + (1.0 - batch.p[i]) * std::log(1.0 - q));
    }
    for (const auto& [u, v] : batch.neg) {
      double q = std::clamp(
          q_ij(Z.row(u).transpose(), Z.row(v).transpose(), in.curve_a, in.curve_b),
          1e-7, 1.0 - 1e-7);
      loss += -std::log(1.0 - q);
    }
    out.umap = loss;
  }

  out.total = out.nll + out.bce + w.lambda * out.kl + w.gamma * out.align +
              w.eta * out.umap;
  return out;
}

namespace {

// Distances for a pair list as an on-tape column: sqrt(||zu - zv||^2 + eps).
ad::Var pair_dist_t(ad::Tape& tape, ad::Var Z,
                    const std::vector<std::pair<int, int>>& pairs) {
  std::vector<int> us, vs;
  us.reserve(pairs.size());
  vs.reserve(pairs.size());
  for (auto [u, v] : pairs) {
    us.push_back(u);
    vs.push_back(v);
  }
  ad::Var zu = tape.gather_rows(Z, us);
  ad::Var zv = tape.gather_rows(Z, vs);
  ad::Var sqd = tape.row_sum(tape.square(tape.sub(zu, zv)));
  return tape.sqrt_(tape.add_const(sqd, kDistEps));
}

// log link probability and log (1 - link probability) columns for the
// distances, built from the softmax masses over the sampled markers.
std::pair<ad::Var, ad::Var> log_link_t(ad::Tape& tape, ad::Var dist,
                                       ad::Var marker_row,
                                       const std::vector<std::int8_t>& polarity,
                                       double sigma_kern) {
  std::vector<int> pos_idx, neg_idx;
  for (int e = 0; e < static_cast<int>(polarity.size()); ++e)
    (polarity[static_cast<std::size_t>(e)] > 0 ? pos_idx : neg_idx).push_back(e);
  if (pos_idx.empty() || neg_idx.empty())
    throw std::invalid_argument("link probability needs both polarities");

  ad::Var D = tape.outer_diff(dist, marker_row);
  ad::Var logits = tape.scale(tape.square(D), -1.0 / (2.0 * sigma_kern * sigma_kern));
  ad::Var lse_all = tape.logsumexp_rows(logits);
  ad::Var lse_pos = tape.logsumexp_rows(tape.gather_cols(logits, pos_idx));
  ad::Var lse_neg = tape.logsumexp_rows(tape.gather_cols(logits, neg_idx));
  // p = exp(lse_pos - lse_all); 1 - p = exp(lse_neg - lse_all). Clamp in
  // probability space to match the scalar op.
  ad::Var p = tape.clamp(tape.exp_(tape.sub(lse_pos, lse_all)), kLinkClamp, 1.0 - kLinkClamp);
  ad::Var np = tape.clamp(tape.exp_(tape.sub(lse_neg, lse_all)), kLinkClamp, 1.0 - kLinkClamp);
  return {tape.log_(p), tape.log_(np)};
}

}  // namespace

ObjectiveVars client_objective_t(ad::Tape& tape, const LiftedModel& lm,
                                 ad::Var Z, const ObjectiveInputs& in,
                                 const std::vector<std::int8_t>& polarity,
                                 double sigma_kern, const MatrixXd& xi_bce,
                                 const MatrixXd& xi_kl,
                                 const MarkerPrior& prior,
                                 const ObjectiveWeights& w) {
  if (in.train_nodes.empty() && in.pos_edges.empty())
    throw std::invalid_argument(
        "client_objective: no train-masked nodes and no train edges");
  prior.validate();

  const int K = static_cast<int>(polarity.size());
  ad::Var mu = lm.at("markers.mu");
  ad::Var logvar = lm.at("markers.logvar");
  ad::Var sd = tape.exp_(tape.scale(logvar, 0.5));

  ObjectiveVars out;
  out.nll = tape.scalar(0.0);
  out.bce = tape.scalar(0.0);

  if (!in.train_nodes.empty()) {
    ad::Var zt = tape.gather_rows(Z, in.train_nodes);
    ad::Var logits = tape.add_rowvec(tape.matmul(zt, lm.at("head.w")), lm.at("head.b"));
    ad::Var lse = tape.logsumexp_rows(logits);
    ad::Var picked = tape.row_pick(logits, in.train_labels);
    out.nll = tape.mean(tape.sub(lse, picked));
  }

  const std::size_t n_bce = in.pos_edges.size() + in.neg_edges.size();
  if (n_bce > 0) {
    std::vector<std::pair<int, int>> all_edges = in.pos_edges;
    all_edges.insert(all_edges.end(), in.neg_edges.begin(), in.neg_edges.end());
    ad::Var dist = pair_dist_t(tape, Z, all_edges);
    const int n_samples = static_cast<int>(xi_bce.cols());
    ad::Var acc = tape.scalar(0.0);
    for (int s = 0; s < n_samples; ++s) {
      // One reparameterized draw, projected to >= 0 like sample_markers.
      ad::Var xi = tape.input(xi_bce.col(s), false);
      ad::Var m = tape.relu(tape.add(mu, tape.mul(sd, xi)));
      ad::Var m_row = tape.reshape(m, 1, K);
      auto [logp, log1mp] = log_link_t(tape, dist, m_row, polarity, sigma_kern);
      ad::Var pos_part =
          in.pos_edges.empty()
              ? tape.scalar(0.0)
              : tape.sum(tape.gather_rows(logp, [&] {
                  std::vector<int> idx(in.pos_edges.size());
                  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
                  return idx;
                }()));
      ad::Var neg_part =
          in.neg_edges.empty()
              ? tape.scalar(0.0)
              : tape.sum(tape.gather_rows(log1mp, [&] {
                  std::vector<int> idx(in.neg_edges.size());
                  for (std::size_t i = 0; i < idx.size(); ++i)
                    idx[i] = static_cast<int>(in.pos_edges.size() + i);
                  return idx;
                }()));
      acc = tape.add(acc, tape.neg(tape.add(pos_part, neg_part)));
    }
    out.bce = tape.scale(acc, 1.0 / (static_cast<double>(n_samples) *
                                     static_cast<double>(n_bce)));
  }

  // KL(q || prior), reparameterized. E_q[log q] has the closed entropy form
  // -(1/2) log(2 pi e' v) with the xi^2 part entering as a constant.
  {
    const int S = static_cast<int>(xi_kl.cols());
    double xi_sq_mean = 0.0;
    for (int e = 0; e < K; ++e)
      for (int s = 0; s < S; ++s) xi_sq_mean += xi_kl(e, s) * xi_kl(e, s);
    xi_sq_mean /= static_cast<double>(S);
    ad::Var logq_sum = tape.add_const(
        tape.scale(tape.sum(tape.add_const(logvar, kLog2Pi)), -0.5), -0.5 * xi_sq_mean);

    ad::Var ones_row = tape.input(MatrixXd::Ones(1, S), false);
    ad::Var mu_rep = tape.matmul(mu, ones_row);
    ad::Var sd_rep = tape.matmul(sd, ones_row);
    ad::Var samples = tape.add(mu_rep, tape.mul(sd_rep, tape.input(xi_kl, false)));
    ad::Var flat = tape.reshape(samples, static_cast<Eigen::Index>(K) * S, 1);
    ad::Var comps{-1};
    for (std::size_t c = 0; c < prior.components.size(); ++c) {
      const auto& comp = prior.components[c];
      ad::Var diff = tape.add_const(flat, -comp.mean);
      ad::Var lc = tape.add_const(
          tape.scale(tape.square(diff), -1.0 / (2.0 * comp.var)),
          std::log(comp.weight) - 0.5 * (kLog2Pi + std::log(comp.var)));
      comps = c == 0 ? lc : tape.concat_cols(comps, lc);
    }
    ad::Var log_prior = tape.logsumexp_rows(comps);
    ad::Var log_prior_mean = tape.scale(tape.sum(log_prior), 1.0 / S);
    out.kl = tape.sub(logq_sum, log_prior_mean);
  }

  out.align = (in.H != nullptr && !in.align_mask.empty())
                  ? align_loss_t(tape, Z, *in.H, in.align_mask)
                  : tape.scalar(0.0);

  out.umap = umap_loss_t(tape, Z, in.umap_batch, in.curve_a, in.curve_b);

  out.total = tape.add(
      tape.add(out.nll, out.bce),
      tape.add(tape.scale(out.kl, w.lambda),
               tape.add(tape.scale(out.align, w.gamma), tape.scale(out.umap, w.eta))));
  return out;
}

}  // namespace lgdumap
