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

#include "lgdumap/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lgdumap {

namespace {
constexpr double kQClamp = 1e-7;
constexpr double kNormFloor = 1e-8;
constexpr double kSigmaFloor = 1e-3;
constexpr double kDistEps = 1e-12;
}  // namespace

VectorXd text_embed_mock(const std::string& text, int m_t, std::uint64_t seed) {
  if (m_t <= 0) throw std::invalid_argument("text_embed_mock: m_t must be positive");
  VectorXd acc = VectorXd::Zero(m_t);
  std::istringstream ss(text);
  std::string token;
  int n_tokens = 0;
  while (ss >> token) {
    Rng rng(derive_seed(seed, "text-token", hash_str(token)));
    for (int j = 0; j < m_t; ++j) acc(j) += rng.normal();
    ++n_tokens;
  }
  if (n_tokens == 0) {
    Rng rng(derive_seed(seed, "text-empty", hash_str(text)));
    for (int j = 0; j < m_t; ++j) acc(j) = rng.normal();
  }
  double norm = acc.norm();
  if (norm < 1e-12) {
    acc.setZero();
    acc(0) = 1.0;
    return acc;
  }
  return acc / norm;
}

std::pair<MatrixXd, std::vector<std::uint8_t>> embed_texts(
    const ClientGraph& g, int m_t, std::uint64_t seed) {
  MatrixXd H = MatrixXd::Zero(g.n, m_t);
  std::vector<std::uint8_t> has(static_cast<std::size_t>(g.n), 0);
  for (int i = 0; i < g.n; ++i) {
    if (!g.has_text(i)) continue;
    H.row(i) = text_embed_mock(g.texts[static_cast<std::size_t>(i)], m_t, seed).transpose();
    has[static_cast<std::size_t>(i)] = 1;
  }
  return {std::move(H), std::move(has)};
}

std::pair<double, double> fit_ab(double min_dist, double spread) {
  if (min_dist <= 0.0 || spread <= 0.0)
    throw std::invalid_argument("fit_ab: min_dist and spread must be positive");

  constexpr int kGrid = 300;
  std::vector<double> xs(kGrid), ys(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    double x = 3.0 * spread * (i + 1) / kGrid;
    xs[static_cast<std::size_t>(i)] = x;
    ys[static_cast<std::size_t>(i)] =
        x <= min_dist ? 1.0 : std::exp(-(x - min_dist) / spread);
  }

  // Levenberg-Marquardt on (a, b) from (1, 1).
  double a = 1.0, b = 1.0, lambda = 1e-3;
  auto residual_sq = [&](double aa, double bb) {
    double s = 0.0;
    for (int i = 0; i < kGrid; ++i) {
      double f = 1.0 / (1.0 + aa * std::pow(xs[static_cast<std::size_t>(i)], 2.0 * bb));
      double r = f - ys[static_cast<std::size_t>(i)];
      s += r * r;
    }
    return s;
  };
  double cur = residual_sq(a, b);
  bool converged = false;
  for (int iter = 0; iter < 200 && !converged; ++iter) {
    double h00 = 0, h01 = 0, h11 = 0, g0 = 0, g1 = 0;
    for (int i = 0; i < kGrid; ++i) {
      double x = xs[static_cast<std::size_t>(i)];
      double x2b = std::pow(x, 2.0 * b);
      double f = 1.0 / (1.0 + a * x2b);
      double r = f - ys[static_cast<std::size_t>(i)];
      double ja = -x2b * f * f;
      double jb = -2.0 * a * x2b * std::log(x) * f * f;
      h00 += ja * ja;
      h01 += ja * jb;
      h11 += jb * jb;
      g0 += ja * r;
      g1 += jb * r;
    }
    for (int tries = 0; tries < 30; ++tries) {
      double d00 = h00 + lambda * h00, d11 = h11 + lambda * h11;
      double det = d00 * d11 - h01 * h01;
      if (std::abs(det) < 1e-300) {
        lambda *= 10.0;
        continue;
      }
      double da = (-g0 * d11 + g1 * h01) / det;
      double db = (-g1 * d00 + g0 * h01) / det;
      double na = std::max(1e-4, a + da);
      double nb = std::max(1e-4, b + db);
      double next = residual_sq(na, nb);
      if (next < cur) {
        if (std::abs(na - a) + std::abs(nb - b) < 1e-12) converged = true;
        a = na;
        b = nb;
        cur = next;
        lambda = std::max(lambda * 0.3, 1e-12);
        break;
      }
      lambda *= 10.0;
      if (tries == 29) converged = true;  // stuck at a local optimum
    }
    if (!std::isfinite(cur)) throw std::runtime_error("fit_ab: diverged");
  }
  if (!std::isfinite(a) || !std::isfinite(b) || a <= 0.0 || b <= 0.0)
    throw std::runtime_error("fit_ab: did not converge");
  return {a, b};
}

double q_ij(const VectorXd& zi, const VectorXd& zj, double a, double b) {
  double d2 = (zi - zj).squaredNorm();
  return 1.0 / (1.0 + a * std::pow(d2 + kDistEps, b));
}

NeighborGraph build_knn(const MatrixXd& X, int k,
                        const std::vector<Edge>& observed_edges) {
  const int n = static_cast<int>(X.rows());
  if (k < 1 || k >= n)
    throw std::invalid_argument("build_knn: need 1 <= k < n");

  NeighborGraph ng;
  ng.neighbors.resize(static_cast<std::size_t>(n));
  ng.rho.resize(static_cast<std::size_t>(n));
  ng.sigma.resize(static_cast<std::size_t>(n));

  std::vector<std::pair<double, int>> dists(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j)
      dists[static_cast<std::size_t>(j)] = {(X.row(i) - X.row(j)).norm(), j};
    dists[static_cast<std::size_t>(i)].first = std::numeric_limits<double>::infinity();
    std::sort(dists.begin(), dists.end());
    auto& lst = ng.neighbors[static_cast<std::size_t>(i)];
    lst.clear();
    for (int j = 0; j < k; ++j)
      lst.emplace_back(dists[static_cast<std::size_t>(j)].second,
                       dists[static_cast<std::size_t>(j)].first);

    double rho = lst.front().second;
    ng.rho[static_cast<std::size_t>(i)] = rho;

    // Binary search sigma so the smoothed memberships sum to log2(k).
    const double target = std::log2(static_cast<double>(k));
    double lo = 0.0, mid = 1.0, hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 64; ++it) {
      double psum = 0.0;
      for (const auto& [idx, d] : lst)
        psum += std::exp(-std::max(0.0, d - rho) / mid);
      if (std::abs(psum - target) < 1e-5) break;
      if (psum > target) {
        hi = mid;
        mid = 0.5 * (lo + hi);
      } else {
        lo = mid;
        mid = std::isinf(hi) ? mid * 2.0 : 0.5 * (lo + hi);
      }
    }
    ng.sigma[static_cast<std::size_t>(i)] = std::max(mid, kSigmaFloor);
  }

  // Directed memberships, then the probabilistic t-conorm.
  std::map<std::pair<int, int>, std::pair<double, double>> directed;
  for (int i = 0; i < n; ++i) {
    for (const auto& [j, d] : ng.neighbors[static_cast<std::size_t>(i)]) {
      double p = std::exp(-std::max(0.0, d - ng.rho[static_cast<std::size_t>(i)]) /
                          ng.sigma[static_cast<std::size_t>(i)]);
      auto key = std::minmax(i, j);
      auto& slot = directed[{key.first, key.second}];
      if (i < j)
        slot.first = p;
      else
        slot.second = p;
    }
  }
  for (const auto& [key, pq] : directed) {
    double p = pq.first + pq.second - pq.first * pq.second;
    if (p > 0.0) ng.pairs.push_back({key.first, key.second, p});
  }

  // Graph-aware union: observed edges are certain neighbors.
  std::set<std::pair<int, int>> have;
  for (auto& pr : ng.pairs) have.insert({pr.u, pr.v});
  for (const auto& e : observed_edges) {
    int u = std::min(e.u, e.v), v = std::max(e.u, e.v);
    if (have.count({u, v})) {
      for (auto& pr : ng.pairs)
        if (pr.u == u && pr.v == v) pr.p = 1.0;
    } else {
      ng.pairs.push_back({u, v, 1.0});
      have.insert({u, v});
    }
  }
  std::sort(ng.pairs.begin(), ng.pairs.end(),
            [](const NeighborGraph::WeightedPair& a,
               const NeighborGraph::WeightedPair& b) {
              return std::tie(a.u, a.v) < std::tie(b.u, b.v);
            });
  return ng;
}

NeighborGraph build_knn(const MatrixXd& X, int k, const ClientGraph& g) {
  return build_knn(X, k, g.edges);
}

namespace {

std::set<std::pair<int, int>> pair_set(const NeighborGraph& ng) {
  std::set<std::pair<int, int>> s;
  for (const auto& p : ng.pairs) s.insert({p.u, p.v});
  return s;
}

void sample_negatives(UmapBatch& batch, const std::set<std::pair<int, int>>& pos,
                      int n_neg, int n_nodes, Rng& rng) {
  if (n_nodes < 2) return;
  const std::size_t want = batch.pos.size() * static_cast<std::size_t>(n_neg);
  for (std::size_t t = 0; t < want; ++t) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      int u = rng.uniform_int(n_nodes);
      int v = rng.uniform_int(n_nodes);
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (pos.count({u, v})) continue;
      batch.neg.emplace_back(u, v);
      break;
    }
  }
}

}  // namespace

UmapBatch full_umap_batch(const NeighborGraph& ng, int n_neg, int n_nodes,
                          Rng& rng) {
  UmapBatch batch;
  for (const auto& p : ng.pairs) {
    batch.pos.emplace_back(p.u, p.v);
    batch.p.push_back(p.p);
  }
  sample_negatives(batch, pair_set(ng), n_neg, n_nodes, rng);
  return batch;
}

UmapBatch sample_umap_batch(const NeighborGraph& ng, int batch_pairs,
                            int n_neg, int n_nodes, Rng& rng) {
  UmapBatch batch;
  std::vector<std::size_t> order(ng.pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t take =
      std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(1, batch_pairs)));
  for (std::size_t i = 0; i < take; ++i) {
    const auto& p = ng.pairs[order[i]];
    batch.pos.emplace_back(p.u, p.v);
    batch.p.push_back(p.p);
  }
  sample_negatives(batch, pair_set(ng), n_neg, n_nodes, rng);
  return batch;
}

double umap_loss(const NeighborGraph& ng, const MatrixXd& Z, double a,
                 double b, int n_neg, std::uint64_t seed) {
  if (ng.pairs.empty()) {
    std::cerr << "umap_loss: empty pair list, loss is 0\n";
    return 0.0;
  }
  Rng rng(derive_seed(seed, "umap-neg"));
  UmapBatch batch = full_umap_batch(ng, n_neg, static_cast<int>(Z.rows()), rng);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.pos.size(); ++i) {
    auto [u, v] = batch.pos[i];
    double q = std::clamp(q_ij(Z.row(u).transpose(), Z.row(v).transpose(), a, b),
                          kQClamp, 1.0 - kQClamp);
    double p = batch.p[i];
    loss += -(p * std::log(q) + (1.0 - p) * std::log(1.0 - q));
  }
  for (const auto& [u, v] : batch.neg) {
    double q = std::clamp(q_ij(Z.row(u).transpose(), Z.row(v).transpose(), a, b),
                          kQClamp, 1.0 - kQClamp);
    loss += -std::log(1.0 - q);
  }
  return loss;
}

namespace {

// q values for a pair list, as a column on the tape.
ad::Var pair_q_t(ad::Tape& tape, ad::Var Z,
                 const std::vector<std::pair<int, int>>& pairs, double a,
                 double b) {
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
  ad::Var base = tape.add_const(sqd, kDistEps);
  ad::Var denom = tape.add_const(tape.scale(tape.pow_const(base, b), a), 1.0);
  ad::Var q = tape.pow_const(denom, -1.0);
  return tape.clamp(q, kQClamp, 1.0 - kQClamp);
}

}  // namespace

ad::Var umap_loss_t(ad::Tape& tape, ad::Var Z, const UmapBatch& batch,
                    double a, double b) {
  ad::Var total = tape.scalar(0.0);
  if (!batch.pos.empty()) {
    ad::Var q = pair_q_t(tape, Z, batch.pos, a, b);
    ad::Matrix pm(static_cast<Eigen::Index>(batch.p.size()), 1);
    for (std::size_t i = 0; i < batch.p.size(); ++i)
      pm(static_cast<Eigen::Index>(i), 0) = batch.p[i];
    ad::Var p = tape.input(pm, false);
    ad::Var one_m_p = tape.add_const(tape.neg(p), 1.0);
    ad::Var lnq = tape.log_(q);
    ad::Var ln1mq = tape.log_(tape.add_const(tape.neg(q), 1.0));
    ad::Var ce = tape.neg(tape.add(tape.mul(p, lnq), tape.mul(one_m_p, ln1mq)));
    total = tape.add(total, tape.sum(ce));
  }
  if (!batch.neg.empty()) {
    ad::Var q = pair_q_t(tape, Z, batch.neg, a, b);
    ad::Var ln1mq = tape.log_(tape.add_const(tape.neg(q), 1.0));
    total = tape.add(total, tape.neg(tape.sum(ln1mq)));
  }
  return total;
}

double align_loss(const MatrixXd& Z, const MatrixXd& H,
                  const std::vector<int>& mask) {
  double total = 0.0;
  for (int i : mask) {
    double nh = H.row(i).norm();
    if (nh <= 0.0)
      throw std::invalid_argument("align_loss: masked row of H has zero norm");
    double nz = Z.row(i).norm();
    if (nz < kNormFloor) {
      total += 1.0;  // treated as orthogonal, no gradient
      continue;
    }
    total += 1.0 - Z.row(i).dot(H.row(i)) / (nz * nh);
  }
  return total;
}

ad::Var align_loss_t(ad::Tape& tape, ad::Var Z, const MatrixXd& H,
                     const std::vector<int>& mask) {
  const ad::Matrix& Zv = tape.value(Z);
  std::vector<int> live;
  int dead = 0;
  for (int i : mask) {
    if (Zv.row(i).norm() < kNormFloor)
      ++dead;
    else
      live.push_back(i);
  }
  ad::Var total = tape.scalar(static_cast<double>(dead));
  if (live.empty()) return total;

  ad::Matrix Hl(static_cast<Eigen::Index>(live.size()), H.cols());
  ad::Matrix Hn(static_cast<Eigen::Index>(live.size()), 1);
  for (std::size_t i = 0; i < live.size(); ++i) {
    Hl.row(static_cast<Eigen::Index>(i)) = H.row(live[i]);
    Hn(static_cast<Eigen::Index>(i), 0) = H.row(live[i]).norm();
    if (Hn(static_cast<Eigen::Index>(i), 0) <= 0.0)
      throw std::invalid_argument("align_loss: masked row of H has zero norm");
  }
  ad::Var zl = tape.gather_rows(Z, live);
  ad::Var hl = tape.input(Hl, false);
  ad::Var hn = tape.input(Hn, false);
  ad::Var dot = tape.row_dot(zl, hl);
  ad::Var zn = tape.sqrt_(tape.row_sum(tape.square(zl)));
  ad::Var cosv = tape.div(dot, tape.mul(zn, hn));
  ad::Var terms = tape.add_const(tape.neg(cosv), 1.0);
  return tape.add(total, tape.sum(terms));
}

// --- parameter plumbing ------------------------------------------------

namespace {
MatrixXd glorot(int rows, int cols, Rng& rng) {
  MatrixXd m(rows, cols);
  const double s = std::sqrt(2.0 / (rows + cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = s * rng.normal();
  return m;
}
}  // namespace

ClientModel ClientModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  const auto& d = cfg.dims;
  Rng rng(derive_seed(seed, "model-init"));
  ClientModel m;
  m.gnn.w_self1 = glorot(d.feature_dim, d.hidden, rng);
  m.gnn.w_nb1 = glorot(d.feature_dim, d.hidden, rng);
  m.gnn.b1 = MatrixXd::Zero(1, d.hidden);
  m.gnn.w_self2 = glorot(d.hidden, d.hidden, rng);
  m.gnn.w_nb2 = glorot(d.hidden, d.hidden, rng);
  m.gnn.b2 = MatrixXd::Zero(1, d.hidden);

  m.fusion.proj = glorot(d.hidden + d.text_dim, d.hidden, rng);
  m.fusion.missing_text = MatrixXd::Zero(1, d.text_dim);
  m.fusion.missing_feat = MatrixXd::Zero(1, d.feature_dim);

  m.umap.w1 = glorot(d.hidden, d.mlp_hidden, rng);
  m.umap.b1 = MatrixXd::Zero(1, d.mlp_hidden);
  m.umap.w2 = glorot(d.mlp_hidden, d.mlp_hidden, rng);
  m.umap.b2 = MatrixXd::Zero(1, d.mlp_hidden);
  m.umap.w3 = glorot(d.mlp_hidden, d.umap_dim, rng);
  m.umap.b3 = MatrixXd::Zero(1, d.umap_dim);
  auto ab = fit_ab(cfg.min_dist, cfg.spread);
  m.umap.curve_a = ab.first;
  m.umap.curve_b = ab.second;

  m.head.w = glorot(d.umap_dim, d.n_classes, rng);
  m.head.b = MatrixXd::Zero(1, d.n_classes);

  const int n_markers = cfg.markers_pos + cfg.markers_neg;
  m.marker_mu.resize(n_markers, 1);
  m.marker_logvar = MatrixXd::Constant(n_markers, 1, std::log(0.01));
  m.marker_polarity.resize(static_cast<std::size_t>(n_markers));
  for (int e = 0; e < cfg.markers_pos; ++e) {
    m.marker_mu(e, 0) = 0.5 + 1.5 * (e + 0.5) / cfg.markers_pos;
    m.marker_polarity[static_cast<std::size_t>(e)] = 1;
  }
  for (int e = 0; e < cfg.markers_neg; ++e) {
    m.marker_mu(cfg.markers_pos + e, 0) = 1.0 + 2.0 * (e + 0.5) / cfg.markers_neg;
    m.marker_polarity[static_cast<std::size_t>(cfg.markers_pos + e)] = -1;
  }
  m.sigma_kern = cfg.sigma_kern;
  return m;
}

std::vector<std::pair<std::string, MatrixXd*>> ClientModel::blocks() {
  return {
      {"gnn.w_self1", &gnn.w_self1},   {"gnn.w_nb1", &gnn.w_nb1},
      {"gnn.b1", &gnn.b1},             {"gnn.w_self2", &gnn.w_self2},
      {"gnn.w_nb2", &gnn.w_nb2},       {"gnn.b2", &gnn.b2},
      {"fusion.proj", &fusion.proj},   {"fusion.missing_text", &fusion.missing_text},
      {"fusion.missing_feat", &fusion.missing_feat},
      {"umap.w1", &umap.w1},           {"umap.b1", &umap.b1},
      {"umap.w2", &umap.w2},           {"umap.b2", &umap.b2},
      {"umap.w3", &umap.w3},           {"umap.b3", &umap.b3},
      {"head.w", &head.w},             {"head.b", &head.b},
      {"markers.mu", &marker_mu},      {"markers.logvar", &marker_logvar},
  };
}

std::vector<std::pair<std::string, const MatrixXd*>> ClientModel::blocks() const {
  auto mut = const_cast<ClientModel*>(this)->blocks();
  std::vector<std::pair<std::string, const MatrixXd*>> out;
  out.reserve(mut.size());
  for (auto& [name, ptr] : mut) out.emplace_back(name, ptr);
  return out;
}

ad::Var LiftedModel::at(const std::string& name) const {
  for (const auto& [n, v] : vars)
    if (n == name) return v;
  throw std::invalid_argument("LiftedModel: unknown block " + name);
}

LiftedModel lift_model(ad::Tape& tape, const ClientModel& model,
                       bool requires_grad) {
  LiftedModel lm;
  for (const auto& [name, ptr] : model.blocks())
    lm.vars.emplace_back(name, tape.input(*ptr, requires_grad));
  return lm;
}

namespace {

// Row-normalized adjacency for mean aggregation; zero row for isolated nodes.
MatrixXd mean_aggregation_matrix(int n, const std::vector<Edge>& edges) {
  MatrixXd A = MatrixXd::Zero(n, n);
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (const auto& e : edges) {
    A(e.u, e.v) = 1.0;
    A(e.v, e.u) = 1.0;
    ++deg[static_cast<std::size_t>(e.u)];
    ++deg[static_cast<std::size_t>(e.v)];
  }
  for (int i = 0; i < n; ++i)
    if (deg[static_cast<std::size_t>(i)] > 0)
      A.row(i) /= static_cast<double>(deg[static_cast<std::size_t>(i)]);
  return A;
}

ad::Var activate(ad::Tape& tape, ad::Var x, Act act) {
  return act == Act::Tanh ? tape.tanh_(x) : x;
}

}  // namespace

ad::Var gnn_forward_t(ad::Tape& tape, const LiftedModel& lm,
                      const ClientGraph& g, const std::vector<Edge>& edges,
                      Act activation) {
  const int n = g.n;
  const int p = g.feature_dim();
  MatrixXd Xz = g.features;
  MatrixXd absent = MatrixXd::Zero(n, 1);
  for (int i = 0; i < n; ++i)
    if (!g.has_feature(i)) {
      Xz.row(i).setZero();
      absent(i, 0) = 1.0;
    }
  if (static_cast<Eigen::Index>(p) != tape.value(lm.at("gnn.w_self1")).rows())
    throw std::invalid_argument("gnn_forward: feature dim does not match params");

  ad::Var X = tape.add(tape.input(Xz, false),
                       tape.matmul(tape.input(absent, false), lm.at("fusion.missing_feat")));
  ad::Var A = tape.input(mean_aggregation_matrix(n, edges), false);

  ad::Var h1 = activate(
      tape,
      tape.add_rowvec(tape.add(tape.matmul(X, lm.at("gnn.w_self1")),
                               tape.matmul(tape.matmul(A, X), lm.at("gnn.w_nb1"))),
                      lm.at("gnn.b1")),
      activation);
  ad::Var h2 = activate(
      tape,
      tape.add_rowvec(tape.add(tape.matmul(h1, lm.at("gnn.w_self2")),
                               tape.matmul(tape.matmul(A, h1), lm.at("gnn.w_nb2"))),
                      lm.at("gnn.b2")),
      activation);
  return h2;
}

ad::Var fuse_t(ad::Tape& tape, const LiftedModel& lm, ad::Var gnn_out,
               const MatrixXd& text_emb,
               const std::vector<std::uint8_t>& has_text) {
  const Eigen::Index n = tape.value(gnn_out).rows();
  if (text_emb.rows() != n)
    throw std::invalid_argument("fuse: text embedding rows do not match");
  MatrixXd Hz = text_emb;
  MatrixXd missing = MatrixXd::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!has_text[static_cast<std::size_t>(i)]) {
      Hz.row(i).setZero();
      missing(i, 0) = 1.0;
    }
  ad::Var T = tape.add(tape.input(Hz, false),
                       tape.matmul(tape.input(missing, false), lm.at("fusion.missing_text")));
  ad::Var cat = tape.concat_cols(gnn_out, T);
  if (tape.value(cat).cols() != tape.value(lm.at("fusion.proj")).rows())
    throw std::invalid_argument("fuse: projection dim mismatch");
  return tape.matmul(cat, lm.at("fusion.proj"));
}

ad::Var umap_forward_t(ad::Tape& tape, const LiftedModel& lm, ad::Var fused) {
  ad::Var h1 = tape.tanh_(tape.add_rowvec(tape.matmul(fused, lm.at("umap.w1")), lm.at("umap.b1")));
  ad::Var h2 = tape.tanh_(tape.add_rowvec(tape.matmul(h1, lm.at("umap.w2")), lm.at("umap.b2")));
  return tape.add_rowvec(tape.matmul(h2, lm.at("umap.w3")), lm.at("umap.b3"));
}

namespace {
LiftedModel lift_named(ad::Tape& tape,
                       std::vector<std::pair<std::string, const MatrixXd*>> blocks) {
  LiftedModel lm;
  for (auto& [name, ptr] : blocks) lm.vars.emplace_back(name, tape.input(*ptr, false));
  return lm;
}
}  // namespace

MatrixXd gnn_forward(const ClientGraph& g, const GnnParams& params,
                     const MatrixXd& missing_feat) {
  ad::Tape tape;
  LiftedModel lm = lift_named(tape, {{"gnn.w_self1", &params.w_self1},
                                     {"gnn.w_nb1", &params.w_nb1},
                                     {"gnn.b1", &params.b1},
                                     {"gnn.w_self2", &params.w_self2},
                                     {"gnn.w_nb2", &params.w_nb2},
                                     {"gnn.b2", &params.b2},
                                     {"fusion.missing_feat", &missing_feat}});
  return tape.value(gnn_forward_t(tape, lm, g, g.edges, params.activation));
}

MatrixXd fuse(const MatrixXd& gnn_emb, const MatrixXd& text_emb,
              const std::vector<std::uint8_t>& has_text,
              const FusionParams& params) {
  ad::Tape tape;
  LiftedModel lm = lift_named(tape, {{"fusion.proj", &params.proj},
                                     {"fusion.missing_text", &params.missing_text}});
  ad::Var g = tape.input(gnn_emb, false);
  return tape.value(fuse_t(tape, lm, g, text_emb, has_text));
}

MatrixXd umap_forward(const MatrixXd& fused, const UmapEncoderParams& params) {
  ad::Tape tape;
  LiftedModel lm = lift_named(tape, {{"umap.w1", &params.w1},
                                     {"umap.b1", &params.b1},
                                     {"umap.w2", &params.w2},
                                     {"umap.b2", &params.b2},
                                     {"umap.w3", &params.w3},
                                     {"umap.b3", &params.b3}});
  return tape.value(umap_forward_t(tape, lm, tape.input(fused, false)));
}

void Adam::step(std::vector<std::pair<std::string, MatrixXd*>> blocks,
                const std::vector<MatrixXd>& grads) {
  if (blocks.size() != grads.size())
    throw std::invalid_argument("Adam::step: gradient count mismatch");
  if (m_.empty()) {
    for (auto& [name, p] : blocks) {
      m_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    MatrixXd& p = *blocks[i].second;
    const MatrixXd& g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    MatrixXd mhat = m_[i] / bc1;
    MatrixXd vhat = v_[i] / bc2;
    p -= lr_ * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                  MatrixXd::Constant(p.rows(), p.cols(), eps_));
  }
}

void save_named_tensors(
    const std::vector<std::pair<std::string, const MatrixXd*>>& tensors,
    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  out << tensors.size() << "\n";
  for (const auto& [name, m] : tensors) {
    out << name << " " << m->rows() << " " << m->cols();
    for (Eigen::Index i = 0; i < m->rows(); ++i)
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", (*m)(i, j));
        out << " " << buf;
      }
    out << "\n";
  }
}

std::vector<std::pair<std::string, MatrixXd>> load_named_tensors(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::size_t count = 0;
  in >> count;
  std::vector<std::pair<std::string, MatrixXd>> out;
  for (std::size_t t = 0; t < count; ++t) {
    std::string name;
    Eigen::Index rows, cols;
    if (!(in >> name >> rows >> cols))
      throw std::runtime_error(path + ": truncated tensor header");
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(in >> m(i, j))) throw std::runtime_error(path + ": truncated tensor data");
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace lgdumap
