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

#include "lgdumap/llmguide.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lgdumap/rng.hpp"

namespace lgdumap {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gaussian score separation of true vs false proposals. The likelihood
// ratio of N(+mu,1) vs N(-mu,1) is linear in the score, so the calibrated
// logit is 2*mu*z + logit(prior); the emitted logit is skew times that.
constexpr double kScoreMu = 1.2;

struct ProposalDraw {
  bool truth;
  double raw_logit;
};

ProposalDraw draw_logit(Rng& rng, double precision, double skew) {
  bool truth = rng.uniform() < precision;
  double z = rng.normal(truth ? kScoreMu : -kScoreMu, 1.0);
  double prior = std::log(precision / (1.0 - precision));
  double calibrated = 2.0 * kScoreMu * z + prior;
  return {truth, skew * calibrated};
}

}  // namespace

std::vector<Proposal> propose(const ClientGraph& client,
                              const MockOracleProposer& proposer,
                              std::uint64_t round_salt,
                              const std::vector<int>* label_candidates) {
  if (!(proposer.precision > 0.0 && proposer.precision < 1.0))
    throw std::invalid_argument("proposer precision must be in (0,1)");
  Rng rng(derive_seed(proposer.seed, "propose", round_salt));

  std::set<std::pair<int, int>> edge_set;
  for (const auto& e : client.edges) edge_set.insert({e.u, e.v});

  std::vector<std::pair<int, int>> test_edges, val_edges;
  for (std::size_t i = 0; i < client.edges.size(); ++i) {
    const auto& e = client.edges[i];
    if (client.edge_mask[i] == Mask::Test) test_edges.emplace_back(e.u, e.v);
    if (client.edge_mask[i] == Mask::Val) val_edges.emplace_back(e.u, e.v);
  }
  std::vector<int> test_nodes, val_nodes;
  for (int i = 0; i < client.n; ++i) {
    if (client.labels[static_cast<std::size_t>(i)] < 0) continue;
    if (client.node_mask[static_cast<std::size_t>(i)] == Mask::Test) test_nodes.push_back(i);
    if (client.node_mask[static_cast<std::size_t>(i)] == Mask::Val) val_nodes.push_back(i);
  }
  if (label_candidates != nullptr) test_nodes = *label_candidates;

  auto random_non_edge = [&](std::pair<int, int>* out) -> bool {
    if (client.n < 2) return false;
    for (int attempt = 0; attempt < 200; ++attempt) {
      int u = rng.uniform_int(client.n);
      int v = rng.uniform_int(client.n);
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (edge_set.count({u, v})) continue;
      *out = {u, v};
      return true;
    }
    return false;
  };

  auto wrong_label = [&](int node) {
    int truth = client.labels[static_cast<std::size_t>(node)];
    if (client.n_classes < 2) return truth;
    int c = rng.uniform_int(client.n_classes - 1);
    return c >= truth ? c + 1 : c;
  };

  std::vector<Proposal> out;

  auto emit = [&](Proposal::Kind kind, bool probe,
                  const std::vector<std::pair<int, int>>& true_edges,
                  const std::vector<int>& label_nodes) -> bool {
    ProposalDraw d = draw_logit(rng, proposer.precision, proposer.skew);
    Proposal p;
    p.kind = kind;
    p.probe = probe;
    p.ground_truth = d.truth;
    p.raw_logit = d.raw_logit;
    p.confidence = sigmoid(d.raw_logit);
    if (kind == Proposal::Kind::Edge) {
      if (d.truth) {
        if (true_edges.empty()) return false;
        auto [u, v] = true_edges[rng.uniform_index(true_edges.size())];
        p.u = u;
        p.v = v;
      } else {
        std::pair<int, int> ne;
        if (!random_non_edge(&ne)) return false;
        p.u = ne.first;
        p.v = ne.second;
      }
    } else {
      if (label_nodes.empty()) return false;
      p.node = label_nodes[rng.uniform_index(label_nodes.size())];
      p.payload = d.truth ? client.labels[static_cast<std::size_t>(p.node)]
                          : wrong_label(p.node);
    }
    out.push_back(p);
    return true;
  };

  // Probes first: the verifiable slice used to fit the temperature.
  for (int i = 0; i < proposer.probe_budget; ++i) {
    bool as_edge = (i % 2 == 0);
    if (as_edge && (!val_edges.empty() || client.n >= 2)) {
      emit(Proposal::Kind::Edge, true, val_edges, {});
    } else if (!val_nodes.empty()) {
      emit(Proposal::Kind::Label, true, {}, val_nodes);
    }
  }
  // Deployment proposals on held-out targets.
  for (int i = 0; i < proposer.budget; ++i) {
    bool as_edge = (i % 2 == 0);
    if (as_edge && (!test_edges.empty() || client.n >= 2)) {
      emit(Proposal::Kind::Edge, false, test_edges, {});
    } else if (!test_nodes.empty()) {
      emit(Proposal::Kind::Label, false, {}, test_nodes);
    }
  }
  return out;
}

double binary_nll(const std::vector<double>& logits,
                  const std::vector<int>& labels, double temperature) {
  if (logits.empty() || logits.size() != labels.size())
    throw std::invalid_argument("binary_nll: empty or mismatched inputs");
  if (temperature <= 0.0) throw std::invalid_argument("binary_nll: T > 0 required");
  double nll = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double x = logits[i] / temperature;
    // -log sigmoid(x) = log(1 + exp(-x)), stable both tails
    double log_p = -std::log1p(std::exp(-std::abs(x))) + std::min(x, 0.0);
    double log_1mp = log_p - x;
    nll += labels[i] == 1 ? -log_p : -log_1mp;
  }
  return nll / static_cast<double>(logits.size());
}

double fit_temperature(const std::vector<double>& logits,
                       const std::vector<int>& labels) {
  if (logits.empty()) throw std::invalid_argument("fit_temperature: empty slice");
  bool any0 = false, any1 = false;
  for (int l : labels) (l == 1 ? any1 : any0) = true;
  if (!any0 || !any1)
    throw std::invalid_argument("fit_temperature: both outcomes must be present");

  // Golden section on log T.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = -3.0, hi = 3.0;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = binary_nll(logits, labels, std::exp(x1));
  double f2 = binary_nll(logits, labels, std::exp(x2));
  for (int it = 0; it < 200 && (hi - lo) > 1e-10; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = binary_nll(logits, labels, std::exp(x1));
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = binary_nll(logits, labels, std::exp(x2));
    }
  }
  double t = std::exp(0.5 * (lo + hi));
  if (binary_nll(logits, labels, t) > binary_nll(logits, labels, 1.0)) return 1.0;
  return t;
}

double ece(const std::vector<double>& confidences,
           const std::vector<int>& correctness, int n_bins) {
  if (confidences.empty() || confidences.size() != correctness.size())
    throw std::invalid_argument("ece: empty or mismatched inputs");
  if (n_bins < 1) throw std::invalid_argument("ece: n_bins >= 1");
  std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> acc_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<int> count(static_cast<std::size_t>(n_bins), 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    double c = confidences[i];
    if (c < 0.0 || c > 1.0) throw std::invalid_argument("ece: confidence outside [0,1]");
    // Right-closed bins ((b-1)/n, b/n]; zero goes to the first bin.
    int b = c <= 0.0 ? 0 : static_cast<int>(std::ceil(c * n_bins)) - 1;
    b = std::clamp(b, 0, n_bins - 1);
    conf_sum[static_cast<std::size_t>(b)] += c;
    acc_sum[static_cast<std::size_t>(b)] += correctness[i];
    ++count[static_cast<std::size_t>(b)];
  }
  double e = 0.0;
  const double n = static_cast<double>(confidences.size());
  for (int b = 0; b < n_bins; ++b) {
    if (count[static_cast<std::size_t>(b)] == 0) continue;
    double cb = static_cast<double>(count[static_cast<std::size_t>(b)]);
    e += (cb / n) * std::abs(acc_sum[static_cast<std::size_t>(b)] / cb -
                             conf_sum[static_cast<std::size_t>(b)] / cb);
  }
  return e;
}

double brier(const std::vector<double>& confidences,
             const std::vector<int>& outcomes) {
  if (confidences.empty() || confidences.size() != outcomes.size())
    throw std::invalid_argument("brier: empty or mismatched inputs");
  double s = 0.0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    double d = confidences[i] - outcomes[i];
    s += d * d;
  }
  return s / static_cast<double>(confidences.size());
}

std::vector<Proposal> admit(std::vector<Proposal> proposals,
                            const CalibrationModel& cal) {
  if (cal.temperature <= 0.0) throw std::invalid_argument("admit: T > 0 required");
  for (auto& p : proposals) {
    p.confidence = sigmoid(p.raw_logit / cal.temperature);
    p.accepted = !p.probe && p.confidence >= cal.tau;
  }
  return proposals;
}

AdmitStats admit_stats(const std::vector<Proposal>& proposals) {
  AdmitStats s;
  int correct = 0;
  for (const auto& p : proposals) {
    if (!p.accepted) continue;
    ++s.n_admitted;
    correct += p.ground_truth ? 1 : 0;
  }
  s.precision = s.n_admitted > 0 ? static_cast<double>(correct) / s.n_admitted : 0.0;
  return s;
}

std::string proposals_to_table(const std::vector<Proposal>& proposals) {
  std::ostringstream out;
  char buf[64];
  out << "kind,target,payload,raw_logit,confidence,accepted\n";
  for (const auto& p : proposals) {
    if (p.kind == Proposal::Kind::Edge) {
      out << "edge," << p.u << "-" << p.v << ",";
    } else {
      out << "label," << p.node << "," << p.payload;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", p.raw_logit);
    out << "," << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", p.confidence);
    out << "," << buf << "," << (p.accepted ? 1 : 0) << "\n";
  }
  return out.str();
}

}  // namespace lgdumap
