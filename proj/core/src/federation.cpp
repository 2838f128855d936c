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

#include "lgdumap/federation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lgdumap/rng.hpp"

namespace lgdumap {

ServerState ServerState::init(int n_pos, int n_neg, int total_rounds) {
  if (n_pos < 1 || n_neg < 1)
    throw std::invalid_argument("server: need markers of both polarities");
  ServerState s;
  const int k = n_pos + n_neg;
  s.markers = Eigen::VectorXd::Zero(k);
  s.polarity.resize(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e)
    s.polarity[static_cast<std::size_t>(e)] = e < n_pos ? 1 : -1;
  s.polyak_sum = Eigen::VectorXd::Zero(k);
  s.polyak_burn_in = std::max(0, total_rounds / 5);
  // Diffuse placeholder prior until the first aggregation pins it down.
  s.prior.components = {{1.0, 2.0, 25.0}};
  s.accountant = AccountantState::make_default();
  return s;
}

Eigen::VectorXd ServerState::polyak_average() const {
  if (polyak_count == 0) return markers;
  return polyak_sum / static_cast<double>(polyak_count);
}

std::vector<int> sample_participants(int n_clients, double rate,
                                     std::uint64_t seed) {
  if (n_clients < 1) throw std::invalid_argument("sample_participants: n_clients >= 1");
  if (rate < 0.0 || rate > 1.0)
    throw std::invalid_argument("sample_participants: rate in [0,1]");
  Rng rng(derive_seed(seed, "participants"));
  std::vector<int> out;
  for (int i = 0; i < n_clients; ++i)
    if (rng.uniform() < rate) out.push_back(i);
  return out;
}

Eigen::VectorXd aggregate_markers(const Eigen::VectorXd& m_t,
                                  const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate_markers: no updates");
  double wsum = 0.0;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(m_t.size());
  for (const auto& u : updates) {
    if (u.payload.size() != m_t.size())
      throw std::invalid_argument("aggregate_markers: payload length mismatch");
    if (u.weight < 0.0) throw std::invalid_argument("aggregate_markers: negative weight");
    acc += u.weight * (u.payload - m_t);
    wsum += u.weight;
  }
  if (wsum <= 0.0) throw std::invalid_argument("aggregate_markers: all-zero weights");
  return (m_t + acc / wsum).cwiseMax(0.0);
}

std::vector<std::int64_t> quantize_fixed(const Eigen::VectorXd& v, int bits) {
  const double scale = std::ldexp(1.0, bits);
  std::vector<std::int64_t> out(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out[static_cast<std::size_t>(i)] = std::llround(v(i) * scale);
  return out;
}

Eigen::VectorXd dequantize_fixed(const std::vector<std::int64_t>& q, int bits) {
  const double scale = std::ldexp(1.0, bits);
  Eigen::VectorXd out(static_cast<Eigen::Index>(q.size()));
  for (std::size_t i = 0; i < q.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = static_cast<double>(q[i]) / scale;
  return out;
}

namespace {
std::uint64_t pair_mask_word(std::uint64_t base_seed, int a, int b,
                             Eigen::Index coord) {
  // One PRG stream per unordered pair; both members derive the same words.
  return splitmix64(derive_seed(base_seed, "pair-mask",
                                static_cast<std::uint64_t>(a) << 32 |
                                    static_cast<std::uint64_t>(b),
                                static_cast<std::uint64_t>(coord)));
}
}  // namespace

std::vector<std::uint64_t> mask_update(const Eigen::VectorXd& payload,
                                       int client_id, const MaskScheme& scheme) {
  if (std::find(scheme.participants.begin(), scheme.participants.end(),
                client_id) == scheme.participants.end())
    throw std::invalid_argument("mask_update: client has no pair seeds this round");
  std::vector<std::int64_t> q = quantize_fixed(payload, scheme.fixed_point_bits);
  std::vector<std::uint64_t> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    out[i] = static_cast<std::uint64_t>(q[i]);
  for (int other : scheme.participants) {
    if (other == client_id) continue;
    const int lo = std::min(client_id, other), hi = std::max(client_id, other);
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint64_t r =
          pair_mask_word(scheme.base_seed, lo, hi, static_cast<Eigen::Index>(i));
      // Lower id adds the mask, higher id subtracts it; mod 2^64 they cancel.
      out[i] += (client_id == lo) ? r : ~r + 1;
    }
  }
  return out;
}

std::vector<std::int64_t> unmask_sum(
    const std::vector<std::vector<std::uint64_t>>& masked) {
  if (masked.empty()) throw std::invalid_argument("unmask_sum: no payloads");
  std::vector<std::uint64_t> acc(masked.front().size(), 0);
  for (const auto& m : masked) {
    if (m.size() != acc.size())
      throw std::invalid_argument("unmask_sum: payload length mismatch");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m[i];
  }
  std::vector<std::int64_t> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    out[i] = static_cast<std::int64_t>(acc[i]);
  return out;
}

Eigen::VectorXd polyak_average(const std::vector<Eigen::VectorXd>& history,
                               int burn_in) {
  if (history.empty()) throw std::invalid_argument("polyak_average: empty history");
  burn_in = std::clamp(burn_in, 0, static_cast<int>(history.size()) - 1);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(history.front().size());
  int n = 0;
  for (std::size_t t = static_cast<std::size_t>(burn_in); t < history.size(); ++t) {
    acc += history[t];
    ++n;
  }
  return acc / static_cast<double>(n);
}

std::vector<double> convergence_monitor(
    const std::vector<Eigen::VectorXd>& history,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_oracle) {
  std::vector<double> out;
  out.reserve(history.size());
  for (const auto& m : history) out.push_back(grad_oracle(m).norm());
  return out;
}

QuadraticHarnessResult run_quadratic_harness(const QuadraticHarnessConfig& cfg) {
  if (cfg.n_clients < 1 || cfg.dim < 1 || cfg.rounds < 1)
    throw std::invalid_argument("quadratic harness: bad configuration");

  Rng target_rng(derive_seed(cfg.seed, "quad-targets"));
  std::vector<Eigen::VectorXd> targets;
  targets.reserve(static_cast<std::size_t>(cfg.n_clients));
  Eigen::VectorXd mean_c = Eigen::VectorXd::Zero(cfg.dim);
  for (int k = 0; k < cfg.n_clients; ++k) {
    Eigen::VectorXd c(cfg.dim);
    for (int j = 0; j < cfg.dim; ++j)
      c(j) = std::max(0.05, cfg.center + cfg.spread * target_rng.normal());
    targets.push_back(c);
    mean_c += c;
  }
  mean_c /= static_cast<double>(cfg.n_clients);

  Eigen::VectorXd m = Eigen::VectorXd::Zero(cfg.dim);
  std::vector<Eigen::VectorXd> history;
  for (int t = 0; t < cfg.rounds; ++t) {
    std::vector<int> parts = sample_participants(
        cfg.n_clients, cfg.participation, derive_seed(cfg.seed, "quad-round", t));
    if (parts.empty()) {
      history.push_back(m);
      continue;
    }
    std::vector<ClientUpdate> updates;
    MaskScheme scheme{derive_seed(cfg.seed, "quad-mask", t), 20, parts};
    std::vector<std::vector<std::uint64_t>> masked;
    for (int k : parts) {
      Eigen::VectorXd local = m;
      for (int s = 0; s < cfg.local_steps; ++s)
        local -= cfg.local_lr * (local - targets[static_cast<std::size_t>(k)]);
      Eigen::VectorXd drift = local - m;
      if (cfg.clip > 0.0) drift = clip_to_norm(drift, cfg.clip);
      ClientUpdate u;
      u.client_id = k;
      u.weight = 1.0;
      u.payload = m + drift;
      u.payload_bytes = sizeof(int) + sizeof(double) +
                        static_cast<std::size_t>(drift.size()) * sizeof(double);
      updates.push_back(u);
      if (cfg.use_masking) masked.push_back(mask_update(drift, k, scheme));
    }
    if (cfg.use_masking) {
      Eigen::VectorXd sum =
          dequantize_fixed(unmask_sum(masked), scheme.fixed_point_bits);
      m = (m + sum / static_cast<double>(parts.size())).cwiseMax(0.0);
    } else {
      m = aggregate_markers(m, updates);
    }
    history.push_back(m);
  }

  QuadraticHarnessResult res;
  res.minimizer = mean_c;
  res.final_m = m;
  res.grad_norms = convergence_monitor(
      history, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x - mean_c; });
  res.polyak_m = polyak_average(history, cfg.rounds / 5);
  return res;
}

}  // namespace lgdumap
