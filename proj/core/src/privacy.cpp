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

#include "lgdumap/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lgdumap {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double log_sub(double a, double b) {
  if (b == -kInf) return a;
  if (a < b) throw std::runtime_error("accountant: log_sub of negative value");
  if (a == b) return -kInf;
  return a + std::log1p(-std::exp(b - a));
}

double log_erfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  // Asymptotic expansion; relative error below 1e-9 for x >= 25.
  double x2 = x * x;
  double series = 1.0 - 0.5 / x2 + 0.75 / (x2 * x2) - 1.875 / (x2 * x2 * x2);
  return -x2 - std::log(x * std::sqrt(3.14159265358979323846)) + std::log(series);
}

double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Exact log A_alpha for integer alpha: binomial expansion of the moment of
// the sampled Gaussian privacy loss.
double log_a_int(double q, double sigma, int alpha) {
  double acc = -kInf;
  for (int i = 0; i <= alpha; ++i) {
    double t = log_binom(alpha, i) + i * std::log(q) +
               (alpha - i) * std::log1p(-q) +
               (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma);
    acc = log_add(acc, t);
  }
  return acc;
}

// Fractional alpha: split the integral at z0 and accumulate the two-sided
// binomial series with erfc tails. Terms alternate once i exceeds alpha;
// convergence is geometric with ratio (1 - q).
double log_a_frac(double q, double sigma, double alpha) {
  double log_a0 = -kInf, log_a1 = -kInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  double coef = 1.0;  // binom(alpha, i), via the product recurrence
  for (int i = 0;; ++i) {
    if (i > 0) coef *= (alpha - (i - 1)) / i;
    if (coef == 0.0) break;
    double log_coef = std::log(std::abs(coef));
    double j = alpha - i;

    double log_t0 = log_coef + i * std::log(q) + j * std::log1p(-q);
    double log_t1 = log_coef + j * std::log(q) + i * std::log1p(-q);
    double log_e0 = std::log(0.5) + log_erfc((i - z0) / (std::sqrt(2.0) * sigma));
    double log_e1 = std::log(0.5) + log_erfc((z0 - j) / (std::sqrt(2.0) * sigma));
    double log_s0 = log_t0 + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma) + log_e0;
    double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;

    if (coef > 0.0) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0 && i > static_cast<int>(alpha) + 1) break;
    if (i > 5000) throw std::runtime_error("accountant: series did not converge");
  }
  return log_add(log_a0, log_a1);
}

}  // namespace

void DpConfig::validate() const {
  if (clip <= 0.0) throw std::invalid_argument("dp: clip must be positive");
  if (noise_sigma_dp < 0.0) throw std::invalid_argument("dp: noise multiplier must be >= 0");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("dp: delta must be in (0,1)");
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0))
    throw std::invalid_argument("dp: sampling rate must be in (0,1]");
  if (rounds < 1) throw std::invalid_argument("dp: rounds must be positive");
}

Eigen::VectorXd clip_to_norm(const Eigen::VectorXd& v, double c) {
  if (c <= 0.0) throw std::invalid_argument("clip: norm bound must be positive");
  double n = v.norm();
  if (n <= c) return v;
  return v * (c / n);
}

Eigen::VectorXd gaussian_mechanism(const Eigen::VectorXd& v, double c,
                                   double sigma_dp, Rng& rng) {
  if (sigma_dp < 0.0) throw std::invalid_argument("gaussian_mechanism: sigma_dp >= 0");
  if (sigma_dp == 0.0) return v;
  Eigen::VectorXd out = v;
  const double sd = sigma_dp * c;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += sd * rng.normal();
  return out;
}

double subsampled_gaussian_rdp(double q, double sigma, double alpha) {
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("rdp: q in (0,1]");
  if (alpha <= 1.0) throw std::invalid_argument("rdp: alpha must exceed 1");
  if (sigma <= 0.0) return kInf;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  double log_a;
  if (std::floor(alpha) == alpha)
    log_a = log_a_int(q, sigma, static_cast<int>(alpha));
  else
    log_a = log_a_frac(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1.0));
}

AccountantState AccountantState::make_default() {
  AccountantState s;
  s.orders = {1.25, 1.5};
  for (int a = 2; a <= 64; ++a) s.orders.push_back(a);
  s.orders.push_back(128.0);
  s.orders.push_back(256.0);
  s.rdp.assign(s.orders.size(), 0.0);
  return s;
}

void accountant_step(AccountantState& state, double q, double sigma_dp) {
  if (state.orders.empty()) state = AccountantState::make_default();
  if (sigma_dp <= 0.0) {
    state.infinite = true;
    ++state.steps;
    return;
  }
  for (std::size_t i = 0; i < state.orders.size(); ++i)
    state.rdp[i] += subsampled_gaussian_rdp(q, sigma_dp, state.orders[i]);
  ++state.steps;
}

double accountant_epsilon(const AccountantState& state, double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("accountant_epsilon: delta in (0,1)");
  if (state.infinite) return kInf;
  if (state.steps == 0) return 0.0;
  double best = kInf;
  for (std::size_t i = 0; i < state.orders.size(); ++i) {
    double eps = state.rdp[i] + std::log(1.0 / delta) / (state.orders[i] - 1.0);
    best = std::min(best, eps);
  }
  return best;
}

double mi_attack(const std::vector<double>& member_losses,
                 const std::vector<double>& nonmember_losses) {
  if (member_losses.empty() || nonmember_losses.empty())
    throw std::invalid_argument("mi_attack: both loss lists must be nonempty");

  // Scores are -loss; rank-sum with average ranks for ties.
  struct Item {
    double score;
    bool member;
  };
  std::vector<Item> items;
  items.reserve(member_losses.size() + nonmember_losses.size());
  for (double l : member_losses) items.push_back({-l, true});
  for (double l : nonmember_losses) items.push_back({-l, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });

  double rank_sum_members = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (items[k].member) rank_sum_members += avg_rank;
    i = j;
  }
  const double nm = static_cast<double>(member_losses.size());
  const double nn = static_cast<double>(nonmember_losses.size());
  double u = rank_sum_members - nm * (nm + 1.0) / 2.0;
  return u / (nm * nn);
}

}  // namespace lgdumap
