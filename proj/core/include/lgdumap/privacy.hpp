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

#ifndef LGDUMAP_PRIVACY_HPP
#define LGDUMAP_PRIVACY_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "lgdumap/rng.hpp"

namespace lgdumap {

struct DpConfig {
  double clip = 1.0;            // C
  double noise_sigma_dp = 0.0;  // noise multiplier; 0 disables noise
  double delta = 1e-5;
  double sampling_rate = 1.0;   // q
  int rounds = 1;               // T

  bool noise_enabled() const { return noise_sigma_dp > 0.0; }
  void validate() const;
};

// v if ||v|| <= c, else v * c / ||v||. Idempotent.
Eigen::VectorXd clip_to_norm(const Eigen::VectorXd& v, double c);

// Adds iid zero-mean Gaussian noise of standard deviation sigma_dp * c per
// coordinate. sigma_dp = 0 is the identity.
Eigen::VectorXd gaussian_mechanism(const Eigen::VectorXd& v, double c,
                                   double sigma_dp, Rng& rng);

// Per-step Renyi divergence of the subsampled Gaussian mechanism at order
// alpha > 1 (sensitivity 1, noise multiplier sigma, Poisson rate q).
// Integer orders use the exact binomial sum, fractional orders the
// two-sided series with stable log-space accumulation.
double subsampled_gaussian_rdp(double q, double sigma, double alpha);

// Ledger of accumulated Renyi divergences over a fixed order grid.
struct AccountantState {
  std::vector<double> orders;
  std::vector<double> rdp;  // accumulated, nondecreasing in steps
  int steps = 0;
  bool infinite = false;  // a step ran with sigma = 0

  static AccountantState make_default();
};

void accountant_step(AccountantState& state, double q, double sigma_dp);

// min over orders of rdp(alpha) + log(1/delta) / (alpha - 1); +inf when a
// noiseless step was taken, 0 when no steps.
double accountant_epsilon(const AccountantState& state, double delta);

// Loss-threshold membership inference: scores are negated losses, AUROC by
// rank statistic with ties counted half.
double mi_attack(const std::vector<double>& member_losses,
                 const std::vector<double>& nonmember_losses);

}  // namespace lgdumap

#endif  // LGDUMAP_PRIVACY_HPP
