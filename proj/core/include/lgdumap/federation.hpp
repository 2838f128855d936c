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

#ifndef LGDUMAP_FEDERATION_HPP
#define LGDUMAP_FEDERATION_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "lgdumap/markers.hpp"
#include "lgdumap/privacy.hpp"

namespace lgdumap {

// Server-side view of the federation: the global marker vector, its round
// history and the privacy ledger. Markers stay >= 0 and keep a fixed
// polarity layout across rounds.
struct ServerState {
  Eigen::VectorXd markers;  // M_t
  std::vector<std::int8_t> polarity;
  int round = 0;
  Eigen::VectorXd polyak_sum;
  int polyak_count = 0;
  int polyak_burn_in = 0;
  std::vector<Eigen::VectorXd> history;  // M_t after each round
  std::vector<double> agg_update_norms;
  MarkerPrior prior;
  bool prior_fitted = false;
  AccountantState accountant;

  static ServerState init(int n_pos, int n_neg, int total_rounds);
  Eigen::VectorXd polyak_average() const;
};

// The only thing a client sends: expected markers after the clipped (and
// optionally noised) local drift, plus its aggregation weight.
struct ClientUpdate {
  int client_id = 0;
  double weight = 1.0;
  Eigen::VectorXd payload;
  std::size_t payload_bytes = 0;
};

// Independent Bernoulli(rate) participation, deterministic per seed.
std::vector<int> sample_participants(int n_clients, double rate,
                                     std::uint64_t seed);

// M_{t+1} = M_t + sum_k w_k (payload_k - M_t) / sum_k w_k, projected >= 0.
Eigen::VectorXd aggregate_markers(const Eigen::VectorXd& m_t,
                                  const std::vector<ClientUpdate>& updates);

// Pairwise additive masking over fixed-point payloads. Masks of a pair
// cancel exactly, so the sum of masked vectors equals the sum of quantized
// plain vectors bit for bit. No dropout recovery: every listed participant
// must deliver.
struct MaskScheme {
  std::uint64_t base_seed = 0;
  int fixed_point_bits = 20;
  std::vector<int> participants;
};

std::vector<std::int64_t> quantize_fixed(const Eigen::VectorXd& v, int bits);
Eigen::VectorXd dequantize_fixed(const std::vector<std::int64_t>& q, int bits);

std::vector<std::uint64_t> mask_update(const Eigen::VectorXd& payload,
                                       int client_id, const MaskScheme& scheme);
std::vector<std::int64_t> unmask_sum(
    const std::vector<std::vector<std::uint64_t>>& masked);

// Running mean of the iterates from burn_in on.
Eigen::VectorXd polyak_average(const std::vector<Eigen::VectorXd>& history,
                               int burn_in);

// ||grad L(M_t)|| per recorded round, for a caller-supplied gradient oracle.
std::vector<double> convergence_monitor(
    const std::vector<Eigen::VectorXd>& history,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_oracle);

// Synthetic quadratic federation: client k owns L_k(M) = 0.5 ||M - c_k||^2,
// so L(M) has the closed-form minimizer mean(c_k). Exercises the exact
// aggregation/masking/participation path without any graph machinery.
struct QuadraticHarnessConfig {
  int n_clients = 20;
  int dim = 8;
  double center = 2.0;   // targets drawn N(center, spread^2), kept positive
  double spread = 0.5;
  double participation = 1.0;
  double local_lr = 0.5;
  int local_steps = 1;
  int rounds = 50;
  std::uint64_t seed = 1;
  bool use_masking = false;
  double clip = 0.0;  // 0 disables clipping
};

struct QuadraticHarnessResult {
  std::vector<double> grad_norms;        // ||grad L(M_t)|| after each round
  Eigen::VectorXd final_m;
  Eigen::VectorXd polyak_m;              // averaged from rounds/5 on
  Eigen::VectorXd minimizer;             // mean of the client targets
};

QuadraticHarnessResult run_quadratic_harness(const QuadraticHarnessConfig& cfg);

}  // namespace lgdumap

#endif  // LGDUMAP_FEDERATION_HPP
