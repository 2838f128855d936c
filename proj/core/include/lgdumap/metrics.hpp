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

#ifndef LGDUMAP_METRICS_HPP
#define LGDUMAP_METRICS_HPP

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace lgdumap {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Pooled TP/FP/FN over classes.
double micro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                int n_classes);

double worst_client(const std::vector<double>& values);
double percentile_10(const std::vector<double>& values);

// One ranking query: candidate scores plus the index of the true candidate.
// Ranking is by score descending with ties broken by candidate id.
struct RankQuery {
  std::vector<double> scores;
  int true_idx = 0;
};

std::pair<double, double> mrr_hits(const std::vector<RankQuery>& queries, int k);

// Rank-based manifold diagnostics with exact neighbor ranks.
double trustworthiness(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, int k);
double continuity(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, int k);

// Linear CKA on column-centered matrices.
double cka(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

// Similarity-transform Procrustes disparity (normalized residual).
double procrustes(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

}  // namespace lgdumap

#endif  // LGDUMAP_METRICS_HPP
