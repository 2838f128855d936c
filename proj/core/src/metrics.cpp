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

#include "lgdumap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lgdumap {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += (preds[i] == labels[i]);
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double micro_f1(const std::vector<int>& preds, const std::vector<int>& labels,
                int n_classes) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("micro_f1: empty or mismatched inputs");
  long tp = 0, fp = 0, fn = 0;
  for (int c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < preds.size(); ++i) {
      bool p = preds[i] == c, l = labels[i] == c;
      tp += (p && l);
      fp += (p && !l);
      fn += (!p && l);
    }
  }
  double denom = 2.0 * tp + fp + fn;
  if (denom == 0.0) return 0.0;
  return 2.0 * tp / denom;
}

double worst_client(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("worst_client: empty input");
  return *std::min_element(values.begin(), values.end());
}

double percentile_10(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("percentile_10: empty input");
  std::vector<double> v = values;
  std::sort(v.begin(), v.end());
  if (v.size() == 1) return v[0];
  double pos = 0.10 * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

std::pair<double, double> mrr_hits(const std::vector<RankQuery>& queries, int k) {
  if (queries.empty()) throw std::invalid_argument("mrr_hits: no queries");
  double mrr = 0.0, hits = 0.0;
  for (const auto& q : queries) {
    if (q.true_idx < 0 || q.true_idx >= static_cast<int>(q.scores.size()))
      throw std::invalid_argument("mrr_hits: true index out of range");
    double st = q.scores[static_cast<std::size_t>(q.true_idx)];
    int rank = 1;
    for (int j = 0; j < static_cast<int>(q.scores.size()); ++j) {
      if (j == q.true_idx) continue;
      double sj = q.scores[static_cast<std::size_t>(j)];
      if (sj > st || (sj == st && j < q.true_idx)) ++rank;
    }
    mrr += 1.0 / rank;
    hits += (rank <= k) ? 1.0 : 0.0;
  }
  double n = static_cast<double>(queries.size());
  return {mrr / n, hits / n};
}

namespace {

// Ranks of every other point by distance from i (1-based, ties by index).
std::vector<int> rank_row(const Eigen::MatrixXd& X, int i) {
  const int n = static_cast<int>(X.rows());
  std::vector<std::pair<double, int>> d;
  d.reserve(static_cast<std::size_t>(n) - 1);
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    d.emplace_back((X.row(i) - X.row(j)).norm(), j);
  }
  std::sort(d.begin(), d.end());
  std::vector<int> rank(static_cast<std::size_t>(n), 0);
  for (std::size_t r = 0; r < d.size(); ++r)
    rank[static_cast<std::size_t>(d[r].second)] = static_cast<int>(r) + 1;
  return rank;
}

double rank_penalty(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, int k) {
  // Penalizes points in the k-neighborhood of B that are not in the
  // k-neighborhood of A, weighted by their A-rank excess over k.
  const int n = static_cast<int>(A.rows());
  if (A.rows() != B.rows()) throw std::invalid_argument("rank penalty: row mismatch");
  if (!(k >= 1 && 2 * k < n))
    throw std::invalid_argument("trustworthiness/continuity: need 1 <= k < n/2");
  double penalty = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<int> rank_a = rank_row(A, i);
    std::vector<int> rank_b = rank_row(B, i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (rank_b[static_cast<std::size_t>(j)] <= k &&
          rank_a[static_cast<std::size_t>(j)] > k)
        penalty += rank_a[static_cast<std::size_t>(j)] - k;
    }
  }
  double norm = 2.0 / (static_cast<double>(n) * k * (2.0 * n - 3.0 * k - 1.0));
  return 1.0 - norm * penalty;
}

}  // namespace

double trustworthiness(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, int k) {
  return rank_penalty(X, Z, k);
}

double continuity(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, int k) {
  return rank_penalty(Z, X, k);
}

double cka(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.rows() != Y.rows()) throw std::invalid_argument("cka: row mismatch");
  if (X.rows() < 2) throw std::invalid_argument("cka: need at least two rows");
  Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
  Eigen::MatrixXd Yc = Y.rowwise() - Y.colwise().mean();
  double cross = (Yc.transpose() * Xc).squaredNorm();
  double nx = (Xc.transpose() * Xc).norm();
  double ny = (Yc.transpose() * Yc).norm();
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("cka: degenerate (constant) input");
  return cross / (nx * ny);
}

double procrustes(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols())
    throw std::invalid_argument("procrustes: shape mismatch");
  if (X.rows() < 2) throw std::invalid_argument("procrustes: need at least two rows");
  Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
  Eigen::MatrixXd Yc = Y.rowwise() - Y.colwise().mean();
  double nx = Xc.norm(), ny = Yc.norm();
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("procrustes: degenerate (constant) input");
  Xc /= nx;
  Yc /= ny;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Xc.transpose() * Yc);
  double trace_s = svd.singularValues().sum();
  return std::max(0.0, 1.0 - trace_s * trace_s);
}

}  // namespace lgdumap
