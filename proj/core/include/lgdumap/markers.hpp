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

#ifndef LGDUMAP_MARKERS_HPP
#define LGDUMAP_MARKERS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lgdumap/autodiff.hpp"
#include "lgdumap/encoder.hpp"

namespace lgdumap {

// Scalar prototypes in the pairwise-distance space. Positive markers carry
// edge-like distances, negative markers non-edge-like ones. Layout is
// positives first and fixed for the lifetime of a federation.
struct MarkerSet {
  Eigen::VectorXd loc;                      // >= 0
  std::vector<std::int8_t> polarity;        // +1 / -1
  double sigma_kern = 1.0;

  int size() const { return static_cast<int>(loc.size()); }
  int n_pos() const;
  int n_neg() const;
  std::vector<int> pos_indices() const;
  void validate() const;
};

// Factorized Gaussian over marker locations.
struct MarkerPosterior {
  Eigen::VectorXd mu;    // projected >= 0 after every update
  Eigen::VectorXd var;   // > 0
  std::vector<std::int8_t> polarity;
};

struct MarkerPrior {
  struct Component {
    double weight, mean, var;
  };
  std::vector<Component> components;

  double log_density(double x) const;
  void validate() const;
};

struct MarkerInit {
  MarkerSet set;
  MarkerPosterior posterior;
};

// Linear-interpolation quantile of an unsorted sample, level in [0, 1].
double quantile(std::vector<double> values, double level);

// Markers at evenly spaced quantiles (levels (e+0.5)/count) of the observed
// edge / non-edge distance samples. Posterior means sit on the locations;
// variances are (sample std / count)^2 floored at 1e-4.
MarkerInit init_markers(const std::vector<double>& pos_dists,
                        const std::vector<double>& neg_dists, int n_pos,
                        int n_neg, double sigma_kern);

// Softmax of -(s - m_e)^2 / (2 sigma^2) over all markers.
Eigen::VectorXd soft_assign(double s, const MarkerSet& markers);

// Positive-polarity mass of the soft assignment, clamped to
// [1e-6, 1 - 1e-6]. Requires both polarities present.
double link_prob(double s, const MarkerSet& markers);

// Monte Carlo estimate of KL(q || prior) with reparameterized samples,
// deterministic per seed.
double kl_posterior_prior(const MarkerPosterior& q, const MarkerPrior& prior,
                          int n_samples, std::uint64_t seed);

// Reparameterized draw, locations projected to >= 0.
MarkerSet sample_markers(const MarkerPosterior& q, double sigma_kern,
                         std::uint64_t seed);

// The only statistic that leaves a client.
Eigen::VectorXd expected_markers(const MarkerPosterior& q);

// Wire payload schema for federation: one "polarity,mu,var" row per marker.
std::string marker_posterior_to_table(const MarkerPosterior& q);
MarkerPosterior marker_posterior_from_table(const std::string& table);

struct ObjectiveWeights {
  double lambda = 0.1;  // KL
  double gamma = 0.2;   // alignment
  double eta = 1.0;     // umap
};

struct LossBundle {
  double nll = 0, bce = 0, kl = 0, align = 0, umap = 0, total = 0;
};

// Everything the client objective consumes besides the parameters.
struct ObjectiveInputs {
  std::vector<int> train_nodes;                  // NLL support
  std::vector<int> train_labels;                 // labels of train_nodes
  int n_classes = 0;
  std::vector<std::pair<int, int>> pos_edges;    // BCE label-1 pairs
  std::vector<std::pair<int, int>> neg_edges;    // BCE label-0 pairs
  const MatrixXd* H = nullptr;                   // text embeddings
  std::vector<int> align_mask;                   // nodes with text
  UmapBatch umap_batch;
  double curve_a = 1.0, curve_b = 1.0;
};

// Plain evaluation on a fixed marker draw; kl is passed in because the
// estimate is owned by kl_posterior_prior. NLL and BCE are means over
// their supports; align and umap are the sums of their ops.
LossBundle client_objective(const MatrixXd& Z, const MarkerSet& markers,
                            const ObjectiveInputs& in,
                            const ClassifierHead& head,
                            const ObjectiveWeights& w, double kl);

struct ObjectiveVars {
  ad::Var total, nll, bce, kl, align, umap;
};

// Tape assembly of the full objective. Marker samples are reparameterized
// from the lifted posterior blocks; xi_bce carries one column of standard
// normals per E_q sample, xi_kl one column per KL sample.
ObjectiveVars client_objective_t(ad::Tape& tape, const LiftedModel& lm,
                                 ad::Var Z, const ObjectiveInputs& in,
                                 const std::vector<std::int8_t>& polarity,
                                 double sigma_kern, const MatrixXd& xi_bce,
                                 const MatrixXd& xi_kl,
                                 const MarkerPrior& prior,
                                 const ObjectiveWeights& w);

}  // namespace lgdumap

#endif  // LGDUMAP_MARKERS_HPP
