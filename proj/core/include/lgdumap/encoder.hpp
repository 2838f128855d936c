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

#ifndef LGDUMAP_ENCODER_HPP
#define LGDUMAP_ENCODER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lgdumap/autodiff.hpp"
#include "lgdumap/graph.hpp"
#include "lgdumap/rng.hpp"

namespace lgdumap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Act { Tanh, Linear };

// Two-layer mean-aggregation GNN. Biases are 1 x width rows.
struct GnnParams {
  MatrixXd w_self1, w_nb1, b1;
  MatrixXd w_self2, w_nb2, b2;
  Act activation = Act::Tanh;
};

// Concatenate-and-project fusion; learned fill-ins for nodes that lack a
// text or a feature row.
struct FusionParams {
  MatrixXd proj;          // (m_g + m_t) x m
  MatrixXd missing_text;  // 1 x m_t
  MatrixXd missing_feat;  // 1 x p
};

// MLP m -> 64 -> 64 -> d plus the output-space curve constants.
struct UmapEncoderParams {
  MatrixXd w1, b1, w2, b2, w3, b3;
  double curve_a = 1.0;
  double curve_b = 1.0;
};

struct ClassifierHead {
  MatrixXd w;  // d x L
  MatrixXd b;  // 1 x L
};

// Directed smoothed kNN memberships plus the symmetrized weighted pair list.
struct NeighborGraph {
  std::vector<std::vector<std::pair<int, double>>> neighbors;  // (id, dist), ascending
  std::vector<double> rho;    // distance to nearest neighbor
  std::vector<double> sigma;  // smoothing scale, floored at 1e-3
  struct WeightedPair {
    int u, v;   // u < v
    double p;   // membership in (0, 1]
  };
  std::vector<WeightedPair> pairs;
};

// Deterministic stand-in for a text encoder: per-token unit Gaussian
// vectors (seeded by token hash) averaged and renormalized, so texts built
// from a shared template land near each other.
VectorXd text_embed_mock(const std::string& text, int m_t, std::uint64_t seed);

// Embeds every text-bearing node; rows without text are zero.
std::pair<MatrixXd, std::vector<std::uint8_t>> embed_texts(
    const ClientGraph& g, int m_t, std::uint64_t seed);

// Least-squares fit of (1 + a x^{2b})^{-1} to the min_dist/spread target
// curve. Throws on non-convergence.
std::pair<double, double> fit_ab(double min_dist, double spread);

// Output-space membership q_ij = (1 + a ||zi - zj||^{2b})^{-1}.
double q_ij(const VectorXd& zi, const VectorXd& zj, double a, double b);

// Exact kNN with smooth-kNN calibration (binary search to hit log2(k)),
// probabilistic t-conorm symmetrization and graph-aware union: p = 1 on
// every observed edge.
NeighborGraph build_knn(const MatrixXd& X, int k,
                        const std::vector<Edge>& observed_edges);
NeighborGraph build_knn(const MatrixXd& X, int k, const ClientGraph& g);

// A sampled mini-batch of the fuzzy-set cross entropy: positive pairs with
// their memberships and uniformly sampled negative pairs (p = 0).
struct UmapBatch {
  std::vector<std::pair<int, int>> pos;
  std::vector<double> p;
  std::vector<std::pair<int, int>> neg;
};

UmapBatch full_umap_batch(const NeighborGraph& ng, int n_neg, int n_nodes,
                          Rng& rng);
UmapBatch sample_umap_batch(const NeighborGraph& ng, int batch_pairs,
                            int n_neg, int n_nodes, Rng& rng);

// Cross entropy over the batch (a sum, matching the objective definition).
double umap_loss(const NeighborGraph& ng, const MatrixXd& Z, double a,
                 double b, int n_neg, std::uint64_t seed);
ad::Var umap_loss_t(ad::Tape& tape, ad::Var Z, const UmapBatch& batch,
                    double a, double b);

// Sum over masked nodes of one minus the cosine between the embedding row
// and its text vector. Rows with vanishing norm contribute 1 and are left
// out of the gradient.
double align_loss(const MatrixXd& Z, const MatrixXd& H,
                  const std::vector<int>& mask);
ad::Var align_loss_t(ad::Tape& tape, ad::Var Z, const MatrixXd& H,
                     const std::vector<int>& mask);

// --- parameter plumbing ------------------------------------------------

struct ModelDims {
  int feature_dim = 0;
  int hidden = 32;     // GNN width; also the fused dimension
  int text_dim = 8;    // equals umap_dim in the full pipeline
  int umap_dim = 8;
  int mlp_hidden = 64;
  int n_classes = 2;
};

struct ModelConfig {
  ModelDims dims;
  int markers_pos = 8;
  int markers_neg = 8;
  double sigma_kern = 1.0;
  double min_dist = 0.1;
  double spread = 1.0;
};

// All trainable state of one client.
struct ClientModel {
  GnnParams gnn;
  FusionParams fusion;
  UmapEncoderParams umap;
  ClassifierHead head;
  MatrixXd marker_mu;      // K x 1, kept >= 0 by projection after updates
  MatrixXd marker_logvar;  // K x 1
  std::vector<std::int8_t> marker_polarity;  // +1 / -1, positives first
  double sigma_kern = 1.0;

  static ClientModel init(const ModelConfig& cfg, std::uint64_t seed);

  // Stable enumeration of every trainable matrix, used by the optimizer,
  // the gradient checker and serialization.
  std::vector<std::pair<std::string, MatrixXd*>> blocks();
  std::vector<std::pair<std::string, const MatrixXd*>> blocks() const;
};

// Tape handles for the lifted parameter blocks, in blocks() order.
struct LiftedModel {
  std::vector<std::pair<std::string, ad::Var>> vars;
  ad::Var at(const std::string& name) const;
};

LiftedModel lift_model(ad::Tape& tape, const ClientModel& model,
                       bool requires_grad = true);

// Forward passes on the tape. Edge list controls the aggregation
// structure; absent feature rows are filled with fusion.missing_feat and
// absent texts with fusion.missing_text.
ad::Var gnn_forward_t(ad::Tape& tape, const LiftedModel& lm,
                      const ClientGraph& g, const std::vector<Edge>& edges,
                      Act activation);
ad::Var fuse_t(ad::Tape& tape, const LiftedModel& lm, ad::Var gnn_out,
               const MatrixXd& text_emb,
               const std::vector<std::uint8_t>& has_text);
ad::Var umap_forward_t(ad::Tape& tape, const LiftedModel& lm, ad::Var fused);

// Plain evaluations with the documented op contracts.
MatrixXd gnn_forward(const ClientGraph& g, const GnnParams& params,
                     const MatrixXd& missing_feat);
MatrixXd fuse(const MatrixXd& gnn_emb, const MatrixXd& text_emb,
              const std::vector<std::uint8_t>& has_text,
              const FusionParams& params);
MatrixXd umap_forward(const MatrixXd& fused, const UmapEncoderParams& params);

// Adam over the model's block list. Gradients must be in blocks() order.
class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}
  void step(std::vector<std::pair<std::string, MatrixXd*>> blocks,
            const std::vector<MatrixXd>& grads);
  void reset() { m_.clear(); v_.clear(); t_ = 0; }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<MatrixXd> m_, v_;
  long t_ = 0;
};

// Flat named-tensor file: one record per block, row-major values.
void save_named_tensors(
    const std::vector<std::pair<std::string, const MatrixXd*>>& tensors,
    const std::string& path);
std::vector<std::pair<std::string, MatrixXd>> load_named_tensors(
    const std::string& path);

}  // namespace lgdumap

#endif  // LGDUMAP_ENCODER_HPP
