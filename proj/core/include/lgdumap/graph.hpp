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

#ifndef LGDUMAP_GRAPH_HPP
#define LGDUMAP_GRAPH_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace lgdumap {

enum class Mask : std::uint8_t { None = 0, Train = 1, Val = 2, Test = 3 };

struct Edge {
  int u = 0;
  int v = 0;
  int rel = -1;  // optional relation id, -1 if untyped
};

// One client's private graph. Node ids are dense [0, n). A node with an
// all-NaN feature row has no features (cold-start nodes are the typical
// case); an empty string means the node has no text.
struct ClientGraph {
  int n = 0;
  std::vector<Edge> edges;           // undirected, canonical u < v, no dups
  Eigen::MatrixXd features;          // n x p
  std::vector<std::string> texts;    // size n, "" = absent
  std::vector<int> labels;           // size n, -1 = unlabeled
  int n_classes = 0;
  std::vector<Mask> node_mask;       // size n
  std::vector<Mask> edge_mask;       // parallel to edges
  std::vector<std::uint8_t> cold_start;  // size n
  std::vector<int> orig_ids;         // global ids when client came from a
                                     // partition; empty otherwise

  int feature_dim() const { return static_cast<int>(features.cols()); }
  bool has_feature(int i) const;
  bool has_text(int i) const { return !texts[static_cast<std::size_t>(i)].empty(); }
  bool has_edge(int u, int v) const;

  std::vector<int> nodes_with_mask(Mask m) const;
  std::vector<Edge> edges_with_mask(Mask m) const;
  std::vector<int> label_histogram() const;  // size n_classes

  // Throws std::invalid_argument on any invariant violation.
  void validate() const;
};

struct SplitConfig {
  int n_clients = 20;
  double label_skew_alpha = 0.3;  // Dirichlet concentration
  int fewshot_k = 10;
  double coldstart_fraction = 0.0;
  std::uint64_t seed = 1;
};

// Reads a graph from a directory holding:
//   edges.txt      one "i j [rel]" per line (whitespace separated)
//   features.csv   "node_id, f_0, ..., f_{p-1}" (absent row = all nan)
//   labels.csv     optional "node_id, class"
//   texts.csv      optional "node_id, text"
// Node ordering is by node id; feature rows must cover [0, n).
ClientGraph load_graph(const std::string& dir);

// Inverse of load_graph; writes the four files (labels/texts only when any
// node carries them) plus masks.csv with the split flags.
void save_graph(const ClientGraph& g, const std::string& dir);

// Stochastic block model with class-correlated Gaussian features and
// class-templated synthetic texts. Classes are contiguous, near-equal
// blocks of nodes. Deterministic per seed.
ClientGraph synth_graph(int n_nodes, int n_classes, double intra_p,
                        double inter_p, int feature_dim, int text_vocab,
                        std::uint64_t seed);

// Dirichlet label-skew partition. Every node lands on exactly one client;
// cross-client edges are dropped. Clients are re-indexed densely and carry
// orig_ids back to the input graph.
std::vector<ClientGraph> partition_noniid(const ClientGraph& graph,
                                          const SplitConfig& cfg);

// Marks exactly fewshot_k nodes as Train (stratified by class where
// possible); the remaining labeled nodes split 20% Val / 80% Test. Edges
// split 60/10/30 Train/Val/Test.
ClientGraph make_fewshot_split(const ClientGraph& client, int fewshot_k,
                               std::uint64_t seed);

// Blanks the feature rows of floor(fraction * n) text-bearing nodes and
// flags them cold_start. Texts are retained.
ClientGraph apply_coldstart(const ClientGraph& client, double fraction,
                            std::uint64_t seed);

}  // namespace lgdumap

#endif  // LGDUMAP_GRAPH_HPP
