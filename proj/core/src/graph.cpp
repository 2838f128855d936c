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

#include "lgdumap/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lgdumap/rng.hpp"

namespace lgdumap {

namespace {

Edge canonical(int u, int v, int rel) {
  if (u > v) std::swap(u, v);
  return Edge{u, v, rel};
}

[[noreturn]] void parse_fail(const std::string& file, int line,
                             const std::string& what) {
  throw std::runtime_error(file + ":" + std::to_string(line) +
                           ": parse error: " + what);
}

std::vector<std::string> split_csv(const std::string& line, int max_fields) {
  // Splits on commas; when max_fields > 0 the last field absorbs the rest
  // of the line (texts may contain commas).
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    if (max_fields > 0 && static_cast<int>(out.size()) == max_fields - 1) {
      out.push_back(line.substr(pos));
      break;
    }
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r' || f.back() == '\t')) f.pop_back();
  }
  return out;
}

}  // namespace

bool ClientGraph::has_feature(int i) const {
  if (features.cols() == 0) return false;
  return !std::isnan(features(i, 0));
}

bool ClientGraph::has_edge(int u, int v) const {
  if (u > v) std::swap(u, v);
  for (const auto& e : edges)
    if (e.u == u && e.v == v) return true;
  return false;
}

std::vector<int> ClientGraph::nodes_with_mask(Mask m) const {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (node_mask[static_cast<std::size_t>(i)] == m) out.push_back(i);
  return out;
}

std::vector<Edge> ClientGraph::edges_with_mask(Mask m) const {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edge_mask[i] == m) out.push_back(edges[i]);
  return out;
}

std::vector<int> ClientGraph::label_histogram() const {
  std::vector<int> h(static_cast<std::size_t>(std::max(0, n_classes)), 0);
  for (int l : labels)
    if (l >= 0) {
      if (l >= n_classes)
        throw std::invalid_argument("label out of range of n_classes");
      ++h[static_cast<std::size_t>(l)];
    }
  return h;
}

void ClientGraph::validate() const {
  if (n < 0) throw std::invalid_argument("negative node count");
  if (features.rows() != n) throw std::invalid_argument("feature rows != n");
  if (static_cast<int>(texts.size()) != n ||
      static_cast<int>(labels.size()) != n ||
      static_cast<int>(node_mask.size()) != n ||
      static_cast<int>(cold_start.size()) != n)
    throw std::invalid_argument("per-node arrays must have length n");
  if (edge_mask.size() != edges.size())
    throw std::invalid_argument("edge_mask length != edge count");

  std::set<std::pair<int, int>> seen;
  for (const auto& e : edges) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n)
      throw std::invalid_argument("edge endpoint out of range: (" +
                                  std::to_string(e.u) + "," +
                                  std::to_string(e.v) + ")");
    if (e.u == e.v) throw std::invalid_argument("self-loop");
    if (e.u > e.v) throw std::invalid_argument("edge not canonical (u<v)");
    if (!seen.insert({e.u, e.v}).second)
      throw std::invalid_argument("duplicate undirected edge");
  }
  for (int i = 0; i < n; ++i) {
    int l = labels[static_cast<std::size_t>(i)];
    if (l >= n_classes)
      throw std::invalid_argument("label id exceeds n_classes");
    if (cold_start[static_cast<std::size_t>(i)]) {
      if (has_feature(i))
        throw std::invalid_argument("cold_start node has a feature row");
      if (!has_text(i))
        throw std::invalid_argument("cold_start node lacks text");
    }
  }
}

ClientGraph load_graph(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string edge_path = dir + "/edges.txt";
  const std::string feat_path = dir + "/features.csv";
  if (!fs::exists(edge_path)) throw std::runtime_error("missing " + edge_path);
  if (!fs::exists(feat_path)) throw std::runtime_error("missing " + feat_path);

  ClientGraph g;

  // Features first: they define n and the node ordering.
  {
    std::ifstream in(feat_path);
    std::string line;
    int lineno = 0;
    std::vector<std::pair<int, std::vector<double>>> rows;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      auto fields = split_csv(line, 0);
      if (fields.size() < 2) parse_fail(feat_path, lineno, "need node_id and at least one feature");
      int id;
      try {
        id = std::stoi(fields[0]);
      } catch (const std::exception&) {
        parse_fail(feat_path, lineno, "bad node id '" + fields[0] + "'");
      }
      std::vector<double> vals;
      for (std::size_t i = 1; i < fields.size(); ++i) {
        if (fields[i] == "nan" || fields[i] == "NaN") {
          vals.push_back(std::nan(""));
          continue;
        }
        try {
          vals.push_back(std::stod(fields[i]));
        } catch (const std::exception&) {
          parse_fail(feat_path, lineno, "bad feature value '" + fields[i] + "'");
        }
      }
      rows.emplace_back(id, std::move(vals));
    }
    if (rows.empty()) throw std::runtime_error(feat_path + ": no feature rows");
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    g.n = static_cast<int>(rows.size());
    const std::size_t p = rows.front().second.size();
    for (int i = 0; i < g.n; ++i) {
      if (rows[static_cast<std::size_t>(i)].first != i)
        throw std::invalid_argument(feat_path + ": node ids must cover [0, n) densely");
      if (rows[static_cast<std::size_t>(i)].second.size() != p)
        throw std::invalid_argument(feat_path + ": ragged feature rows");
    }
    g.features.resize(g.n, static_cast<Eigen::Index>(p));
    for (int i = 0; i < g.n; ++i)
      for (std::size_t j = 0; j < p; ++j)
        g.features(i, static_cast<Eigen::Index>(j)) =
            rows[static_cast<std::size_t>(i)].second[j];
  }

  g.texts.assign(static_cast<std::size_t>(g.n), "");
  g.labels.assign(static_cast<std::size_t>(g.n), -1);
  g.node_mask.assign(static_cast<std::size_t>(g.n), Mask::None);
  g.cold_start.assign(static_cast<std::size_t>(g.n), 0);

  {
    std::ifstream in(edge_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ss(line);
      int u, v;
      if (!(ss >> u >> v)) parse_fail(edge_path, lineno, "expected 'i j [rel]'");
      int rel = -1;
      ss >> rel;  // optional
      if (u < 0 || u >= g.n || v < 0 || v >= g.n)
        throw std::invalid_argument(edge_path + ":" + std::to_string(lineno) +
                                    ": dangling edge endpoint (" +
                                    std::to_string(u) + "," + std::to_string(v) +
                                    ") with n=" + std::to_string(g.n));
      g.edges.push_back(canonical(u, v, rel));
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.u, a.v) < std::tie(b.u, b.v);
  });
  g.edge_mask.assign(g.edges.size(), Mask::None);

  const std::string label_path = dir + "/labels.csv";
  if (fs::exists(label_path)) {
    std::ifstream in(label_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      auto fields = split_csv(line, 0);
      if (fields.size() != 2) parse_fail(label_path, lineno, "expected 'node_id, class'");
      int id = std::stoi(fields[0]);
      int cls = std::stoi(fields[1]);
      if (id < 0 || id >= g.n)
        throw std::invalid_argument(label_path + ":" + std::to_string(lineno) + ": node id out of range");
      g.labels[static_cast<std::size_t>(id)] = cls;
      g.n_classes = std::max(g.n_classes, cls + 1);
    }
  }

  const std::string text_path = dir + "/texts.csv";
  if (fs::exists(text_path)) {
    std::ifstream in(text_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      auto fields = split_csv(line, 2);
      if (fields.size() != 2) parse_fail(text_path, lineno, "expected 'node_id, text'");
      int id = std::stoi(fields[0]);
      if (id < 0 || id >= g.n)
        throw std::invalid_argument(text_path + ":" + std::to_string(lineno) + ": node id out of range");
      g.texts[static_cast<std::size_t>(id)] = fields[1];
    }
  }

  const std::string mask_path = dir + "/masks.csv";
  if (fs::exists(mask_path)) {
    std::ifstream in(mask_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      auto fields = split_csv(line, 0);
      if (fields.size() != 3) parse_fail(mask_path, lineno, "expected 'kind, index, mask'");
      int idx = std::stoi(fields[1]);
      int m = std::stoi(fields[2]);
      if (fields[0] == "node") {
        if (m == 4) {
          g.cold_start[static_cast<std::size_t>(idx)] = 1;
        } else {
          g.node_mask[static_cast<std::size_t>(idx)] = static_cast<Mask>(m);
        }
      } else if (fields[0] == "edge") {
        g.edge_mask[static_cast<std::size_t>(idx)] = static_cast<Mask>(m);
      } else {
        parse_fail(mask_path, lineno, "kind must be node|edge");
      }
    }
  }

  g.validate();
  return g;
}

void save_graph(const ClientGraph& g, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir + "/edges.txt");
    for (const auto& e : g.edges) {
      out << e.u << " " << e.v;
      if (e.rel >= 0) out << " " << e.rel;
      out << "\n";
    }
  }
  {
    std::ofstream out(dir + "/features.csv");
    char buf[64];
    for (int i = 0; i < g.n; ++i) {
      out << i;
      for (int j = 0; j < g.feature_dim(); ++j) {
        double v = g.features(i, j);
        if (std::isnan(v)) {
          out << ",nan";
        } else {
          std::snprintf(buf, sizeof(buf), "%.17g", v);
          out << "," << buf;
        }
      }
      out << "\n";
    }
  }
  bool any_label = false, any_text = false;
  for (int i = 0; i < g.n; ++i) {
    any_label = any_label || g.labels[static_cast<std::size_t>(i)] >= 0;
    any_text = any_text || g.has_text(i);
  }
  if (any_label) {
    std::ofstream out(dir + "/labels.csv");
    for (int i = 0; i < g.n; ++i)
      if (g.labels[static_cast<std::size_t>(i)] >= 0)
        out << i << "," << g.labels[static_cast<std::size_t>(i)] << "\n";
  }
  if (any_text) {
    std::ofstream out(dir + "/texts.csv");
    for (int i = 0; i < g.n; ++i)
      if (g.has_text(i)) out << i << "," << g.texts[static_cast<std::size_t>(i)] << "\n";
  }
  {
    std::ofstream out(dir + "/masks.csv");
    for (int i = 0; i < g.n; ++i) {
      if (g.node_mask[static_cast<std::size_t>(i)] != Mask::None)
        out << "node," << i << "," << static_cast<int>(g.node_mask[static_cast<std::size_t>(i)]) << "\n";
      if (g.cold_start[static_cast<std::size_t>(i)]) out << "node," << i << ",4\n";
    }
    for (std::size_t i = 0; i < g.edges.size(); ++i)
      if (g.edge_mask[i] != Mask::None)
        out << "edge," << i << "," << static_cast<int>(g.edge_mask[i]) << "\n";
  }
}

ClientGraph synth_graph(int n_nodes, int n_classes, double intra_p,
                        double inter_p, int feature_dim, int text_vocab,
                        std::uint64_t seed) {
  if (n_classes > n_nodes)
    throw std::invalid_argument("n_classes > n_nodes");
  if (!(inter_p >= 0.0 && inter_p <= intra_p && intra_p <= 1.0))
    throw std::invalid_argument("need 0 <= inter_p <= intra_p <= 1");
  if (feature_dim <= 0) throw std::invalid_argument("feature_dim must be positive");

  ClientGraph g;
  g.n = n_nodes;
  g.n_classes = n_classes;
  g.labels.resize(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i)
    g.labels[static_cast<std::size_t>(i)] =
        static_cast<int>((static_cast<long long>(i) * n_classes) / n_nodes);

  // Class means drawn once; nodes are mean + unit Gaussian noise.
  Rng rng_mean(derive_seed(seed, "synth-means"));
  Eigen::MatrixXd means(n_classes, feature_dim);
  for (int c = 0; c < n_classes; ++c)
    for (int j = 0; j < feature_dim; ++j) means(c, j) = 2.0 * rng_mean.normal();

  Rng rng_feat(derive_seed(seed, "synth-features"));
  g.features.resize(n_nodes, feature_dim);
  for (int i = 0; i < n_nodes; ++i)
    for (int j = 0; j < feature_dim; ++j)
      g.features(i, j) = means(g.labels[static_cast<std::size_t>(i)], j) + rng_feat.normal();

  Rng rng_edge(derive_seed(seed, "synth-edges"));
  for (int i = 0; i < n_nodes; ++i)
    for (int j = i + 1; j < n_nodes; ++j) {
      double p = (g.labels[static_cast<std::size_t>(i)] ==
                  g.labels[static_cast<std::size_t>(j)])
                     ? intra_p
                     : inter_p;
      if (rng_edge.uniform() < p) g.edges.push_back(Edge{i, j, -1});
    }
  g.edge_mask.assign(g.edges.size(), Mask::None);

  // Class-templated texts: a topic token plus words drawn mostly from the
  // class's slice of the vocabulary, with one global noise word.
  Rng rng_text(derive_seed(seed, "synth-texts"));
  g.texts.resize(static_cast<std::size_t>(n_nodes));
  const int vocab = std::max(text_vocab, n_classes);
  const int slice = std::max(1, vocab / n_classes);
  for (int i = 0; i < n_nodes; ++i) {
    int c = g.labels[static_cast<std::size_t>(i)];
    std::string t = "topic" + std::to_string(c);
    for (int w = 0; w < 3; ++w) {
      int word = c * slice + rng_text.uniform_int(slice);
      t += " w" + std::to_string(word % vocab);
    }
    t += " w" + std::to_string(rng_text.uniform_int(vocab));
    g.texts[static_cast<std::size_t>(i)] = t;
  }

  g.node_mask.assign(static_cast<std::size_t>(n_nodes), Mask::None);
  g.cold_start.assign(static_cast<std::size_t>(n_nodes), 0);
  g.validate();
  return g;
}

std::vector<ClientGraph> partition_noniid(const ClientGraph& graph,
                                          const SplitConfig& cfg) {
  if (cfg.n_clients < 1) throw std::invalid_argument("n_clients must be >= 1");
  for (int i = 0; i < graph.n; ++i)
    if (graph.labels[static_cast<std::size_t>(i)] < 0)
      throw std::invalid_argument("partition_noniid requires labels on all nodes");

  const int K = cfg.n_clients;
  constexpr int kMaxRetries = 100;
  std::vector<int> assign(static_cast<std::size_t>(graph.n), 0);

  bool ok = false;
  for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
    Rng rng(derive_seed(cfg.seed, "partition", static_cast<std::uint64_t>(attempt)));
    std::vector<std::vector<double>> props(static_cast<std::size_t>(graph.n_classes));
    for (auto& p : props) p = rng.dirichlet(cfg.label_skew_alpha, K);
    std::vector<int> counts(static_cast<std::size_t>(K), 0);
    for (int i = 0; i < graph.n; ++i) {
      const auto& p = props[static_cast<std::size_t>(graph.labels[static_cast<std::size_t>(i)])];
      double u = rng.uniform();
      double acc = 0.0;
      int k = K - 1;
      for (int c = 0; c < K; ++c) {
        acc += p[static_cast<std::size_t>(c)];
        if (u < acc) {
          k = c;
          break;
        }
      }
      assign[static_cast<std::size_t>(i)] = k;
      ++counts[static_cast<std::size_t>(k)];
    }
    ok = std::all_of(counts.begin(), counts.end(), [](int c) { return c > 0; });
  }
  if (!ok)
    throw std::runtime_error("partition_noniid: a client stayed empty after bounded retries; "
                             "raise label_skew_alpha or lower n_clients");

  std::vector<std::vector<int>> members(static_cast<std::size_t>(K));
  for (int i = 0; i < graph.n; ++i)
    members[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].push_back(i);

  std::vector<int> local_id(static_cast<std::size_t>(graph.n), -1);
  std::vector<ClientGraph> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& m = members[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < m.size(); ++i) local_id[static_cast<std::size_t>(m[i])] = static_cast<int>(i);
    ClientGraph c;
    c.n = static_cast<int>(m.size());
    c.n_classes = graph.n_classes;
    c.orig_ids = m;
    c.features.resize(c.n, graph.feature_dim());
    c.texts.resize(static_cast<std::size_t>(c.n));
    c.labels.resize(static_cast<std::size_t>(c.n));
    c.node_mask.assign(static_cast<std::size_t>(c.n), Mask::None);
    c.cold_start.resize(static_cast<std::size_t>(c.n));
    for (std::size_t i = 0; i < m.size(); ++i) {
      int gi = m[i];
      c.features.row(static_cast<Eigen::Index>(i)) = graph.features.row(gi);
      c.texts[i] = graph.texts[static_cast<std::size_t>(gi)];
      c.labels[i] = graph.labels[static_cast<std::size_t>(gi)];
      c.node_mask[i] = graph.node_mask[static_cast<std::size_t>(gi)];
      c.cold_start[i] = graph.cold_start[static_cast<std::size_t>(gi)];
    }
    for (std::size_t ei = 0; ei < graph.edges.size(); ++ei) {
      const auto& e = graph.edges[ei];
      if (assign[static_cast<std::size_t>(e.u)] == k && assign[static_cast<std::size_t>(e.v)] == k) {
        int lu = local_id[static_cast<std::size_t>(e.u)];
        int lv = local_id[static_cast<std::size_t>(e.v)];
        c.edges.push_back(canonical(lu, lv, e.rel));
        c.edge_mask.push_back(graph.edge_mask[ei]);
      }
    }
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

ClientGraph make_fewshot_split(const ClientGraph& client, int fewshot_k,
                               std::uint64_t seed) {
  if (fewshot_k < 0) throw std::invalid_argument("fewshot_k must be >= 0");
  ClientGraph g = client;
  std::vector<int> labeled;
  for (int i = 0; i < g.n; ++i)
    if (g.labels[static_cast<std::size_t>(i)] >= 0) labeled.push_back(i);
  if (static_cast<int>(labeled.size()) < fewshot_k)
    throw std::invalid_argument(
        "make_fewshot_split: only " + std::to_string(labeled.size()) +
        " labeled nodes for fewshot_k=" + std::to_string(fewshot_k) +
        " (short by " + std::to_string(fewshot_k - static_cast<int>(labeled.size())) + ")");

  g.node_mask.assign(static_cast<std::size_t>(g.n), Mask::None);

  // Stratified pick: rotate over classes, taking one random unused node of
  // each class while any remain.
  Rng rng(derive_seed(seed, "fewshot-nodes"));
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(std::max(1, g.n_classes)));
  for (int i : labeled)
    by_class[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (auto& v : by_class) rng.shuffle(v);
  std::vector<int> train;
  std::size_t cls = 0;
  while (static_cast<int>(train.size()) < fewshot_k) {
    bool any = false;
    for (std::size_t step = 0; step < by_class.size() && static_cast<int>(train.size()) < fewshot_k; ++step) {
      auto& v = by_class[(cls + step) % by_class.size()];
      if (!v.empty()) {
        train.push_back(v.back());
        v.pop_back();
        any = true;
      }
    }
    cls = (cls + 1) % by_class.size();
    if (!any) break;
  }
  for (int i : train) g.node_mask[static_cast<std::size_t>(i)] = Mask::Train;

  std::vector<int> rest;
  for (int i : labeled)
    if (g.node_mask[static_cast<std::size_t>(i)] == Mask::None) rest.push_back(i);
  rng.shuffle(rest);
  std::size_t n_val = rest.size() / 5;  // 20% val, remainder test
  for (std::size_t i = 0; i < rest.size(); ++i)
    g.node_mask[static_cast<std::size_t>(rest[i])] = i < n_val ? Mask::Val : Mask::Test;

  // Edge split: 60/10/30 train/val/test.
  Rng erng(derive_seed(seed, "fewshot-edges"));
  std::vector<std::size_t> order(g.edges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  erng.shuffle(order);
  const std::size_t n_train_e = (g.edges.size() * 6) / 10;
  const std::size_t n_val_e = g.edges.size() / 10;
  g.edge_mask.assign(g.edges.size(), Mask::Test);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_train_e)
      g.edge_mask[order[i]] = Mask::Train;
    else if (i < n_train_e + n_val_e)
      g.edge_mask[order[i]] = Mask::Val;
  }
  g.validate();
  return g;
}

ClientGraph apply_coldstart(const ClientGraph& client, double fraction,
                            std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("coldstart fraction must be in [0,1]");
  ClientGraph g = client;
  const int want = static_cast<int>(std::floor(fraction * g.n));
  if (want == 0) return g;
  std::vector<int> candidates;
  for (int i = 0; i < g.n; ++i)
    if (g.has_text(i) && !g.cold_start[static_cast<std::size_t>(i)]) candidates.push_back(i);
  if (static_cast<int>(candidates.size()) < want)
    throw std::invalid_argument("apply_coldstart: only " +
                                std::to_string(candidates.size()) +
                                " text-bearing nodes for " + std::to_string(want) +
                                " cold-start slots");
  Rng rng(derive_seed(seed, "coldstart"));
  rng.shuffle(candidates);
  for (int i = 0; i < want; ++i) {
    int node = candidates[static_cast<std::size_t>(i)];
    g.features.row(node).setConstant(std::nan(""));
    g.cold_start[static_cast<std::size_t>(node)] = 1;
  }
  g.validate();
  return g;
}

}  // namespace lgdumap
