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

#ifndef LGDUMAP_LLMGUIDE_HPP
#define LGDUMAP_LLMGUIDE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lgdumap/graph.hpp"

namespace lgdumap {

// One proposed pseudo-edge or pseudo-label. probe marks the slice whose
// correctness the client can verify against its own validation data (used
// to fit the temperature); ground_truth is simulator-side bookkeeping for
// precision reporting and never drives admission.
struct Proposal {
  enum class Kind { Edge, Label };
  Kind kind = Kind::Edge;
  int u = -1, v = -1;   // edge target
  int node = -1;        // label target
  int payload = -1;     // proposed class for label proposals
  double raw_logit = 0.0;
  double confidence = 0.0;  // sigmoid(raw_logit / T) after calibration
  bool accepted = false;
  bool probe = false;
  bool ground_truth = false;
};

struct CalibrationModel {
  double temperature = 1.0;  // T > 0
  double tau = 0.8;          // admission threshold in (0,1)
};

// Deterministic proposal source standing in for a language backend. A
// fraction ~precision of proposals is true (held-out test edges / correct
// labels); raw logits carry real signal but are inflated by `skew`, the
// planted temperature that calibration should recover.
struct MockOracleProposer {
  double precision = 0.9;
  double skew = 2.0;
  int budget = 20;        // deployment proposals per call
  int probe_budget = 128; // verifiable calibration probes per call
  std::uint64_t seed = 1;
};

// Emits probe + deployment proposals for one client round. Deployment edge
// targets are drawn from held-out test edges (true) and non-edges (false);
// label targets from test-masked nodes unless label_candidates narrows
// them. Probes target validation items.
std::vector<Proposal> propose(const ClientGraph& client,
                              const MockOracleProposer& proposer,
                              std::uint64_t round_salt = 0,
                              const std::vector<int>* label_candidates = nullptr);

// NLL-optimal temperature by golden-section search over log T in [-3, 3].
// Guaranteed not to be worse than T = 1.
double fit_temperature(const std::vector<double>& logits,
                       const std::vector<int>& labels);

double binary_nll(const std::vector<double>& logits,
                  const std::vector<int>& labels, double temperature);

// Expected calibration error over equal-width right-closed bins.
double ece(const std::vector<double>& confidences,
           const std::vector<int>& correctness, int n_bins = 15);

double brier(const std::vector<double>& confidences,
             const std::vector<int>& outcomes);

// Recomputes confidences at the model temperature and keeps proposals with
// confidence >= tau.
std::vector<Proposal> admit(std::vector<Proposal> proposals,
                            const CalibrationModel& cal);

struct AdmitStats {
  int n_admitted = 0;
  double precision = 0.0;  // of admitted, from simulator ground truth
};
AdmitStats admit_stats(const std::vector<Proposal>& proposals);

// Audit-log rows: kind, target, payload, raw_logit, confidence, accepted.
std::string proposals_to_table(const std::vector<Proposal>& proposals);

}  // namespace lgdumap

#endif  // LGDUMAP_LLMGUIDE_HPP
