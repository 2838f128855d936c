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

#ifndef LGDUMAP_EXPERIMENT_HPP
#define LGDUMAP_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lgdumap/config.hpp"
#include "lgdumap/graph.hpp"
#include "lgdumap/trainer.hpp"

namespace lgdumap {

// Resolves the experiment config into round-loop settings for one seed.
TrainSettings settings_from_config(const ExperimentConfig& cfg,
                                   std::uint64_t seed);

// Builds the federated client graphs for one seed: synthetic generation,
// non-IID partition, few-shot and cold-start splits (or a directory of
// previously partitioned clients).
std::vector<ClientGraph> build_client_graphs(const ExperimentConfig& cfg,
                                             std::uint64_t seed);

struct SeedRunResult {
  int seed = 0;
  double test_acc_mean = 0.0;
  double test_f1_mean = 0.0;
  double epsilon = 0.0;
  std::vector<double> member_losses, nonmember_losses;
};

// Full train pipeline for one seed; writes the per-seed CSVs under
// out_dir/seed_<s>/ and returns the headline numbers.
SeedRunResult run_training_seed(const ExperimentConfig& cfg, int seed,
                                const std::string& out_dir);

// Subcommand entry points. Exit codes: 0 success, 1 validation error,
// 2 runtime failure (mapped by the CLI wrapper).
int cmd_train(const ExperimentConfig& cfg);
int cmd_partition(const ExperimentConfig& cfg);
int cmd_accountant(const ExperimentConfig& cfg);
int cmd_attack(const std::vector<std::string>& run_dirs);
int cmd_metrics(const std::string& run_dir);
int cmd_report(const std::string& run_dir);
int cmd_gradcheck(std::uint64_t seed);

}  // namespace lgdumap

#endif  // LGDUMAP_EXPERIMENT_HPP
