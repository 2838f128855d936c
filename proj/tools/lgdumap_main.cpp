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

#include <CLI11.hpp>
#include <iostream>
#include <stdexcept>

#include "lgdumap/config.hpp"
#include "lgdumap/experiment.hpp"

namespace {

lgdumap::ExperimentConfig load_config(const std::string& path,
                                      const std::vector<int>& seeds,
                                      const std::string& output_dir,
                                      double participation) {
  lgdumap::ExperimentConfig cfg =
      path.empty() ? lgdumap::ExperimentConfig{} : lgdumap::parse_config(path);
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (participation >= 0.0) cfg.sim.participation = participation;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated graph-manifold learning simulator"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  std::vector<int> seeds;
  double participation = -1.0;
  app.add_option("--config", config_path, "YAML experiment config");
  app.add_option("--seeds", seeds, "Override the seed list");
  app.add_option("--output-dir", output_dir, "Override the output directory");
  app.add_option("--participation", participation,
                 "Override the per-round client sampling rate");

  auto* train = app.add_subcommand("train", "Run the federated pipeline for every seed");
  auto* partition = app.add_subcommand("partition", "Write the non-IID client split to disk");
  auto* accountant = app.add_subcommand(
      "accountant", "Privacy accounting table, no training");
  auto* attack = app.add_subcommand("attack", "Membership-inference AUROC for finished runs");
  auto* metrics = app.add_subcommand("metrics", "Aggregate metric table for a finished run");
  auto* report = app.add_subcommand("report", "Summary, cost and calibration tables for a run");
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Verify analytic gradients against finite differences");

  std::vector<std::string> run_dirs;
  attack->add_option("runs", run_dirs, "Run directories to compare")->required();
  std::string metrics_dir, report_dir;
  metrics->add_option("run", metrics_dir, "Run directory")->required();
  report->add_option("run", report_dir, "Run directory")->required();
  std::uint64_t gradcheck_seed = 7;
  gradcheck->add_option("--seed", gradcheck_seed, "Instance seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed())
      return lgdumap::cmd_train(load_config(config_path, seeds, output_dir, participation));
    if (partition->parsed())
      return lgdumap::cmd_partition(load_config(config_path, seeds, output_dir, participation));
    if (accountant->parsed())
      return lgdumap::cmd_accountant(load_config(config_path, seeds, output_dir, participation));
    if (attack->parsed()) return lgdumap::cmd_attack(run_dirs);
    if (metrics->parsed()) return lgdumap::cmd_metrics(metrics_dir);
    if (report->parsed()) return lgdumap::cmd_report(report_dir);
    if (gradcheck->parsed()) return lgdumap::cmd_gradcheck(gradcheck_seed);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
