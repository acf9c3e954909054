// Copyright 2026 The BridgePure Authors
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

#ifndef BRIDGEPURE_EXPERIMENT_HPP_
#define BRIDGEPURE_EXPERIMENT_HPP_

#include <string>

#include <nlohmann/json.hpp>

namespace bridgepure {

// Fills in every defaulted field so the echoed config (sorted keys) hashes
// stably. Throws std::invalid_argument on unknown or ill-typed entries.
nlohmann::json resolve_experiment_config(const nlohmann::json& config);

std::string experiment_config_hash(const nlohmann::json& resolved);

struct ExperimentOutcome {
  nlohmann::json report;
  std::string run_dir;
  bool dry_run = false;
};

// Executes the full pipeline (data -> protect -> harvest -> per-cell
// train/purify/evaluate -> report) with content-hash caching per stage.
// Stage directories live under <run_dir>/stages/<name>-<key>; a stage whose
// marker is complete is loaded, never recomputed. dry_run prints the stage
// plan and writes nothing.
ExperimentOutcome run_experiment(const nlohmann::json& config, const std::string& run_dir,
                                 bool dry_run = false);

// Re-renders plots from an existing report.json.
void render_report_plots(const std::string& run_dir);

}  // namespace bridgepure

#endif  // BRIDGEPURE_EXPERIMENT_HPP_
