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

#ifndef BRIDGEPURE_CLASSIFIER_HPP_
#define BRIDGEPURE_CLASSIFIER_HPP_

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bridgepure/common.hpp"

namespace bridgepure {

enum class ClassifierArch { kCompactResNet, kLinear };

ClassifierArch classifier_arch_from_name(const std::string& name);
std::string classifier_arch_name(ClassifierArch a);

// Classifier retraining recipe: SGD with momentum 0.9 and weight decay 5e-4,
// learning rate dropped by lr_gamma at the milestone fractions of the run.
struct EvalConfig {
  ClassifierArch arch = ClassifierArch::kCompactResNet;
  int width = 16;
  int epochs = 120;
  int batch_size = 128;
  double lr = 0.1;
  std::vector<double> lr_milestones = {2.0 / 3.0, 5.0 / 6.0};
  double lr_gamma = 0.1;
  int trials = 5;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

struct EvalReport {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  bool std_valid = false;  // std requires >= 2 successful trials
  std::vector<double> trial_accuracies;
  std::vector<int> failed_trials;            // diverged (non-finite loss), excluded
  std::vector<double> per_class_accuracy;    // averaged over successful trials
  std::string config_hash;

  nlohmann::json to_json() const;
};

// Trains cfg.trials independent classifiers on `train` and scores them on
// `test`. Diverged trials are flagged and excluded from the statistics.
EvalReport train_and_score(const Dataset& train, const Dataset& test, const EvalConfig& cfg);

}  // namespace bridgepure

#endif  // BRIDGEPURE_CLASSIFIER_HPP_
