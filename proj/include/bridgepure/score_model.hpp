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

#ifndef BRIDGEPURE_SCORE_MODEL_HPP_
#define BRIDGEPURE_SCORE_MODEL_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bridgepure/bridge.hpp"
#include "bridgepure/denoiser.hpp"
#include "bridgepure/nn.hpp"

namespace bridgepure {

struct TrainConfig {
  long steps = 100000;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double lr_decay_at = 0.7;    // fraction of steps after which lr is scaled
  double lr_decay_mult = 0.2;
  double ema_decay = 0.999;
  double t_pad_frac = 1e-3;    // time sampling on [t_min, T - t_pad]
  long checkpoint_every = 10000;
  std::string checkpoint_dir;  // empty: keep everything in memory
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// A (clean, protected) training pair, by reference.
struct PairView {
  const Image* clean = nullptr;
  const Image* protected_img = nullptr;
};

// Endpoint-conditioned denoiser plus its training state. Evaluation goes
// through the EMA weights; training updates the raw weights and folds them
// into the EMA shadow after every step.
class ScoreModel {
 public:
  ScoreModel(NoiseSchedule sched, nlohmann::json arch, uint64_t init_seed);

  const BridgeKernel& kernel() const { return kernel_; }
  const NoiseSchedule& schedule() const { return kernel_.schedule(); }
  Denoiser& net() { return *net_; }
  long step() const { return step_; }
  size_t param_count() const { return net_->params().total_size(); }

  // x̂0 prediction. use_ema selects the evaluation weights.
  Tensor predict_x0(const Tensor& x_t, const Tensor& x_end, const std::vector<double>& t,
                    bool use_ema);

  // Converts the network's x̂0 into a score via the analytic bridge score
  // with x0 <- x̂0. Evaluation path (EMA weights); throws at t in {0, T}.
  Tensor predict_score(const Tensor& x_t, const Tensor& x_end, const std::vector<double>& t);

  // One optimization step on a batch of aligned pairs. Returns the loss
  // (weighted score-matching MSE; with the default weighting this equals the
  // plain x̂0 regression error). Throws TrainingFault on non-finite loss.
  double training_step(const std::vector<PairView>& batch, const TrainConfig& cfg, Rng& rng,
                       long batch_id);

  void save(const std::string& path) const;
  static std::unique_ptr<ScoreModel> load(const std::string& path);

  void set_config_hash(std::string h) { config_hash_ = std::move(h); }
  const std::string& config_hash() const { return config_hash_; }

 private:
  void sync_eval_net();

  BridgeKernel kernel_;
  nlohmann::json arch_;
  std::unique_ptr<Denoiser> net_;
  std::unique_ptr<Denoiser> eval_net_;
  bool eval_dirty_ = true;
  Ema ema_;
  std::unique_ptr<Adam> opt_;
  long step_ = 0;
  uint64_t init_seed_ = 0;
  std::string config_hash_;
};

// Trains a model on a pair set. Reproducible from (pair hash, cfg, seed);
// writes checkpoints every cfg.checkpoint_every steps when checkpoint_dir is
// set. progress(step, loss) is called on a coarse cadence when provided.
std::unique_ptr<ScoreModel> fit(const std::vector<PairView>& pairs, const NoiseSchedule& sched,
                                const nlohmann::json& arch, const TrainConfig& cfg,
                                const std::function<void(long, double)>& progress = nullptr);

}  // namespace bridgepure

#endif  // BRIDGEPURE_SCORE_MODEL_HPP_
