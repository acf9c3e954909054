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

#ifndef BRIDGEPURE_SAMPLER_HPP_
#define BRIDGEPURE_SAMPLER_HPP_

#include <functional>
#include <string>
#include <vector>

#include "bridgepure/common.hpp"
#include "bridgepure/score_model.hpp"

namespace bridgepure {

// Anything that can evaluate a bridge score s(x_t, x_end, t). The sampler is
// written against this so analytic scores can drive it in tests and oracles.
class ScoreSource {
 public:
  virtual ~ScoreSource() = default;
  virtual Tensor score(const Tensor& x_t, const Tensor& x_end, const std::vector<double>& t) = 0;
  virtual const NoiseSchedule& schedule() const = 0;
};

// Adapter over a trained model (EMA weights).
class ModelScore : public ScoreSource {
 public:
  explicit ModelScore(ScoreModel& m) : model_(m) {}
  Tensor score(const Tensor& x_t, const Tensor& x_end, const std::vector<double>& t) override {
    return model_.predict_score(x_t, x_end, t);
  }
  const NoiseSchedule& schedule() const override { return model_.schedule(); }

 private:
  ScoreModel& model_;
};

struct SamplerConfig {
  int steps = 40;
  double s = 0.0;          // randomness: fraction of steps run as Euler-Maruyama
  double guidance = -1.0;  // <0 resolves to 0.5 (VE) / 1.0 (VP)
  uint64_t seed = 0;
  double grid_warp = 2.0;           // quadratic warp toward t_min
  double t_eval_pad_frac = 1e-3;    // clamp drift evaluations below T*(1-pad)
  std::vector<double> time_grid;    // optional custom grid, T = t0 > ... > t_min

  void validate(const NoiseSchedule& sched) const;
};

double resolve_guidance(const NoiseSchedule& sched, double guidance);

// Decreasing grid T = t_0 > t_1 > ... > t_steps = t_min, uniform in a warped
// coordinate with density increasing toward t_min.
std::vector<double> build_time_grid(const NoiseSchedule& sched, int steps, double warp = 2.0);

// Drift of the reverse process at one time:
//   f(x,t) - g^2(t) * (score_weight * guidance * s(x, x_end, t) - h(x, t, x_end))
// score_weight 1 gives the reverse SDE drift, 1/2 the probability-flow ODE.
Tensor reverse_drift(ScoreSource& model, const Tensor& x_t, const Tensor& x_end, double t,
                     double guidance, double score_weight = 1.0);

// Integrates from x_T = x_protected down the time grid. The first
// round(s*steps) steps are stochastic Euler-Maruyama updates, the rest are
// deterministic Heun updates with the ODE score coefficient. s=0 is a
// deterministic map. Output is clamped to [0, 1].
Image purify(ScoreSource& model, const Image& x_protected, const SamplerConfig& cfg);

struct PurifyFault {
  std::string image_id;
  int step_index = -1;
  std::string message;
};

struct PurifyResult {
  Dataset purified;  // aligned with the input; faulted entries keep the input image
  std::vector<PurifyFault> faults;
};

using ProgressFn = std::function<void(size_t done, size_t total, double batch_seconds)>;

// Element-wise purify with order-independent results: every image draws its
// noise from a stream derived from (cfg.seed, image id), so outputs do not
// depend on batching or scheduling.
PurifyResult purify_dataset(ScoreSource& model, const Dataset& dataset, const SamplerConfig& cfg,
                            int batch_size, const ProgressFn& progress = nullptr);

}  // namespace bridgepure

#endif  // BRIDGEPURE_SAMPLER_HPP_
