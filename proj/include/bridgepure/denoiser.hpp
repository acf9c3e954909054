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

#ifndef BRIDGEPURE_DENOISER_HPP_
#define BRIDGEPURE_DENOISER_HPP_

#include <memory>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bridgepure/nn.hpp"
#include "bridgepure/schedule.hpp"

namespace bridgepure {

// Endpoint-conditioned denoiser: predicts the clean endpoint x̂0 from
// (x_t, x_end, t). The endpoint is concatenated along channels, t enters via
// a sinusoidal embedding, and x_t is rescaled by 1/sqrt(1+var(t)) so the
// network sees O(1) inputs at every noise level. The head is zero-initialized
// and the output is a residual from x_end, so a fresh network predicts
// x̂0 = x_end exactly.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  // x_t, x_end: [n, c, h, w]; t: per-sample times. Output has the input shape.
  virtual Tensor predict_x0(const Tensor& x_t, const Tensor& x_end,
                            const std::vector<double>& t, bool train) = 0;
  // Backpropagate dL/dx̂0 from the last train-mode forward; accumulates
  // parameter gradients.
  virtual void backward(const Tensor& dl_dx0) = 0;

  virtual ParamStore& params() = 0;
  virtual const ParamStore& params() const = 0;
  virtual nlohmann::json arch_config() const = 0;
};

// arch kinds: {"type":"unet", "base":16, "mults":[1,2], "groups":8,
//              "channels":3}
//             {"type":"mlp", "hidden":64, "emb":16, "dim":1}
std::unique_ptr<Denoiser> make_denoiser(const nlohmann::json& arch, const NoiseSchedule& sched,
                                        uint64_t init_seed);

}  // namespace bridgepure

#endif  // BRIDGEPURE_DENOISER_HPP_
