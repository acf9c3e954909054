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

#ifndef BRIDGEPURE_SCHEDULE_HPP_
#define BRIDGEPURE_SCHEDULE_HPP_

#include <string>

#include <nlohmann/json_fwd.hpp>

namespace bridgepure {

enum class ScheduleMode { kVE, kVP };

// Drift/diffusion pair (f, g) of a linear diffusion dx = f(x,t) dt + g(t) dw,
// together with closed forms for the induced marginal scaling alpha(t) and
// accumulated variance var(t) = Var[x_t | x_0].
//
//   VE: f = 0, sigma(t) = sigma_min * (sigma_max/sigma_min)^(t/T) geometric,
//       var(t) = sigma(t)^2 - sigma(0)^2 so pinning at t=0 is exact.
//   VP: f = -1/2 beta(t) x with beta linear in t, alpha(t) = exp(-1/2 B(t)),
//       var(t) = 1 - alpha(t)^2.
struct NoiseSchedule {
  ScheduleMode mode = ScheduleMode::kVE;
  double t_max = 1.0;
  double t_min = 1e-3;  // training/sampling floor, avoids the t->0 singularity
  // VE parameters
  double sigma_min = 0.02;
  double sigma_max = 80.0;
  // VP parameters (drift rates)
  double beta_min_rate = 0.1;
  double beta_max_rate = 20.0;

  static NoiseSchedule ve(double sigma_min = 0.02, double sigma_max = 80.0, double t_max = 1.0);
  static NoiseSchedule vp(double beta_min = 0.1, double beta_max = 20.0, double t_max = 1.0);

  void check_time(double t) const;  // throws std::domain_error outside [0, T]

  double alpha(double t) const;
  double accumulated_var(double t) const;  // Var[x_t | x_0]
  double sigma(double t) const;            // sqrt(accumulated_var)
  double beta_rate(double t) const;        // VP beta(t); 0 in VE mode
  double g2(double t) const;               // squared diffusion coefficient
  // Drift is linear: f(x, t) = drift_coef(t) * x.
  double drift_coef(double t) const;

  std::string mode_name() const { return mode == ScheduleMode::kVE ? "VE" : "VP"; }

  nlohmann::json to_json() const;
  static NoiseSchedule from_json(const nlohmann::json& j);
};

}  // namespace bridgepure

#endif  // BRIDGEPURE_SCHEDULE_HPP_
