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

#include "bridgepure/schedule.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace bridgepure {

NoiseSchedule NoiseSchedule::ve(double sigma_min, double sigma_max, double t_max) {
  if (sigma_min <= 0 || sigma_max <= sigma_min || t_max <= 0) {
    throw std::invalid_argument("NoiseSchedule::ve: need 0 < sigma_min < sigma_max, t_max > 0");
  }
  NoiseSchedule s;
  s.mode = ScheduleMode::kVE;
  s.sigma_min = sigma_min;
  s.sigma_max = sigma_max;
  s.t_max = t_max;
  s.t_min = 1e-3 * t_max;
  return s;
}

NoiseSchedule NoiseSchedule::vp(double beta_min, double beta_max, double t_max) {
  if (beta_min <= 0 || beta_max < beta_min || t_max <= 0) {
    throw std::invalid_argument("NoiseSchedule::vp: need 0 < beta_min <= beta_max, t_max > 0");
  }
  NoiseSchedule s;
  s.mode = ScheduleMode::kVP;
  s.beta_min_rate = beta_min;
  s.beta_max_rate = beta_max;
  s.t_max = t_max;
  s.t_min = 1e-3 * t_max;
  return s;
}

void NoiseSchedule::check_time(double t) const {
  if (!(t >= 0.0 && t <= t_max)) {
    throw std::domain_error("time " + std::to_string(t) + " outside [0, " +
                            std::to_string(t_max) + "]");
  }
}

double NoiseSchedule::alpha(double t) const {
  check_time(t);
  if (mode == ScheduleMode::kVE) return 1.0;
  double b_int = beta_min_rate * t + (beta_max_rate - beta_min_rate) * t * t / (2.0 * t_max);
  return std::exp(-0.5 * b_int);
}

double NoiseSchedule::accumulated_var(double t) const {
  check_time(t);
  if (mode == ScheduleMode::kVE) {
    double log_ratio = std::log(sigma_max / sigma_min);
    return sigma_min * sigma_min * std::expm1(2.0 * log_ratio * t / t_max);
  }
  double a = alpha(t);
  return 1.0 - a * a;
}

double NoiseSchedule::sigma(double t) const { return std::sqrt(accumulated_var(t)); }

double NoiseSchedule::beta_rate(double t) const {
  check_time(t);
  if (mode == ScheduleMode::kVE) return 0.0;
  return beta_min_rate + (beta_max_rate - beta_min_rate) * t / t_max;
}

double NoiseSchedule::g2(double t) const {
  check_time(t);
  if (mode == ScheduleMode::kVE) {
    double log_ratio = std::log(sigma_max / sigma_min);
    double rate = 2.0 * log_ratio / t_max;
    return sigma_min * sigma_min * std::exp(rate * t) * rate;
  }
  return beta_rate(t);
}

double NoiseSchedule::drift_coef(double t) const {
  check_time(t);
  if (mode == ScheduleMode::kVE) return 0.0;
  return -0.5 * beta_rate(t);
}

nlohmann::json NoiseSchedule::to_json() const {
  return nlohmann::json{{"mode", mode_name()},
                        {"t_max", t_max},
                        {"t_min", t_min},
                        {"sigma_min", sigma_min},
                        {"sigma_max", sigma_max},
                        {"beta_min_rate", beta_min_rate},
                        {"beta_max_rate", beta_max_rate}};
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
  std::string mode = j.value("mode", "VE");
  double t_max = j.value("t_max", 1.0);
  NoiseSchedule s = (mode == "VP")
                        ? vp(j.value("beta_min_rate", 0.1), j.value("beta_max_rate", 20.0), t_max)
                        : ve(j.value("sigma_min", 0.02), j.value("sigma_max", 80.0), t_max);
  if (j.contains("t_min")) s.t_min = j.at("t_min").get<double>();
  return s;
}

}  // namespace bridgepure
