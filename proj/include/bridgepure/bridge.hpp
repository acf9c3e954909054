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

#ifndef BRIDGEPURE_BRIDGE_HPP_
#define BRIDGEPURE_BRIDGE_HPP_

#include <vector>

#include "bridgepure/common.hpp"
#include "bridgepure/schedule.hpp"

namespace bridgepure {

// Gaussian transition x_s | x_t ~ N(a * x_t, b2) of the underlying linear SDE.
struct TransitionCoeffs {
  double a = 1.0;
  double b2 = 0.0;
};

// Gaussian parameters of the pinned marginal q(x_t | x_0, x_T):
//   mean = mean_coeff_x0 * x_0 + mean_coeff_xend * x_T, shared scalar variance.
struct BridgeMarginalCoeffs {
  double mean_coeff_x0 = 1.0;
  double mean_coeff_xend = 0.0;
  double variance = 0.0;
};

// Kernel algebra from raw marginal characteristics (alpha, accumulated var)
// at two times. Exposed so tests can drive the formulas directly.
TransitionCoeffs transition_between(double alpha_t, double var_t, double alpha_s, double var_s);
BridgeMarginalCoeffs pinned_marginal_coeffs(double alpha_t, double var_t, double alpha_end,
                                            double var_end);

// Closed-form mathematics of a linear diffusion pinned at x_T: transition
// kernel to the endpoint, Doob h-function, bridge marginal, and the analytic
// score that serves as the training target.
class BridgeKernel {
 public:
  explicit BridgeKernel(NoiseSchedule schedule) : sched_(schedule) {}

  const NoiseSchedule& schedule() const { return sched_; }
  double t_max() const { return sched_.t_max; }

  // a(t->T), b^2(t->T) of p(x_T | x_t). b^2 > 0 for t < T, exactly 0 at t = T.
  TransitionCoeffs to_end(double t) const;

  BridgeMarginalCoeffs marginal_coeffs(double t) const;

  // f(x, t): zero tensor in VE mode, -1/2 beta(t) x in VP mode.
  std::vector<double> drift(const std::vector<double>& x, double t) const;

  // grad_{x_t} log p(x_T = x_end | x_t). Throws std::domain_error at t >= T
  // where the kernel variance collapses.
  std::vector<double> h_function(const std::vector<double>& x_t, double t,
                                 const std::vector<double>& x_end) const;
  double h_scalar(double x_t, double t, double x_end) const;

  // Gaussian parameters of q(x_t | x_0, x_T = x_end).
  void bridge_marginal(const std::vector<double>& x0, const std::vector<double>& x_end, double t,
                       std::vector<double>* mean, double* variance) const;

  // mean + sqrt(variance) * z with z standard normal from the rng stream.
  std::vector<double> sample_bridge_state(const std::vector<double>& x0,
                                          const std::vector<double>& x_end, double t,
                                          Rng& rng) const;

  // (mean - x_t) / variance; the regression target of the training loss.
  // Throws std::domain_error at t in {0, T} where the marginal is degenerate.
  std::vector<double> analytic_bridge_score(const std::vector<double>& x_t, double t,
                                            const std::vector<double>& x0,
                                            const std::vector<double>& x_end) const;
  double score_scalar(double x_t, double t, double x0, double x_end) const;

  // log p(x_T = x_end | x_t); the quantity whose x_t-gradient is h. Used by
  // finite-difference oracles.
  double log_transition_density(double x_t, double t, double x_end) const;
  // log q(x_t | x_0, x_T = x_end), gradient oracle target for the score.
  double log_marginal_density(double x_t, double t, double x0, double x_end) const;

 private:
  NoiseSchedule sched_;
};

}  // namespace bridgepure

#endif  // BRIDGEPURE_BRIDGE_HPP_
