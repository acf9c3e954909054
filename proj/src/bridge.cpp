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

#include "bridgepure/bridge.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgepure {

namespace {

void check_same_size(const std::vector<double>& a, const std::vector<double>& b,
                     const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": tensor size mismatch");
  }
}

}  // namespace

TransitionCoeffs transition_between(double alpha_t, double var_t, double alpha_s, double var_s) {
  TransitionCoeffs tc;
  tc.a = alpha_s / alpha_t;
  tc.b2 = var_s - tc.a * tc.a * var_t;
  return tc;
}

BridgeMarginalCoeffs pinned_marginal_coeffs(double alpha_t, double var_t, double alpha_end,
                                            double var_end) {
  TransitionCoeffs fwd = transition_between(alpha_t, var_t, alpha_end, var_end);
  BridgeMarginalCoeffs mc;
  mc.mean_coeff_x0 = alpha_t * fwd.b2 / var_end;
  mc.mean_coeff_xend = fwd.a * var_t / var_end;
  mc.variance = var_t * fwd.b2 / var_end;
  return mc;
}

TransitionCoeffs BridgeKernel::to_end(double t) const {
  sched_.check_time(t);
  return transition_between(sched_.alpha(t), sched_.accumulated_var(t), sched_.alpha(t_max()),
                            sched_.accumulated_var(t_max()));
}

BridgeMarginalCoeffs BridgeKernel::marginal_coeffs(double t) const {
  sched_.check_time(t);
  return pinned_marginal_coeffs(sched_.alpha(t), sched_.accumulated_var(t),
                                sched_.alpha(t_max()), sched_.accumulated_var(t_max()));
}

std::vector<double> BridgeKernel::drift(const std::vector<double>& x, double t) const {
  double coef = sched_.drift_coef(t);
  std::vector<double> out(x.size(), 0.0);
  if (coef != 0.0) {
    for (size_t i = 0; i < x.size(); ++i) out[i] = coef * x[i];
  }
  return out;
}

std::vector<double> BridgeKernel::h_function(const std::vector<double>& x_t, double t,
                                             const std::vector<double>& x_end) const {
  check_same_size(x_t, x_end, "h_function");
  sched_.check_time(t);
  if (t >= t_max()) {
    throw std::domain_error("h_function: transition variance collapses at t >= T");
  }
  TransitionCoeffs tc = to_end(t);
  std::vector<double> out(x_t.size());
  for (size_t i = 0; i < x_t.size(); ++i) {
    out[i] = tc.a * (x_end[i] - tc.a * x_t[i]) / tc.b2;
  }
  return out;
}

double BridgeKernel::h_scalar(double x_t, double t, double x_end) const {
  return h_function({x_t}, t, {x_end})[0];
}

void BridgeKernel::bridge_marginal(const std::vector<double>& x0,
                                   const std::vector<double>& x_end, double t,
                                   std::vector<double>* mean, double* variance) const {
  check_same_size(x0, x_end, "bridge_marginal");
  BridgeMarginalCoeffs mc = marginal_coeffs(t);
  mean->resize(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) {
    (*mean)[i] = mc.mean_coeff_x0 * x0[i] + mc.mean_coeff_xend * x_end[i];
  }
  *variance = mc.variance;
}

std::vector<double> BridgeKernel::sample_bridge_state(const std::vector<double>& x0,
                                                      const std::vector<double>& x_end, double t,
                                                      Rng& rng) const {
  std::vector<double> mean;
  double variance = 0.0;
  bridge_marginal(x0, x_end, t, &mean, &variance);
  double sd = std::sqrt(variance);
  for (double& m : mean) m += sd * rng.normal();
  return mean;
}

std::vector<double> BridgeKernel::analytic_bridge_score(const std::vector<double>& x_t, double t,
                                                        const std::vector<double>& x0,
                                                        const std::vector<double>& x_end) const {
  check_same_size(x_t, x0, "analytic_bridge_score");
  sched_.check_time(t);
  if (t <= 0.0 || t >= t_max()) {
    throw std::domain_error("analytic_bridge_score: marginal is degenerate at t in {0, T}");
  }
  std::vector<double> mean;
  double variance = 0.0;
  bridge_marginal(x0, x_end, t, &mean, &variance);
  std::vector<double> out(x_t.size());
  for (size_t i = 0; i < x_t.size(); ++i) {
    out[i] = (mean[i] - x_t[i]) / variance;
  }
  return out;
}

double BridgeKernel::score_scalar(double x_t, double t, double x0, double x_end) const {
  return analytic_bridge_score({x_t}, t, {x0}, {x_end})[0];
}

double BridgeKernel::log_transition_density(double x_t, double t, double x_end) const {
  sched_.check_time(t);
  if (t >= t_max()) {
    throw std::domain_error("log_transition_density: degenerate at t >= T");
  }
  TransitionCoeffs tc = to_end(t);
  double d = x_end - tc.a * x_t;
  return -0.5 * d * d / tc.b2 - 0.5 * std::log(2.0 * M_PI * tc.b2);
}

double BridgeKernel::log_marginal_density(double x_t, double t, double x0, double x_end) const {
  std::vector<double> mean;
  double variance = 0.0;
  bridge_marginal({x0}, {x_end}, t, &mean, &variance);
  if (variance <= 0.0) {
    throw std::domain_error("log_marginal_density: degenerate marginal");
  }
  double d = x_t - mean[0];
  return -0.5 * d * d / variance - 0.5 * std::log(2.0 * M_PI * variance);
}

}  // namespace bridgepure
