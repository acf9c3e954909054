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

#ifndef BRIDGEPURE_METRICS_HPP_
#define BRIDGEPURE_METRICS_HPP_

#include <vector>

#include "bridgepure/common.hpp"

namespace bridgepure {

struct StatSummary {
  double mean = 0.0;
  double stddev = 0.0;
  size_t count = 0;
};

StatSummary summarize(const std::vector<double>& xs);

// 10 * log10(MAX^2 / MSE) with MAX = 1; capped at 100 dB for zero MSE.
double psnr(const Image& reference, const Image& candidate);

// SSIM with an 11x11 Gaussian window (sigma 1.5), standard constants
// C1 = (0.01 L)^2, C2 = (0.03 L)^2 at data range L = 1, averaged over valid
// window positions and channels.
double ssim(const Image& reference, const Image& candidate);

struct FidelityReport {
  std::vector<double> psnr_values;
  std::vector<double> ssim_values;
  StatSummary psnr_stats;
  StatSummary ssim_stats;
};

// Per-image PSNR/SSIM over two datasets aligned by id (throws on mismatch).
FidelityReport image_fidelity(const Dataset& reference_set, const Dataset& candidate_set);

}  // namespace bridgepure

#endif  // BRIDGEPURE_METRICS_HPP_
