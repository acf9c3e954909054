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

#include "bridgepure/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace bridgepure {

StatSummary summarize(const std::vector<double>& xs) {
  StatSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / xs.size();
  if (xs.size() > 1) {
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(sq / (xs.size() - 1));
  }
  return s;
}

double psnr(const Image& reference, const Image& candidate) {
  if (!reference.same_shape(candidate)) throw std::invalid_argument("psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < reference.px.size(); ++i) {
    double d = static_cast<double>(reference.px[i]) - candidate.px[i];
    mse += d * d;
  }
  mse /= reference.px.size();
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_kernel_1d() {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(kWindow);
    double sum = 0.0;
    int half = kWindow / 2;
    for (int i = 0; i < kWindow; ++i) {
      double d = i - half;
      k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
  }();
  return kernel;
}

// Separable valid-region Gaussian filter of one channel plane.
std::vector<double> gauss_filter(const std::vector<double>& plane, int h, int w, int* oh,
                                 int* ow) {
  const std::vector<double>& k = gaussian_kernel_1d();
  int vw = w - kWindow + 1;
  int vh = h - kWindow + 1;
  *oh = vh;
  *ow = vw;
  std::vector<double> rows(static_cast<size_t>(h) * vw, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * plane[y * w + x + i];
      rows[y * vw + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(vh) * vw, 0.0);
  for (int y = 0; y < vh; ++y) {
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * rows[(y + i) * vw + x];
      out[y * vw + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& reference, const Image& candidate) {
  if (!reference.same_shape(candidate)) throw std::invalid_argument("ssim: shape mismatch");
  if (reference.h < kWindow || reference.w < kWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  int hw = reference.h * reference.w;
  double total = 0.0;
  size_t count = 0;
  for (int ch = 0; ch < reference.c; ++ch) {
    std::vector<double> a(hw), b(hw), aa(hw), bb(hw), ab(hw);
    for (int i = 0; i < hw; ++i) {
      a[i] = reference.px[ch * hw + i];
      b[i] = candidate.px[ch * hw + i];
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    int oh = 0, ow = 0;
    std::vector<double> mu1 = gauss_filter(a, reference.h, reference.w, &oh, &ow);
    std::vector<double> mu2 = gauss_filter(b, reference.h, reference.w, &oh, &ow);
    std::vector<double> s11 = gauss_filter(aa, reference.h, reference.w, &oh, &ow);
    std::vector<double> s22 = gauss_filter(bb, reference.h, reference.w, &oh, &ow);
    std::vector<double> s12 = gauss_filter(ab, reference.h, reference.w, &oh, &ow);
    for (size_t i = 0; i < mu1.size(); ++i) {
      double m1 = mu1[i], m2 = mu2[i];
      double var1 = s11[i] - m1 * m1;
      double var2 = s22[i] - m2 * m2;
      double cov = s12[i] - m1 * m2;
      double num = (2.0 * m1 * m2 + kC1) * (2.0 * cov + kC2);
      double den = (m1 * m1 + m2 * m2 + kC1) * (var1 + var2 + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / count;
}

FidelityReport image_fidelity(const Dataset& reference_set, const Dataset& candidate_set) {
  if (reference_set.size() != candidate_set.size()) {
    throw std::invalid_argument("image_fidelity: set sizes differ");
  }
  FidelityReport rep;
  for (size_t i = 0; i < reference_set.size(); ++i) {
    if (reference_set.ids[i] != candidate_set.ids[i]) {
      throw std::invalid_argument("image_fidelity: misaligned ids at index " + std::to_string(i));
    }
    rep.psnr_values.push_back(psnr(reference_set.images[i], candidate_set.images[i]));
    rep.ssim_values.push_back(ssim(reference_set.images[i], candidate_set.images[i]));
  }
  rep.psnr_stats = summarize(rep.psnr_values);
  rep.ssim_stats = summarize(rep.ssim_values);
  return rep;
}

}  // namespace bridgepure
