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

#ifndef BRIDGEPURE_PROTECTIONS_HPP_
#define BRIDGEPURE_PROTECTIONS_HPP_

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bridgepure/common.hpp"

namespace bridgepure {

enum class ProtectionKind { kClasswiseLinf, kOnePixel, kPatchL2, kMixture };

ProtectionKind protection_kind_from_name(const std::string& name);
std::string protection_kind_name(ProtectionKind k);

// Stand-in availability attacks. Each kind injects a fixed per-class
// shortcut pattern within its norm budget:
//   kClasswiseLinf — per-class sign pattern of magnitude epsilon (L-inf),
//   kOnePixel      — one fixed per-class pixel set to a fixed color (L0 = 1),
//   kPatchL2       — per-class low-frequency wave pattern scaled to the L2
//                    budget (with headroom for 8-bit quantization),
//   kMixture       — one member attack selected per input by a seeded hash
//                    of the image content id.
// Protected outputs are clamped and written to the 8-bit grid; quantization
// is part of the mechanism (protection tools deliver image files).
struct ProtectionSpec {
  ProtectionKind kind = ProtectionKind::kClasswiseLinf;
  double epsilon = 8.0 / 255.0;  // L-inf budget; L2 budget for kPatchL2
  int class_count = 10;
  uint64_t pattern_seed = 0;
  std::vector<ProtectionSpec> members;  // kMixture only

  std::string norm_name() const;  // "Linf" / "L0" / "L2" / "mixed"
  nlohmann::json to_json() const;
  static ProtectionSpec from_json(const nlohmann::json& j);
  // Digest of the canonical spec JSON; recorded as protection provenance.
  std::string id() const;
};

// Frozen-pattern protection mechanism. Patterns are generated once per
// (class, shape) from pattern_seed, making P a fixed black-box map:
// same (spec, x, label) always yields the same output.
class Protector {
 public:
  explicit Protector(ProtectionSpec spec);

  const ProtectionSpec& spec() const { return spec_; }
  Image protect(const Image& x, int label) const;
  // Warms every per-class pattern for one image shape so parallel callers
  // never touch the lazy cache.
  void precompute(int c, int h, int w) const;

 private:
  struct Pattern {
    std::vector<float> delta;     // classwise sign * eps or scaled L2 wave
    int pixel_y = 0, pixel_x = 0;
    std::vector<uint8_t> color;   // one-pixel target, plus alternate
    std::vector<uint8_t> alt_color;
  };
  const Pattern& pattern_for(int label, int c, int h, int w) const;

  ProtectionSpec spec_;
  std::vector<std::unique_ptr<Protector>> members_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Pattern> cache_;
};

Image protect(const ProtectionSpec& spec, const Image& x, int label);
Dataset protect_dataset(const ProtectionSpec& spec, const Dataset& ds);

// Gaussian pre-processing G_beta(x') = sqrt(1-beta) x' + sqrt(beta) z.
// Output is intentionally not clamped (training-target convention).
struct Preprocess {
  double beta = 0.0;
  uint64_t seed = 0;
};

Image preprocess(const Preprocess& pp, const Image& x_protected);
// Per-image noise streams derived from (seed, image id): order-independent.
Dataset preprocess_dataset(const Preprocess& pp, const Dataset& ds);

}  // namespace bridgepure

#endif  // BRIDGEPURE_PROTECTIONS_HPP_
