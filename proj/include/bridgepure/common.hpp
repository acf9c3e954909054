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

#ifndef BRIDGEPURE_COMMON_HPP_
#define BRIDGEPURE_COMMON_HPP_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bridgepure {

// Planar CHW float image, values nominally in [0, 1] (pre-processing may
// push them outside the range; persistence re-clamps).
struct Image {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> px;

  Image() = default;
  Image(int c_, int h_, int w_, float fill = 0.0f)
      : c(c_), h(h_), w(w_), px(static_cast<size_t>(c_) * h_ * w_, fill) {}

  float& at(int ch, int y, int x) { return px[(static_cast<size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return px[(static_cast<size_t>(ch) * h + y) * w + x]; }
  size_t size() const { return px.size(); }
  bool same_shape(const Image& o) const { return c == o.c && h == o.h && w == o.w; }
};

// Round to the 8-bit grid in place (clamp to [0,1] first).
void quantize8(Image& img);
Image quantized8(const Image& img);
std::vector<uint8_t> to_bytes8(const Image& img);
Image from_bytes8(const std::vector<uint8_t>& bytes, int c, int h, int w);

// Content digest of an image: SHA-256 over dimensions and 8-bit pixel
// bytes, truncated to 16 hex chars. Used as the image id everywhere.
std::string image_content_id(const Image& img);

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> ids;

  size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  void push(Image img, int label, std::string id);
  void push_auto_id(Image img, int label);  // id := content digest
  Dataset subset(const std::vector<size_t>& idx) const;
  int num_classes() const;  // max label + 1
};

// Deterministic RNG. mt19937_64 is fully specified by the standard and the
// Gaussian uses an explicit Box-Muller, so streams are reproducible across
// platforms and stdlibs.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform() {  // [0, 1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  uint64_t next_u64() { return gen_(); }
  // [0, n)
  uint64_t uniform_int(uint64_t n) {
    // rejection sampling, unbiased
    uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= lim);
    return x % n;
  }
  double normal();

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

uint64_t fnv1a64(const std::string& s);
uint64_t splitmix64(uint64_t x);
// Stage seeds: every stage's stream is derivable from the global seed plus
// a stage name (and optional index).
uint64_t derive_seed(uint64_t global_seed, const std::string& stage, uint64_t index = 0);

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_hex(const std::vector<uint8_t>& v);

// Training diverged (NaN/Inf loss). Carries the offending times and batch id.
class TrainingFault : public std::runtime_error {
 public:
  TrainingFault(const std::string& msg, std::vector<double> times, long batch_id)
      : std::runtime_error(msg), offending_times(std::move(times)), batch(batch_id) {}
  std::vector<double> offending_times;
  long batch = -1;
};

// Non-finite state during sampling. Carries the integration step index.
class SamplingFault : public std::runtime_error {
 public:
  SamplingFault(const std::string& msg, int step, std::string image_id = "")
      : std::runtime_error(msg), step_index(step), image_id(std::move(image_id)) {}
  int step_index = -1;
  std::string image_id;
};

// Parse a numeric flag value that may be a fraction literal like "8/255".
double parse_fraction(const std::string& text);

}  // namespace bridgepure

#endif  // BRIDGEPURE_COMMON_HPP_
