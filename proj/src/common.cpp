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

#include "bridgepure/common.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace bridgepure {

void quantize8(Image& img) {
  for (float& v : img.px) {
    float clamped = std::min(1.0f, std::max(0.0f, v));
    v = std::round(clamped * 255.0f) / 255.0f;
  }
}

Image quantized8(const Image& img) {
  Image out = img;
  quantize8(out);
  return out;
}

std::vector<uint8_t> to_bytes8(const Image& img) {
  std::vector<uint8_t> out(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    float clamped = std::min(1.0f, std::max(0.0f, img.px[i]));
    out[i] = static_cast<uint8_t>(std::lround(clamped * 255.0f));
  }
  return out;
}

Image from_bytes8(const std::vector<uint8_t>& bytes, int c, int h, int w) {
  if (bytes.size() != static_cast<size_t>(c) * h * w) {
    throw std::invalid_argument("from_bytes8: byte count does not match shape");
  }
  Image img(c, h, w);
  for (size_t i = 0; i < bytes.size(); ++i) {
    img.px[i] = static_cast<float>(bytes[i]) / 255.0f;
  }
  return img;
}

std::string image_content_id(const Image& img) {
  std::vector<uint8_t> buf;
  buf.reserve(12 + img.px.size());
  auto push_u32 = [&buf](uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  push_u32(static_cast<uint32_t>(img.c));
  push_u32(static_cast<uint32_t>(img.h));
  push_u32(static_cast<uint32_t>(img.w));
  std::vector<uint8_t> px = to_bytes8(img);
  buf.insert(buf.end(), px.begin(), px.end());
  return sha256_hex(buf).substr(0, 16);
}

void Dataset::push(Image img, int label, std::string id) {
  images.push_back(std::move(img));
  labels.push_back(label);
  ids.push_back(std::move(id));
}

void Dataset::push_auto_id(Image img, int label) {
  std::string id = image_content_id(img);
  push(std::move(img), label, std::move(id));
}

Dataset Dataset::subset(const std::vector<size_t>& idx) const {
  Dataset out;
  out.images.reserve(idx.size());
  for (size_t i : idx) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
    out.ids.push_back(ids.at(i));
  }
  return out;
}

int Dataset::num_classes() const {
  int m = -1;
  for (int l : labels) m = std::max(m, l);
  return m + 1;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t global_seed, const std::string& stage, uint64_t index) {
  return splitmix64(splitmix64(global_seed ^ fnv1a64(stage)) + index);
}

std::string sha256_hex(const void* data, size_t len) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(static_cast<const unsigned char*>(data), len, digest);
  static const char* hex = "0123456789abcdef";
  std::string out(2 * SHA256_DIGEST_LENGTH, '0');
  for (int i = 0; i < SHA256_DIGEST_LENGTH; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }
std::string sha256_hex(const std::vector<uint8_t>& v) { return sha256_hex(v.data(), v.size()); }

double parse_fraction(const std::string& text) {
  size_t slash = text.find('/');
  if (slash == std::string::npos) {
    size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("bad numeric literal: " + text);
    return v;
  }
  std::string num = text.substr(0, slash);
  std::string den = text.substr(slash + 1);
  size_t p1 = 0, p2 = 0;
  double n = std::stod(num, &p1);
  double d = std::stod(den, &p2);
  if (p1 != num.size() || p2 != den.size() || d == 0.0) {
    throw std::invalid_argument("bad fraction literal: " + text);
  }
  return n / d;
}

}  // namespace bridgepure
