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

#ifndef BRIDGEPURE_NN_HPP_
#define BRIDGEPURE_NN_HPP_

#include <memory>
#include <string>
#include <vector>

#include "bridgepure/common.hpp"

namespace bridgepure {

// Dense NCHW float tensor. Linear features use (n, features, 1, 1).
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return v.size(); }
  size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
  float* sample(int i) { return v.data() + i * sample_size(); }
  const float* sample(int i) const { return v.data() + i * sample_size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

struct Param {
  std::string name;
  Tensor w;
  Tensor g;
};

class ParamStore {
 public:
  Param& add(const std::string& name, int n, int c = 1, int h = 1, int w = 1);
  std::vector<std::unique_ptr<Param>>& items() { return items_; }
  const std::vector<std::unique_ptr<Param>>& items() const { return items_; }
  void zero_grads();
  size_t total_size() const;

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

// ---- layers -------------------------------------------------------------
// Each layer caches what backward needs during a training-mode forward.
// backward(dy) returns dx and accumulates parameter gradients.

class Conv2d {
 public:
  Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k, Rng& rng,
         bool zero_init = false);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);

 private:
  Param* w_;
  Param* b_;
  int cin_, cout_, k_, pad_;
  Tensor x_cache_;
  std::vector<float> col_cache_;  // per-batch im2col, kept only in train mode
  int oh_ = 0, ow_ = 0;
};

class Linear {
 public:
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
         bool zero_init = false);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);

 private:
  Param* w_;
  Param* b_;
  int in_, out_;
  Tensor x_cache_;
};

class GroupNorm {
 public:
  GroupNorm(ParamStore& ps, const std::string& name, int groups, int channels);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);

 private:
  Param* gamma_;
  Param* beta_;
  int groups_, channels_;
  Tensor xhat_cache_;
  std::vector<float> istd_cache_;
  static constexpr float kEps = 1e-5f;
};

class SiLU {
 public:
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);

 private:
  Tensor x_cache_;
};

class AvgPool2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

class UpsampleNearest2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& ab, int ca, Tensor* da, Tensor* db);

// Sinusoidal embedding of scalars in [0, 1]; dim must be even.
Tensor sinusoidal_embedding(const std::vector<double>& tau, int dim);

// ---- optimizers ----------------------------------------------------------

class Adam {
 public:
  Adam(ParamStore& ps, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);

 private:
  ParamStore& ps_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

class SgdMomentum {
 public:
  SgdMomentum(ParamStore& ps, double momentum = 0.9, double weight_decay = 5e-4);
  void step(double lr);

 private:
  ParamStore& ps_;
  double momentum_, weight_decay_;
  std::vector<std::vector<float>> vel_;
};

// Exponential moving average of a ParamStore's weights.
class Ema {
 public:
  explicit Ema(const ParamStore& ps);
  void update(const ParamStore& ps, double decay);
  void copy_to(ParamStore& ps) const;  // materialize shadow weights
  const std::vector<std::vector<float>>& shadow() const { return shadow_; }
  std::vector<std::vector<float>>& shadow() { return shadow_; }

 private:
  std::vector<std::vector<float>> shadow_;
};

}  // namespace bridgepure

#endif  // BRIDGEPURE_NN_HPP_
