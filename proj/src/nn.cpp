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

#include "bridgepure/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace bridgepure {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatrixRM>;
using CMapM = Eigen::Map<const MatrixRM>;

Param& ParamStore::add(const std::string& name, int n, int c, int h, int w) {
  items_.push_back(std::make_unique<Param>());
  Param& p = *items_.back();
  p.name = name;
  p.w = Tensor(n, c, h, w);
  p.g = Tensor(n, c, h, w);
  return p;
}

void ParamStore::zero_grads() {
  for (auto& p : items_) p->g.zero();
}

size_t ParamStore::total_size() const {
  size_t s = 0;
  for (const auto& p : items_) s += p->w.size();
  return s;
}

namespace {

void he_init(Tensor& w, int fan_in, Rng& rng) {
  double sd = std::sqrt(2.0 / fan_in);
  for (float& x : w.v) x = static_cast<float>(sd * rng.normal());
}

// im2col for stride 1, pad k/2 (same-size output).
void im2col(const float* x, int cin, int h, int w, int k, int pad, float* col) {
  int hw = h * w;
  for (int ci = 0; ci < cin; ++ci) {
    const float* xc = x + static_cast<size_t>(ci) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::memset(row + static_cast<size_t>(y) * w, 0, sizeof(float) * w);
            continue;
          }
          const float* src = xc + static_cast<size_t>(sy) * w;
          float* dst = row + static_cast<size_t>(y) * w;
          int x0 = std::max(0, pad - kx);
          int x1 = std::min(w, w + pad - kx);
          if (x0 > 0) std::memset(dst, 0, sizeof(float) * x0);
          if (x1 < w) std::memset(dst + x1, 0, sizeof(float) * (w - x1));
          for (int xx = x0; xx < x1; ++xx) dst[xx] = src[xx + kx - pad];
        }
      }
    }
  }
}

void col2im_accum(const float* col, int cin, int h, int w, int k, int pad, float* x) {
  int hw = h * w;
  for (int ci = 0; ci < cin; ++ci) {
    float* xc = x + static_cast<size_t>(ci) * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) * hw;
        for (int y = 0; y < h; ++y) {
          int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          float* dst = xc + static_cast<size_t>(sy) * w;
          const float* src = row + static_cast<size_t>(y) * w;
          int x0 = std::max(0, pad - kx);
          int x1 = std::min(w, w + pad - kx);
          for (int xx = x0; xx < x1; ++xx) dst[xx + kx - pad] += src[xx];
        }
      }
    }
  }
}

}  // namespace

// ---- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k, Rng& rng,
               bool zero_init)
    : cin_(cin), cout_(cout), k_(k), pad_(k / 2) {
  w_ = &ps.add(name + ".w", cout, cin * k * k);
  b_ = &ps.add(name + ".b", cout);
  if (!zero_init) he_init(w_->w, cin * k * k, rng);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (x.c != cin_) throw std::invalid_argument("Conv2d: channel mismatch");
  oh_ = x.h;
  ow_ = x.w;
  int hw = x.h * x.w;
  int rows = cin_ * k_ * k_;
  Tensor y(x.n, cout_, x.h, x.w);

  std::vector<float>& col = col_cache_;
  col.resize(static_cast<size_t>(x.n) * rows * hw);

  CMapM W(w_->w.v.data(), cout_, rows);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    float* ci = col.data() + static_cast<size_t>(i) * rows * hw;
    im2col(x.sample(i), cin_, x.h, x.w, k_, pad_, ci);
    MapM out(y.sample(i), cout_, hw);
    CMapM colm(ci, rows, hw);
    out.noalias() = W * colm;
    for (int co = 0; co < cout_; ++co) {
      out.row(co).array() += b_->w.v[co];
    }
  }
  if (train) {
    x_cache_ = x;
  } else {
    x_cache_ = Tensor();
    col_cache_.clear();
    col_cache_.shrink_to_fit();
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = x_cache_;
  if (x.n == 0) throw std::logic_error("Conv2d::backward without train-mode forward");
  int hw = oh_ * ow_;
  int rows = cin_ * k_ * k_;
  Tensor dx(x.n, cin_, x.h, x.w);

  CMapM W(w_->w.v.data(), cout_, rows);

  // dx per sample (disjoint writes), then dW/db via fixed-chunk accumulation
  // so results do not depend on the number of threads.
  constexpr int kChunks = 8;
  std::vector<std::vector<float>> dw_chunk(kChunks);
  std::vector<std::vector<float>> db_chunk(kChunks);
  int chunk_len = (x.n + kChunks - 1) / kChunks;

#pragma omp parallel for schedule(static)
  for (int c = 0; c < kChunks; ++c) {
    int lo = c * chunk_len;
    int hi = std::min(x.n, lo + chunk_len);
    if (lo >= hi) continue;
    dw_chunk[c].assign(static_cast<size_t>(cout_) * rows, 0.0f);
    db_chunk[c].assign(cout_, 0.0f);
    MapM dWc(dw_chunk[c].data(), cout_, rows);
    std::vector<float> dcol(static_cast<size_t>(rows) * hw);
    for (int i = lo; i < hi; ++i) {
      CMapM dyi(dy.sample(i), cout_, hw);
      const float* ci = col_cache_.data() + static_cast<size_t>(i) * rows * hw;
      CMapM colm(ci, rows, hw);
      dWc.noalias() += dyi * colm.transpose();
      for (int co = 0; co < cout_; ++co) db_chunk[c][co] += dyi.row(co).sum();
      MapM dcolm(dcol.data(), rows, hw);
      dcolm.noalias() = W.transpose() * dyi;
      col2im_accum(dcol.data(), cin_, x.h, x.w, k_, pad_, dx.sample(i));
    }
  }
  MapM dW(w_->g.v.data(), cout_, rows);
  for (int c = 0; c < kChunks; ++c) {
    if (dw_chunk[c].empty()) continue;
    dW += CMapM(dw_chunk[c].data(), cout_, rows);
    for (int co = 0; co < cout_; ++co) b_->g.v[co] += db_chunk[c][co];
  }
  return dx;
}

// ---- Linear ----------------------------------------------------------------

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
               bool zero_init)
    : in_(in), out_(out) {
  w_ = &ps.add(name + ".w", out, in);
  b_ = &ps.add(name + ".b", out);
  if (!zero_init) he_init(w_->w, in, rng);
}

Tensor Linear::forward(const Tensor& x, bool train) {
  if (static_cast<int>(x.sample_size()) != in_) {
    throw std::invalid_argument("Linear: feature size mismatch");
  }
  Tensor y(x.n, out_, 1, 1);
  CMapM X(x.v.data(), x.n, in_);
  CMapM W(w_->w.v.data(), out_, in_);
  MapM Y(y.v.data(), x.n, out_);
  Y.noalias() = X * W.transpose();
  for (int i = 0; i < x.n; ++i) {
    for (int o = 0; o < out_; ++o) Y(i, o) += b_->w.v[o];
  }
  if (train) x_cache_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const Tensor& x = x_cache_;
  CMapM X(x.v.data(), x.n, in_);
  CMapM dY(dy.v.data(), dy.n, out_);
  MapM dW(w_->g.v.data(), out_, in_);
  dW.noalias() += dY.transpose() * X;
  for (int i = 0; i < dy.n; ++i) {
    for (int o = 0; o < out_; ++o) b_->g.v[o] += dY(i, o);
  }
  Tensor dx(x.n, x.c, x.h, x.w);
  CMapM W(w_->w.v.data(), out_, in_);
  MapM dX(dx.v.data(), x.n, in_);
  dX.noalias() = dY * W;
  return dx;
}

// ---- GroupNorm --------------------------------------------------------------

GroupNorm::GroupNorm(ParamStore& ps, const std::string& name, int groups, int channels)
    : groups_(groups), channels_(channels) {
  if (channels % groups != 0) throw std::invalid_argument("GroupNorm: groups must divide channels");
  gamma_ = &ps.add(name + ".gamma", channels);
  beta_ = &ps.add(name + ".beta", channels);
  std::fill(gamma_->w.v.begin(), gamma_->w.v.end(), 1.0f);
}

Tensor GroupNorm::forward(const Tensor& x, bool train) {
  if (x.c != channels_) throw std::invalid_argument("GroupNorm: channel mismatch");
  int cpg = channels_ / groups_;
  size_t m = static_cast<size_t>(cpg) * x.h * x.w;
  Tensor y(x.n, x.c, x.h, x.w);
  Tensor xhat(x.n, x.c, x.h, x.w);
  istd_cache_.assign(static_cast<size_t>(x.n) * groups_, 0.0f);

#pragma omp parallel for schedule(static) collapse(2)
  for (int i = 0; i < x.n; ++i) {
    for (int g = 0; g < groups_; ++g) {
      const float* base = x.sample(i) + static_cast<size_t>(g) * m;
      double sum = 0.0, sq = 0.0;
      for (size_t j = 0; j < m; ++j) {
        sum += base[j];
      }
      double mean = sum / m;
      for (size_t j = 0; j < m; ++j) {
        double d = base[j] - mean;
        sq += d * d;
      }
      double istd = 1.0 / std::sqrt(sq / m + kEps);
      istd_cache_[static_cast<size_t>(i) * groups_ + g] = static_cast<float>(istd);
      float* xh = xhat.sample(i) + static_cast<size_t>(g) * m;
      float* yo = y.sample(i) + static_cast<size_t>(g) * m;
      int hw = x.h * x.w;
      for (int cc = 0; cc < cpg; ++cc) {
        int ch = g * cpg + cc;
        float ga = gamma_->w.v[ch];
        float be = beta_->w.v[ch];
        for (int j = 0; j < hw; ++j) {
          float v = static_cast<float>((base[cc * hw + j] - mean) * istd);
          xh[cc * hw + j] = v;
          yo[cc * hw + j] = ga * v + be;
        }
      }
    }
  }
  if (train) {
    xhat_cache_ = std::move(xhat);
  }
  return y;
}

Tensor GroupNorm::backward(const Tensor& dy) {
  const Tensor& xhat = xhat_cache_;
  int cpg = channels_ / groups_;
  int hw = xhat.h * xhat.w;
  size_t m = static_cast<size_t>(cpg) * hw;
  Tensor dx(xhat.n, xhat.c, xhat.h, xhat.w);

  // Parameter grads in fixed order (serial over n for determinism; cheap).
  for (int i = 0; i < dy.n; ++i) {
    const float* dyi = dy.sample(i);
    const float* xhi = xhat.sample(i);
    for (int ch = 0; ch < channels_; ++ch) {
      double dg = 0.0, db = 0.0;
      for (int j = 0; j < hw; ++j) {
        dg += static_cast<double>(dyi[ch * hw + j]) * xhi[ch * hw + j];
        db += dyi[ch * hw + j];
      }
      gamma_->g.v[ch] += static_cast<float>(dg);
      beta_->g.v[ch] += static_cast<float>(db);
    }
  }

#pragma omp parallel for schedule(static) collapse(2)
  for (int i = 0; i < dy.n; ++i) {
    for (int g = 0; g < groups_; ++g) {
      const float* dyi = dy.sample(i) + static_cast<size_t>(g) * m;
      const float* xhi = xhat.sample(i) + static_cast<size_t>(g) * m;
      float* dxi = dx.sample(i) + static_cast<size_t>(g) * m;
      double istd = istd_cache_[static_cast<size_t>(i) * groups_ + g];
      double s1 = 0.0, s2 = 0.0;
      for (int cc = 0; cc < cpg; ++cc) {
        float ga = gamma_->w.v[g * cpg + cc];
        for (int j = 0; j < hw; ++j) {
          double dxh = static_cast<double>(dyi[cc * hw + j]) * ga;
          s1 += dxh;
          s2 += dxh * xhi[cc * hw + j];
        }
      }
      s1 /= m;
      s2 /= m;
      for (int cc = 0; cc < cpg; ++cc) {
        float ga = gamma_->w.v[g * cpg + cc];
        for (int j = 0; j < hw; ++j) {
          double dxh = static_cast<double>(dyi[cc * hw + j]) * ga;
          dxi[cc * hw + j] = static_cast<float>(istd * (dxh - s1 - xhi[cc * hw + j] * s2));
        }
      }
    }
  }
  return dx;
}

// ---- SiLU -------------------------------------------------------------------

Tensor SiLU::forward(const Tensor& x, bool train) {
  Tensor y(x.n, x.c, x.h, x.w);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(x.size()); ++i) {
    float v = x.v[i];
    y.v[i] = v / (1.0f + std::exp(-v));
  }
  if (train) x_cache_ = x;
  return y;
}

Tensor SiLU::backward(const Tensor& dy) {
  const Tensor& x = x_cache_;
  Tensor dx(x.n, x.c, x.h, x.w);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(x.size()); ++i) {
    float v = x.v[i];
    float s = 1.0f / (1.0f + std::exp(-v));
    dx.v[i] = dy.v[i] * s * (1.0f + v * (1.0f - s));
  }
  return dx;
}

// ---- AvgPool2 / UpsampleNearest2 ---------------------------------------------

Tensor AvgPool2::forward(const Tensor& x) {
  if (x.h % 2 || x.w % 2) throw std::invalid_argument("AvgPool2: odd spatial dims");
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  Tensor y(x.n, x.c, x.h / 2, x.w / 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const float* src = x.sample(i) + static_cast<size_t>(ch) * x.h * x.w;
      float* dst = y.sample(i) + static_cast<size_t>(ch) * y.h * y.w;
      for (int yy = 0; yy < y.h; ++yy) {
        for (int xx = 0; xx < y.w; ++xx) {
          const float* p = src + (2 * yy) * x.w + 2 * xx;
          dst[yy * y.w + xx] = 0.25f * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
        }
      }
    }
  }
  return y;
}

Tensor AvgPool2::backward(const Tensor& dy) {
  Tensor dx(n_, c_, h_, w_);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_; ++i) {
    for (int ch = 0; ch < c_; ++ch) {
      const float* src = dy.sample(i) + static_cast<size_t>(ch) * dy.h * dy.w;
      float* dst = dx.sample(i) + static_cast<size_t>(ch) * h_ * w_;
      for (int yy = 0; yy < dy.h; ++yy) {
        for (int xx = 0; xx < dy.w; ++xx) {
          float v = 0.25f * src[yy * dy.w + xx];
          float* p = dst + (2 * yy) * w_ + 2 * xx;
          p[0] = v;
          p[1] = v;
          p[w_] = v;
          p[w_ + 1] = v;
        }
      }
    }
  }
  return dx;
}

Tensor UpsampleNearest2::forward(const Tensor& x) {
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const float* src = x.sample(i) + static_cast<size_t>(ch) * x.h * x.w;
      float* dst = y.sample(i) + static_cast<size_t>(ch) * y.h * y.w;
      for (int yy = 0; yy < y.h; ++yy) {
        for (int xx = 0; xx < y.w; ++xx) {
          dst[yy * y.w + xx] = src[(yy / 2) * x.w + xx / 2];
        }
      }
    }
  }
  return y;
}

Tensor UpsampleNearest2::backward(const Tensor& dy) {
  Tensor dx(n_, c_, h_, w_);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_; ++i) {
    for (int ch = 0; ch < c_; ++ch) {
      const float* src = dy.sample(i) + static_cast<size_t>(ch) * dy.h * dy.w;
      float* dst = dx.sample(i) + static_cast<size_t>(ch) * h_ * w_;
      for (int yy = 0; yy < h_; ++yy) {
        for (int xx = 0; xx < w_; ++xx) {
          const float* p = src + (2 * yy) * dy.w + 2 * xx;
          dst[yy * w_ + xx] = p[0] + p[1] + p[dy.w] + p[dy.w + 1];
        }
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("concat_channels: shape mismatch");
  }
  Tensor y(a.n, a.c + b.c, a.h, a.w);
  size_t sa = a.sample_size(), sb = b.sample_size();
  for (int i = 0; i < a.n; ++i) {
    std::memcpy(y.sample(i), a.sample(i), sa * sizeof(float));
    std::memcpy(y.sample(i) + sa, b.sample(i), sb * sizeof(float));
  }
  return y;
}

void split_channels(const Tensor& ab, int ca, Tensor* da, Tensor* db) {
  *da = Tensor(ab.n, ca, ab.h, ab.w);
  *db = Tensor(ab.n, ab.c - ca, ab.h, ab.w);
  size_t sa = da->sample_size(), sb = db->sample_size();
  for (int i = 0; i < ab.n; ++i) {
    std::memcpy(da->sample(i), ab.sample(i), sa * sizeof(float));
    std::memcpy(db->sample(i), ab.sample(i) + sa, sb * sizeof(float));
  }
}

Tensor sinusoidal_embedding(const std::vector<double>& tau, int dim) {
  if (dim % 2) throw std::invalid_argument("sinusoidal_embedding: dim must be even");
  int half = dim / 2;
  Tensor out(static_cast<int>(tau.size()), dim, 1, 1);
  for (size_t i = 0; i < tau.size(); ++i) {
    for (int j = 0; j < half; ++j) {
      double freq = std::exp(std::log(1000.0) * j / std::max(1, half - 1));
      double a = tau[i] * freq;
      out.v[i * dim + j] = static_cast<float>(std::sin(a));
      out.v[i * dim + half + j] = static_cast<float>(std::cos(a));
    }
  }
  return out;
}

// ---- optimizers ---------------------------------------------------------------

Adam::Adam(ParamStore& ps, double beta1, double beta2, double eps)
    : ps_(ps), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto& p : ps.items()) {
    m_.emplace_back(p->w.size(), 0.0f);
    v_.emplace_back(p->w.size(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  auto& items = ps_.items();
  for (size_t k = 0; k < items.size(); ++k) {
    float* w = items[k]->w.v.data();
    const float* g = items[k]->g.v.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    size_t len = items[k]->w.size();
    for (size_t i = 0; i < len; ++i) {
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
      v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * static_cast<double>(g[i]) * g[i]);
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      w[i] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps_));
    }
  }
}

SgdMomentum::SgdMomentum(ParamStore& ps, double momentum, double weight_decay)
    : ps_(ps), momentum_(momentum), weight_decay_(weight_decay) {
  for (auto& p : ps.items()) vel_.emplace_back(p->w.size(), 0.0f);
}

void SgdMomentum::step(double lr) {
  auto& items = ps_.items();
  for (size_t k = 0; k < items.size(); ++k) {
    float* w = items[k]->w.v.data();
    const float* g = items[k]->g.v.data();
    float* v = vel_[k].data();
    size_t len = items[k]->w.size();
    for (size_t i = 0; i < len; ++i) {
      float grad = g[i] + static_cast<float>(weight_decay_) * w[i];
      v[i] = static_cast<float>(momentum_) * v[i] + grad;
      w[i] -= static_cast<float>(lr) * v[i];
    }
  }
}

Ema::Ema(const ParamStore& ps) {
  for (const auto& p : ps.items()) shadow_.push_back(p->w.v);
}

void Ema::update(const ParamStore& ps, double decay) {
  const auto& items = ps.items();
  for (size_t k = 0; k < items.size(); ++k) {
    const float* w = items[k]->w.v.data();
    float* s = shadow_[k].data();
    size_t len = items[k]->w.size();
    for (size_t i = 0; i < len; ++i) {
      s[i] = static_cast<float>(decay * s[i] + (1.0 - decay) * w[i]);
    }
  }
}

void Ema::copy_to(ParamStore& ps) const {
  auto& items = ps.items();
  if (items.size() != shadow_.size()) throw std::logic_error("Ema::copy_to: store mismatch");
  for (size_t k = 0; k < items.size(); ++k) {
    if (items[k]->w.size() != shadow_[k].size()) {
      throw std::logic_error("Ema::copy_to: size mismatch for " + items[k]->name);
    }
    items[k]->w.v = shadow_[k];
  }
}

}  // namespace bridgepure
