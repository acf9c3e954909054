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

#include "bridgepure/denoiser.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace bridgepure {

using nlohmann::json;

namespace {

// c_in(t) = 1/sqrt(1 + var(t)): keeps |x_t * c_in| bounded for VE schedules
// whose accumulated variance dwarfs the image range.
std::vector<double> input_scales(const NoiseSchedule& sched, const std::vector<double>& t) {
  std::vector<double> s(t.size());
  for (size_t i = 0; i < t.size(); ++i) {
    s[i] = 1.0 / std::sqrt(1.0 + sched.accumulated_var(t[i]));
  }
  return s;
}

Tensor assemble_input(const Tensor& x_t, const Tensor& x_end, const std::vector<double>& scale) {
  Tensor xin(x_t.n, 2 * x_t.c, x_t.h, x_t.w);
  size_t ss = x_t.sample_size();
  for (int i = 0; i < x_t.n; ++i) {
    const float* a = x_t.sample(i);
    const float* b = x_end.sample(i);
    float* o = xin.sample(i);
    float sc = static_cast<float>(scale[i]);
    for (size_t j = 0; j < ss; ++j) o[j] = a[j] * sc;
    for (size_t j = 0; j < ss; ++j) o[ss + j] = b[j] - 0.5f;
  }
  return xin;
}

void add_channel_bias(Tensor& x, const Tensor& bias_nc) {
  int hw = x.h * x.w;
  for (int i = 0; i < x.n; ++i) {
    float* xi = x.sample(i);
    const float* bi = bias_nc.sample(i);
    for (int ch = 0; ch < x.c; ++ch) {
      float b = bi[ch];
      for (int j = 0; j < hw; ++j) xi[ch * hw + j] += b;
    }
  }
}

Tensor sum_spatial(const Tensor& dy) {
  Tensor out(dy.n, dy.c, 1, 1);
  int hw = dy.h * dy.w;
  for (int i = 0; i < dy.n; ++i) {
    const float* di = dy.sample(i);
    float* oi = out.sample(i);
    for (int ch = 0; ch < dy.c; ++ch) {
      double s = 0.0;
      for (int j = 0; j < hw; ++j) s += di[ch * hw + j];
      oi[ch] = static_cast<float>(s);
    }
  }
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  for (size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

// GroupNorm group count that divides the channel count (caps at 8).
int pick_groups(int channels, int requested) {
  int g = std::min(requested, channels);
  while (g > 1 && channels % g != 0) --g;
  return g;
}

class ResBlock {
 public:
  ResBlock(ParamStore& ps, const std::string& name, int cin, int cout, int temb_dim, int groups,
           Rng& rng)
      : gn1_(ps, name + ".gn1", pick_groups(cin, groups), cin),
        conv1_(ps, name + ".conv1", cin, cout, 3, rng),
        temb_proj_(ps, name + ".temb", temb_dim, cout, rng),
        gn2_(ps, name + ".gn2", pick_groups(cout, groups), cout),
        conv2_(ps, name + ".conv2", cout, cout, 3, rng),
        has_skip_(cin != cout) {
    if (has_skip_) skip_ = std::make_unique<Conv2d>(ps, name + ".skip", cin, cout, 1, rng);
  }

  Tensor forward(const Tensor& x, const Tensor& temb, bool train) {
    Tensor h = act1_.forward(gn1_.forward(x, train), train);
    h = conv1_.forward(h, train);
    add_channel_bias(h, temb_proj_.forward(temb, train));
    h = act2_.forward(gn2_.forward(h, train), train);
    h = conv2_.forward(h, train);
    Tensor s = has_skip_ ? skip_->forward(x, train) : x;
    add_inplace(h, s);
    return h;
  }

  // Returns dx; adds the time-embedding gradient into dtemb.
  Tensor backward(const Tensor& dy, Tensor& dtemb) {
    Tensor dh = conv2_.backward(dy);
    dh = gn2_.backward(act2_.backward(dh));
    add_inplace(dtemb, temb_proj_.backward(sum_spatial(dh)));
    Tensor dx = gn1_.backward(act1_.backward(conv1_.backward(dh)));
    Tensor dskip = has_skip_ ? skip_->backward(dy) : dy;
    add_inplace(dx, dskip);
    return dx;
  }

 private:
  GroupNorm gn1_;
  SiLU act1_;
  Conv2d conv1_;
  Linear temb_proj_;
  GroupNorm gn2_;
  SiLU act2_;
  Conv2d conv2_;
  bool has_skip_;
  std::unique_ptr<Conv2d> skip_;
};

class UNetDenoiser : public Denoiser {
 public:
  UNetDenoiser(const NoiseSchedule& sched, int channels, int base, std::vector<int> mults,
               int groups, uint64_t seed)
      : sched_(sched), channels_(channels), base_(base), mults_(std::move(mults)),
        groups_(groups) {
    Rng rng(seed);
    int temb_base = base_;
    temb_dim_ = 2 * base_;
    temb_base_ = temb_base;
    temb_lin1_ = std::make_unique<Linear>(ps_, "temb.lin1", temb_base, temb_dim_, rng);
    temb_lin2_ = std::make_unique<Linear>(ps_, "temb.lin2", temb_dim_, temb_dim_, rng);

    std::vector<int> ch;
    for (int m : mults_) ch.push_back(base_ * m);
    stem_ = std::make_unique<Conv2d>(ps_, "stem", 2 * channels_, ch[0], 3, rng);
    int levels = static_cast<int>(ch.size());
    int cur = ch[0];
    for (int i = 0; i < levels; ++i) {
      down_.push_back(std::make_unique<ResBlock>(ps_, "down" + std::to_string(i), cur, ch[i],
                                                 temb_dim_, groups_, rng));
      cur = ch[i];
    }
    mid_ = std::make_unique<ResBlock>(ps_, "mid", cur, cur, temb_dim_, groups_, rng);
    for (int i = levels - 1; i >= 0; --i) {
      up_.push_back(std::make_unique<ResBlock>(ps_, "up" + std::to_string(i), cur + ch[i], ch[i],
                                               temb_dim_, groups_, rng));
      cur = ch[i];
    }
    head_gn_ = std::make_unique<GroupNorm>(ps_, "head.gn", pick_groups(ch[0], groups_), ch[0]);
    head_conv_ = std::make_unique<Conv2d>(ps_, "head.conv", ch[0], channels_, 3, rng,
                                          /*zero_init=*/true);
    pools_.resize(levels > 0 ? levels - 1 : 0);
    ups_.resize(levels > 0 ? levels - 1 : 0);
  }

  Tensor predict_x0(const Tensor& x_t, const Tensor& x_end, const std::vector<double>& t,
                    bool train) override {
    if (!x_t.same_shape(x_end)) throw std::invalid_argument("denoiser: shape mismatch");
    if (static_cast<int>(t.size()) != x_t.n) {
      throw std::invalid_argument("denoiser: one time per sample required");
    }
    std::vector<double> tau(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
      sched_.check_time(t[i]);
      tau[i] = t[i] / sched_.t_max;
    }
    Tensor temb = sinusoidal_embedding(tau, temb_base_);
    temb = temb_lin1_->forward(temb, train);
    temb = temb_act_.forward(temb, train);
    temb = temb_lin2_->forward(temb, train);

    Tensor h = stem_->forward(assemble_input(x_t, x_end, input_scales(sched_, t)), train);
    int levels = static_cast<int>(down_.size());
    skips_.clear();
    for (int i = 0; i < levels; ++i) {
      h = down_[i]->forward(h, temb, train);
      skips_.push_back(h);
      if (i + 1 < levels) h = pools_[i].forward(h);
    }
    h = mid_->forward(h, temb, train);
    for (int i = levels - 1; i >= 0; --i) {
      if (i + 1 < levels) h = ups_[i].forward(h);
      skip_channels_ = skips_[i].c;
      h = up_[levels - 1 - i]->forward(concat_channels(h, skips_[i]), temb, train);
    }
    h = head_act_.forward(head_gn_->forward(h, train), train);
    h = head_conv_->forward(h, train);

    Tensor out = x_end;
    add_inplace(out, h);
    if (!train) skips_.clear();
    return out;
  }

  void backward(const Tensor& dl_dx0) override {
    Tensor dtemb(dl_dx0.n, temb_dim_, 1, 1);
    Tensor dh = head_gn_->backward(head_act_.backward(head_conv_->backward(dl_dx0)));
    int levels = static_cast<int>(down_.size());
    std::vector<Tensor> dskips(levels);
    for (int i = 0; i <= levels - 1; ++i) {
      Tensor dcat = up_[levels - 1 - i]->backward(dh, dtemb);
      Tensor da, db;
      split_channels(dcat, dcat.c - skips_[i].c, &da, &db);
      dskips[i] = std::move(db);
      if (i + 1 < levels) {
        dh = ups_[i].backward(da);
      } else {
        dh = std::move(da);
      }
    }
    dh = mid_->backward(dh, dtemb);
    for (int i = levels - 1; i >= 0; --i) {
      if (i + 1 < levels) {
        dh = pools_[i].backward(dh);
      }
      add_inplace(dh, dskips[i]);
      dh = down_[i]->backward(dh, dtemb);
    }
    stem_->backward(dh);
    Tensor dt2 = temb_lin2_->backward(dtemb);
    temb_lin1_->backward(temb_act_.backward(dt2));
    skips_.clear();
  }

  ParamStore& params() override { return ps_; }
  const ParamStore& params() const override { return ps_; }

  json arch_config() const override {
    return json{{"type", "unet"}, {"channels", channels_}, {"base", base_},
                {"mults", mults_}, {"groups", groups_}};
  }

 private:
  NoiseSchedule sched_;
  int channels_, base_, groups_, temb_dim_ = 0, temb_base_ = 0;
  std::vector<int> mults_;
  ParamStore ps_;
  std::unique_ptr<Linear> temb_lin1_, temb_lin2_;
  SiLU temb_act_;
  std::unique_ptr<Conv2d> stem_;
  std::vector<std::unique_ptr<ResBlock>> down_;
  std::unique_ptr<ResBlock> mid_;
  std::vector<std::unique_ptr<ResBlock>> up_;
  std::vector<AvgPool2> pools_;
  std::vector<UpsampleNearest2> ups_;
  std::unique_ptr<GroupNorm> head_gn_;
  SiLU head_act_;
  std::unique_ptr<Conv2d> head_conv_;
  std::vector<Tensor> skips_;
  int skip_channels_ = 0;
};

// Two hidden layers; enough for the scalar oracle tasks.
class MlpDenoiser : public Denoiser {
 public:
  MlpDenoiser(const NoiseSchedule& sched, int dim, int hidden, int emb, uint64_t seed)
      : sched_(sched), dim_(dim), hidden_(hidden), emb_(emb) {
    Rng rng(seed);
    lin1_ = std::make_unique<Linear>(ps_, "lin1", 2 * dim + emb, hidden, rng);
    lin2_ = std::make_unique<Linear>(ps_, "lin2", hidden, hidden, rng);
    head_ = std::make_unique<Linear>(ps_, "head", hidden, dim, rng, /*zero_init=*/true);
  }

  Tensor predict_x0(const Tensor& x_t, const Tensor& x_end, const std::vector<double>& t,
                    bool train) override {
    if (!x_t.same_shape(x_end)) throw std::invalid_argument("denoiser: shape mismatch");
    if (static_cast<int>(x_t.sample_size()) != dim_) {
      throw std::invalid_argument("mlp denoiser: dim mismatch");
    }
    std::vector<double> tau(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
      sched_.check_time(t[i]);
      tau[i] = t[i] / sched_.t_max;
    }
    std::vector<double> scale = input_scales(sched_, t);
    Tensor emb = sinusoidal_embedding(tau, emb_);
    Tensor xin(x_t.n, 2 * dim_ + emb_, 1, 1);
    for (int i = 0; i < x_t.n; ++i) {
      float* o = xin.sample(i);
      const float* a = x_t.sample(i);
      const float* b = x_end.sample(i);
      for (int j = 0; j < dim_; ++j) o[j] = a[j] * static_cast<float>(scale[i]);
      for (int j = 0; j < dim_; ++j) o[dim_ + j] = b[j];
      for (int j = 0; j < emb_; ++j) o[2 * dim_ + j] = emb.sample(i)[j];
    }
    Tensor h = act1_.forward(lin1_->forward(xin, train), train);
    h = act2_.forward(lin2_->forward(h, train), train);
    h = head_->forward(h, train);
    Tensor out(x_t.n, x_t.c, x_t.h, x_t.w);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = x_end.v[i] + h.v[i];
    return out;
  }

  void backward(const Tensor& dl_dx0) override {
    Tensor d = dl_dx0;
    d = Tensor(dl_dx0.n, dim_, 1, 1);
    d.v = dl_dx0.v;
    Tensor dh = head_->backward(d);
    dh = lin2_->backward(act2_.backward(dh));
    lin1_->backward(act1_.backward(dh));
  }

  ParamStore& params() override { return ps_; }
  const ParamStore& params() const override { return ps_; }

  json arch_config() const override {
    return json{{"type", "mlp"}, {"dim", dim_}, {"hidden", hidden_}, {"emb", emb_}};
  }

 private:
  NoiseSchedule sched_;
  int dim_, hidden_, emb_;
  ParamStore ps_;
  std::unique_ptr<Linear> lin1_, lin2_, head_;
  SiLU act1_, act2_;
};

}  // namespace

std::unique_ptr<Denoiser> make_denoiser(const json& arch, const NoiseSchedule& sched,
                                        uint64_t init_seed) {
  std::string type = arch.at("type").get<std::string>();
  if (type == "unet") {
    return std::make_unique<UNetDenoiser>(
        sched, arch.value("channels", 3), arch.value("base", 16),
        arch.value("mults", std::vector<int>{1, 2}), arch.value("groups", 8), init_seed);
  }
  if (type == "mlp") {
    return std::make_unique<MlpDenoiser>(sched, arch.value("dim", 1), arch.value("hidden", 64),
                                         arch.value("emb", 16), init_seed);
  }
  throw std::invalid_argument("make_denoiser: unknown arch type " + type);
}

}  // namespace bridgepure
