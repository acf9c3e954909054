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

#include "bridgepure/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "bridgepure/metrics.hpp"
#include "bridgepure/nn.hpp"

namespace bridgepure {

using nlohmann::json;

ClassifierArch classifier_arch_from_name(const std::string& name) {
  if (name == "resnet-compact") return ClassifierArch::kCompactResNet;
  if (name == "linear") return ClassifierArch::kLinear;
  throw std::invalid_argument("unknown classifier arch: " + name);
}

std::string classifier_arch_name(ClassifierArch a) {
  return a == ClassifierArch::kCompactResNet ? "resnet-compact" : "linear";
}

json EvalConfig::to_json() const {
  return json{{"arch", classifier_arch_name(arch)},
              {"width", width},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"lr", lr},
              {"lr_milestones", lr_milestones},
              {"lr_gamma", lr_gamma},
              {"trials", trials},
              {"seed", seed}};
}

EvalConfig EvalConfig::from_json(const json& j) {
  EvalConfig c;
  if (j.contains("arch")) c.arch = classifier_arch_from_name(j.at("arch").get<std::string>());
  c.width = j.value("width", c.width);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_milestones = j.value("lr_milestones", c.lr_milestones);
  c.lr_gamma = j.value("lr_gamma", c.lr_gamma);
  c.trials = j.value("trials", c.trials);
  c.seed = j.value("seed", c.seed);
  return c;
}

json EvalReport::to_json() const {
  return json{{"mean_accuracy", mean_accuracy},
              {"std_accuracy", std_valid ? json(std_accuracy) : json("n/a")},
              {"trial_accuracies", trial_accuracies},
              {"failed_trials", failed_trials},
              {"per_class_accuracy", per_class_accuracy},
              {"config_hash", config_hash}};
}

namespace {

int cls_groups(int channels) {
  int g = std::min(8, channels);
  while (g > 1 && channels % g != 0) --g;
  return g;
}

// conv stem + three residual stages [w, 2w, 2w] with 2x pooling between, then
// global average pooling and a linear head.
class ClsResBlock {
 public:
  ClsResBlock(ParamStore& ps, const std::string& name, int cin, int cout, Rng& rng)
      : gn1_(ps, name + ".gn1", cls_groups(cin), cin),
        conv1_(ps, name + ".conv1", cin, cout, 3, rng),
        gn2_(ps, name + ".gn2", cls_groups(cout), cout),
        conv2_(ps, name + ".conv2", cout, cout, 3, rng),
        has_skip_(cin != cout) {
    if (has_skip_) skip_ = std::make_unique<Conv2d>(ps, name + ".skip", cin, cout, 1, rng);
  }

  Tensor forward(const Tensor& x, bool train) {
    Tensor h = conv1_.forward(act1_.forward(gn1_.forward(x, train), train), train);
    h = conv2_.forward(act2_.forward(gn2_.forward(h, train), train), train);
    Tensor s = has_skip_ ? skip_->forward(x, train) : x;
    for (size_t i = 0; i < h.v.size(); ++i) h.v[i] += s.v[i];
    return h;
  }

  Tensor backward(const Tensor& dy) {
    Tensor dh = gn1_.backward(act1_.backward(conv1_.backward(
        gn2_.backward(act2_.backward(conv2_.backward(dy))))));
    Tensor ds = has_skip_ ? skip_->backward(dy) : dy;
    for (size_t i = 0; i < dh.v.size(); ++i) dh.v[i] += ds.v[i];
    return dh;
  }

 private:
  GroupNorm gn1_;
  SiLU act1_;
  Conv2d conv1_;
  GroupNorm gn2_;
  SiLU act2_;
  Conv2d conv2_;
  bool has_skip_;
  std::unique_ptr<Conv2d> skip_;
};

class CompactResNet {
 public:
  CompactResNet(int in_ch, int width, int classes, uint64_t seed) : classes_(classes) {
    Rng rng(seed);
    stem_ = std::make_unique<Conv2d>(ps_, "stem", in_ch, width, 3, rng);
    b1_ = std::make_unique<ClsResBlock>(ps_, "b1", width, width, rng);
    b2_ = std::make_unique<ClsResBlock>(ps_, "b2", width, 2 * width, rng);
    b3_ = std::make_unique<ClsResBlock>(ps_, "b3", 2 * width, 2 * width, rng);
    head_gn_ = std::make_unique<GroupNorm>(ps_, "head.gn", cls_groups(2 * width), 2 * width);
    head_ = std::make_unique<Linear>(ps_, "head.fc", 2 * width, classes, rng);
  }

  Tensor forward(const Tensor& x, bool train) {
    Tensor h = stem_->forward(x, train);
    h = b1_->forward(h, train);
    h = pool1_.forward(h);
    h = b2_->forward(h, train);
    h = pool2_.forward(h);
    h = b3_->forward(h, train);
    h = head_act_.forward(head_gn_->forward(h, train), train);
    // global average pooling
    gap_h_ = h.h;
    gap_w_ = h.w;
    Tensor g(h.n, h.c, 1, 1);
    int hw = h.h * h.w;
    for (int i = 0; i < h.n; ++i) {
      for (int ch = 0; ch < h.c; ++ch) {
        double acc = 0.0;
        const float* p = h.sample(i) + static_cast<size_t>(ch) * hw;
        for (int j = 0; j < hw; ++j) acc += p[j];
        g.sample(i)[ch] = static_cast<float>(acc / hw);
      }
    }
    return head_->forward(g, train);
  }

  Tensor backward(const Tensor& dlogits) {
    Tensor dg = head_->backward(dlogits);
    int hw = gap_h_ * gap_w_;
    Tensor dh(dg.n, dg.c, gap_h_, gap_w_);
    for (int i = 0; i < dg.n; ++i) {
      for (int ch = 0; ch < dg.c; ++ch) {
        float v = dg.sample(i)[ch] / hw;
        float* p = dh.sample(i) + static_cast<size_t>(ch) * hw;
        for (int j = 0; j < hw; ++j) p[j] = v;
      }
    }
    dh = head_gn_->backward(head_act_.backward(dh));
    dh = b3_->backward(dh);
    dh = pool2_.backward(dh);
    dh = b2_->backward(dh);
    dh = pool1_.backward(dh);
    dh = b1_->backward(dh);
    return stem_->backward(dh);
  }

  ParamStore& params() { return ps_; }

 private:
  int classes_;
  ParamStore ps_;
  std::unique_ptr<Conv2d> stem_;
  std::unique_ptr<ClsResBlock> b1_, b2_, b3_;
  AvgPool2 pool1_, pool2_;
  std::unique_ptr<GroupNorm> head_gn_;
  SiLU head_act_;
  std::unique_ptr<Linear> head_;
  int gap_h_ = 0, gap_w_ = 0;
};

class LinearProbe {
 public:
  LinearProbe(int in_dim, int classes, uint64_t seed) {
    Rng rng(seed);
    head_ = std::make_unique<Linear>(ps_, "fc", in_dim, classes, rng);
  }
  Tensor forward(const Tensor& x, bool train) {
    Tensor flat(x.n, static_cast<int>(x.sample_size()), 1, 1);
    flat.v = x.v;
    flat_cache_n_ = x.n;
    return head_->forward(flat, train);
  }
  Tensor backward(const Tensor& dlogits) { return head_->backward(dlogits); }
  ParamStore& params() { return ps_; }

 private:
  ParamStore ps_;
  std::unique_ptr<Linear> head_;
  int flat_cache_n_ = 0;
};

Tensor batch_tensor(const Dataset& ds, const std::vector<size_t>& idx, size_t lo, size_t hi) {
  const Image& first = ds.images[idx[lo]];
  Tensor t(static_cast<int>(hi - lo), first.c, first.h, first.w);
  for (size_t i = lo; i < hi; ++i) {
    const Image& img = ds.images[idx[i]];
    if (!img.same_shape(first)) throw std::invalid_argument("classifier: image shape mismatch");
    std::memcpy(t.sample(static_cast<int>(i - lo)), img.px.data(),
                img.px.size() * sizeof(float));
  }
  return t;
}

// Returns mean loss; fills dlogits.
double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
  int n = logits.n;
  int k = logits.c;
  *dlogits = Tensor(n, k, 1, 1);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const float* z = logits.sample(i);
    float* d = dlogits->sample(i);
    double zmax = z[0];
    for (int j = 1; j < k; ++j) zmax = std::max(zmax, static_cast<double>(z[j]));
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(z[j] - zmax);
    double logp = z[labels[i]] - zmax - std::log(denom);
    loss -= logp;
    for (int j = 0; j < k; ++j) {
      double p = std::exp(z[j] - zmax) / denom;
      d[j] = static_cast<float>((p - (j == labels[i] ? 1.0 : 0.0)) / n);
    }
  }
  return loss / n;
}

template <typename Net>
bool run_trial(Net& net, const Dataset& train, const Dataset& test, const EvalConfig& cfg,
               uint64_t seed, int classes, double* accuracy, std::vector<double>* per_class) {
  SgdMomentum opt(net.params());
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    for (double m : cfg.lr_milestones) {
      if (epoch >= static_cast<int>(m * cfg.epochs)) lr *= cfg.lr_gamma;
    }
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = shuffle_rng.uniform_int(i);
      std::swap(order[i - 1], order[j]);
    }
    for (size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      size_t hi = std::min(order.size(), lo + cfg.batch_size);
      Tensor x = batch_tensor(train, order, lo, hi);
      std::vector<int> y;
      for (size_t i = lo; i < hi; ++i) y.push_back(train.labels[order[i]]);
      Tensor logits = net.forward(x, /*train=*/true);
      Tensor dlogits;
      double loss = softmax_ce(logits, y, &dlogits);
      if (!std::isfinite(loss)) return false;  // diverged
      net.params().zero_grads();
      net.backward(dlogits);
      opt.step(lr);
    }
  }

  // test accuracy + per-class accuracy
  std::vector<size_t> idx(test.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<long> correct(classes, 0), total(classes, 0);
  long hits = 0;
  for (size_t lo = 0; lo < test.size(); lo += cfg.batch_size) {
    size_t hi = std::min(test.size(), lo + cfg.batch_size);
    Tensor x = batch_tensor(test, idx, lo, hi);
    Tensor logits = net.forward(x, /*train=*/false);
    for (size_t i = lo; i < hi; ++i) {
      const float* z = logits.sample(static_cast<int>(i - lo));
      int arg = 0;
      for (int j = 1; j < logits.c; ++j) {
        if (z[j] > z[arg]) arg = j;
      }
      int truth = test.labels[i];
      ++total[truth];
      if (arg == truth) {
        ++correct[truth];
        ++hits;
      }
    }
  }
  *accuracy = static_cast<double>(hits) / test.size();
  per_class->assign(classes, 0.0);
  for (int cints = 0; cints < classes; ++cints) {
    (*per_class)[cints] = total[cints] ? static_cast<double>(correct[cints]) / total[cints] : 0.0;
  }
  return true;
}

}  // namespace

EvalReport train_and_score(const Dataset& train, const Dataset& test, const EvalConfig& cfg) {
  if (train.empty() || test.empty()) {
    throw std::invalid_argument("train_and_score: empty dataset");
  }
  if (cfg.trials < 1) throw std::invalid_argument("train_and_score: trials must be >= 1");
  int classes = std::max(train.num_classes(), test.num_classes());

  EvalReport rep;
  rep.config_hash = sha256_hex(cfg.to_json().dump()).substr(0, 16);
  std::vector<std::vector<double>> per_class_runs;

  for (int trial = 0; trial < cfg.trials; ++trial) {
    uint64_t seed = derive_seed(cfg.seed, "trial", trial);
    double acc = 0.0;
    std::vector<double> per_class;
    bool ok = false;
    if (cfg.arch == ClassifierArch::kCompactResNet) {
      CompactResNet net(train.images[0].c, cfg.width, classes, derive_seed(seed, "init"));
      ok = run_trial(net, train, test, cfg, seed, classes, &acc, &per_class);
    } else {
      LinearProbe net(static_cast<int>(train.images[0].size()), classes,
                      derive_seed(seed, "init"));
      ok = run_trial(net, train, test, cfg, seed, classes, &acc, &per_class);
    }
    if (!ok) {
      rep.failed_trials.push_back(trial);
      continue;
    }
    rep.trial_accuracies.push_back(acc);
    per_class_runs.push_back(per_class);
  }

  if (rep.trial_accuracies.empty()) {
    throw std::runtime_error("train_and_score: every trial diverged");
  }
  StatSummary s = summarize(rep.trial_accuracies);
  rep.mean_accuracy = s.mean;
  rep.std_accuracy = s.stddev;
  rep.std_valid = rep.trial_accuracies.size() >= 2;
  rep.per_class_accuracy.assign(classes, 0.0);
  for (const auto& run : per_class_runs) {
    for (int c = 0; c < classes; ++c) rep.per_class_accuracy[c] += run[c];
  }
  for (int c = 0; c < classes; ++c) rep.per_class_accuracy[c] /= per_class_runs.size();
  return rep;
}

}  // namespace bridgepure
