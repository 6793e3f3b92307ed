#pragma once

#include <functional>

#include "mat/conv.hpp"
#include "mat/nn.hpp"

// Non-saturating adversarial losses, the R1 gradient penalty (computed via
// the differentiable double-backward path), and a perceptual loss over a
// pluggable feature extractor.

namespace mat {

template <typename T>
struct LossWeights {
  T gamma = T(10);                       // R1 weight (charged to the discriminator)
  T lambda = static_cast<T>(0.1);        // perceptual weight
  std::vector<T> eta = {static_cast<T>(0.25), static_cast<T>(0.5)};  // per feature layer

  void validate() const {
    check(gamma >= T(0) && lambda >= T(0), "LossWeights: weights must be nonnegative");
    for (T e : eta) check(e >= T(0), "LossWeights: eta must be nonnegative");
  }
};

// -E[log D(fake)] with D = sigmoid(logit), computed as mean softplus(-logit)
template <typename T>
Tensor<T> g_loss(const Tensor<T>& logits_fake) {
  return mean(softplus(neg(logits_fake)));
}

// -E[log D(real)] - E[log(1 - D(fake))]
template <typename T>
Tensor<T> d_loss(const Tensor<T>& logits_real, const Tensor<T>& logits_fake) {
  return add(mean(softplus(neg(logits_real))), mean(softplus(logits_fake)));
}

enum class R1Mode {
  kSquaredHalf,  // 0.5 * E ||grad D||^2, the cited regularizer's convention
  kNorm,         // E ||grad D||, the literal notation
};

// R1 penalty at real samples. `disc` maps an image batch to [b,1] logits; the
// input gradient is obtained with create_graph so the penalty remains
// differentiable w.r.t. the discriminator weights. The graph of the forward
// pass must stay alive through this call (it does: we build it here).
template <typename T>
Tensor<T> r1_penalty(const std::function<Tensor<T>(const Tensor<T>&)>& disc,
                     const Tensor<T>& x_real, R1Mode mode = R1Mode::kSquaredHalf) {
  // the penalty's value is itself a derivative, so the inner forward must
  // record even when the caller runs under NoGradGuard
  RecordingGuard rec(true);
  Tensor<T> x = x_real.detach();
  x.set_requires_grad(true);
  Tensor<T> logits = disc(x);
  check(logits.requires_grad(), "r1_penalty: discriminator output is not connected to its input");
  Tensor<T> total = sum(logits);  // per-sample logits depend only on their own image
  std::vector<Tensor<T>> gx = autograd::grad(total, {x}, /*create_graph=*/true);
  const int nd = x.ndim();
  std::vector<int> per_sample_axes;
  for (int i = 1; i < nd; ++i) per_sample_axes.push_back(i);
  Tensor<T> sq = sum(mul(gx[0], gx[0]), per_sample_axes, false);  // [b]
  if (mode == R1Mode::kSquaredHalf) return scale(mean(sq), static_cast<T>(0.5));
  return mean(sqrt(sq));
}

// Ordered, named feature maps of an image batch; pure and deterministic.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<std::pair<std::string, Tensor<T>>> features(const Tensor<T>& x) const = 0;
  virtual std::string id() const = 0;
};

// Raw pixels as the single feature layer.
template <typename T>
class IdentityExtractor final : public FeatureExtractor<T> {
 public:
  std::vector<std::pair<std::string, Tensor<T>>> features(const Tensor<T>& x) const override {
    return {{"pixels", x}};
  }
  std::string id() const override { return "identity"; }
};

// Two fixed random-weight strided convolutions with LeakyReLU. The seed is
// part of the extractor identity; weights never train, but gradients still
// flow through to the images for the perceptual loss.
template <typename T>
class RandomConvExtractor final : public FeatureExtractor<T> {
 public:
  static constexpr uint64_t kDefaultSeed = 0x4d415446;  // "MATF"

  explicit RandomConvExtractor(uint64_t seed = kDefaultSeed) : seed_(seed) {
    Rng rng(seed);
    w1_ = Tensor<T>::randn({8, 3, 3, 3}, rng);
    for (auto& v : w1_.data()) v *= static_cast<T>(1.0 / std::sqrt(27.0));
    w2_ = Tensor<T>::randn({16, 8, 3, 3}, rng);
    for (auto& v : w2_.data()) v *= static_cast<T>(1.0 / std::sqrt(72.0));
  }

  std::vector<std::pair<std::string, Tensor<T>>> features(const Tensor<T>& x) const override {
    check(x.ndim() == 4 && x.dim(1) == 3,
          "RandomConvExtractor: input must be [b,3,h,w], got " + shape_str(x.shape()));
    Tensor<T> f1 = leaky_relu(conv2d(x, w1_, /*stride=*/2, /*pad=*/1));
    Tensor<T> f2 = leaky_relu(conv2d(f1, w2_, /*stride=*/2, /*pad=*/1));
    return {{"conv1", f1}, {"conv2", f2}};
  }

  std::string id() const override { return "randconv-" + std::to_string(seed_); }

  static constexpr int64_t kEmbeddingDim = 32;

  // [b, 32] embedding for the toy FID: per-channel spatial mean and standard
  // deviation of the deepest feature map (the second moment keeps the metric
  // sensitive to texture, not just global color)
  Tensor<T> embedding(const Tensor<T>& x) const {
    auto fs = features(x);
    const Tensor<T>& deep = fs[1].second;
    Tensor<T> mu = mean(deep, {2, 3}, false);
    Tensor<T> centered = sub(deep, mean(deep, {2, 3}, true));
    Tensor<T> sd = sqrt(add_scalar(mean(mul(centered, centered), {2, 3}, false),
                                   static_cast<T>(1e-12)));
    return concat<T>({mu, sd}, -1);
  }

 private:
  uint64_t seed_;
  Tensor<T> w1_, w2_;
};

// sum_i eta_i * mean |phi_i(a) - phi_i(b)|
template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& generated, const Tensor<T>& target,
                          const FeatureExtractor<T>& extractor, const std::vector<T>& eta) {
  check_same_shape(generated, target, "perceptual_loss");
  auto fa = extractor.features(generated);
  auto fb = extractor.features(target);
  check(fa.size() == eta.size(), "perceptual_loss: " + std::to_string(eta.size()) +
                                     " eta weights for " + std::to_string(fa.size()) +
                                     " feature layers");
  Tensor<T> total = Tensor<T>::zeros({});
  for (size_t i = 0; i < fa.size(); ++i)
    total = add(total, scale(mean(abs(sub(fa[i].second, fb[i].second))), eta[i]));
  return total;
}

// Generator objective: adversarial terms from both stage outputs (averaged)
// plus lambda * perceptual. R1 does not appear here; it regularizes the
// discriminator objective.
template <typename T>
Tensor<T> total_g_loss(const Tensor<T>& adv_stage1, const Tensor<T>& adv_stage2,
                       const Tensor<T>& perceptual, const LossWeights<T>& w) {
  w.validate();
  Tensor<T> adv = scale(add(adv_stage1, adv_stage2), static_cast<T>(0.5));
  return add(adv, scale(perceptual, w.lambda));
}

// Discriminator objective: d_loss + gamma * R1
template <typename T>
Tensor<T> total_d_loss(const Tensor<T>& d_adv, const Tensor<T>& r1, const LossWeights<T>& w) {
  w.validate();
  return add(d_adv, scale(r1, w.gamma));
}

}  // namespace mat
