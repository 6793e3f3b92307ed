#pragma once

#include "mat/nn.hpp"

// Style manipulation: a noise -> style mapping network, an image-conditional
// style pulled from features (with random binary fusion against the
// unconditional style), per-input-channel weight modulation with output-
// channel demodulation, and per-layer noise injection.

namespace mat {

// 8 fully connected layers with LeakyReLU(0.2) between them.
template <typename T>
struct MappingNetwork {
  std::vector<Linear<T>> layers;

  MappingNetwork() = default;
  MappingNetwork(int64_t style_dim, Rng& rng) {
    for (int i = 0; i < 8; ++i) layers.emplace_back(style_dim, style_dim, rng);
  }

  // n: [b, style_dim] -> s_u: [b, style_dim]
  Tensor<T> forward(const Tensor<T>& n) const {
    Tensor<T> h = n;
    for (size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) h = leaky_relu(h);
    }
    return h;
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].params(prefix + ".fc" + std::to_string(i), out);
  }
};

// X' = B (.) X + (1 - B) (.) broadcast(s_u), with B an elementwise Bernoulli(p)
// mask. broadcast replicates each style channel across the spatial extent of
// the matching feature channel, so the style dim must equal the channel count.
template <typename T>
Tensor<T> style_feature_blend(const Tensor<T>& x, const Tensor<T>& s_u, double p, Rng& rng) {
  check(x.ndim() == 4, "style_feature_blend: features must be [b,c,h,w]");
  check(s_u.ndim() == 2 && s_u.dim(0) == x.dim(0),
        "style_feature_blend: styles must be [b,style_dim]");
  check(s_u.dim(1) == x.dim(1), "style_feature_blend: style dim " + std::to_string(s_u.dim(1)) +
                                    " must equal feature channels " + std::to_string(x.dim(1)));
  check(p >= 0.0 && p <= 1.0, "style_feature_blend: p must lie in [0,1]");
  std::vector<T> bmask(static_cast<size_t>(x.numel()));
  for (auto& v : bmask) v = rng.bernoulli(p) ? T(1) : T(0);
  Tensor<T> b = Tensor<T>::from(x.shape(), std::move(bmask));
  Tensor<T> su_map = expand(reshape(s_u, {x.dim(0), x.dim(1), 1, 1}), x.shape());
  return add(mul(b, x), mul(add_scalar(neg(b), T(1)), su_map));
}

// F: two stride-2 convolutions then a global average pool down to [b, s_d].
template <typename T>
struct ConditionalStyleNet {
  Conv2dLayer<T> conv1, conv2;

  ConditionalStyleNet() = default;
  ConditionalStyleNet(int64_t in_ch, int64_t style_dim, Rng& rng)
      : conv1(in_ch, style_dim, 3, 2, rng), conv2(style_dim, style_dim, 3, 2, rng) {}

  Tensor<T> forward(const Tensor<T>& x_blend) const {
    Tensor<T> h = leaky_relu(conv1.forward(x_blend));
    h = leaky_relu(conv2.forward(h));
    return mean(h, {2, 3}, false);  // [b, s_d]
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    conv1.params(prefix + ".conv1", out);
    conv2.params(prefix + ".conv2", out);
  }
};

// Eq. 9-10. s scales input channels; each output channel is renormalized by
// the root of its total squared weight. With eps = 0 the output is exactly
// invariant to a uniform positive scaling of s.
template <typename T>
Tensor<T> modulate_demodulate(const Tensor<T>& w, const Tensor<T>& s, T eps) {
  check(w.ndim() == 4, "modulate_demodulate: weight must be [co,ci,kh,kw]");
  check(s.ndim() == 1 && s.dim(0) == w.dim(1),
        "modulate_demodulate: style length " + shape_str(s.shape()) +
            " must equal input channels of " + shape_str(w.shape()));
  check(eps >= T(0), "modulate_demodulate: eps must be >= 0");
  Tensor<T> scaled = mul(w, reshape(s, {1, w.dim(1), 1, 1}));
  Tensor<T> denom = sqrt(add_scalar(sum(mul(scaled, scaled), {1, 2, 3}, true), eps));
  return divide(scaled, denom);
}

// x + strength * N with one noise channel shared across feature channels.
// Fused primitive: d/dx = g, d/dstrength = sum(g * N).
template <typename T>
Tensor<T> noise_injection(const Tensor<T>& x, const Tensor<T>& strength, Rng& rng) {
  check(x.ndim() == 4, "noise_injection: features must be [b,c,h,w]");
  check(strength.numel() == 1, "noise_injection: strength must be a scalar tensor");
  const int64_t b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<T> n = Tensor<T>::randn({b, 1, x.dim(2), x.dim(3)}, rng);
  const T s = strength.vec()[0];
  std::vector<T> out(static_cast<size_t>(x.numel()));
  const T* xv = x.vec().data();
  const T* nv = n.vec().data();
#pragma omp parallel for if (b * c > 1)
  for (int64_t bc = 0; bc < b * c; ++bc) {
    const T* nrow = nv + (bc / c) * plane;
    const T* xrow = xv + bc * plane;
    T* orow = out.data() + bc * plane;
    for (int64_t i = 0; i < plane; ++i) orow[i] = xrow[i] + s * nrow[i];
  }
  auto bwd = [n, c](const Tensor<T>&, const Tensor<T>& g) {
    Tensor<T> gs = reshape(sum(mul(g, n)), Shape{1});
    return std::vector<Tensor<T>>{g, gs};
  };
  return Tensor<T>::make_op(x.shape(), std::move(out), {x, strength}, bwd);
}

// Style-modulated 3x3 convolution with per-layer noise injection. Weights are
// baked per sample (grouped over the batch), so batch elements never share a
// modulated kernel.
template <typename T>
struct ModulatedConv2d {
  Tensor<T> weight;  // [cout, cin, k, k]
  Tensor<T> bias;    // [cout]
  Linear<T> affine;  // style -> per-input-channel scale, bias starts at 1
  Tensor<T> noise_strength;
  T eps = static_cast<T>(1e-8);

  ModulatedConv2d() = default;
  ModulatedConv2d(int64_t cin, int64_t cout, int64_t k, int64_t style_dim, Rng& rng,
                  T eps_ = static_cast<T>(1e-8))
      : weight(init_weight<T>({cout, cin, k, k}, cin * k * k, rng)),
        bias(init_zeros<T>({cout})),
        affine(style_dim, cin, rng),
        noise_strength(init_zeros<T>({1})),
        eps(eps_) {
    std::fill(affine.bias.data().begin(), affine.bias.data().end(), T(1));
  }

  // x: [b,cin,h,w], styles: [b,style_dim]; noise optional (inject=false for
  // a deterministic pass)
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& styles, Rng* noise_rng) const {
    check(x.dim(0) == styles.dim(0), "modulated_conv: batch mismatch");
    const int64_t b = x.dim(0);
    Tensor<T> scales = affine.forward(styles);  // [b, cin]
    std::vector<Tensor<T>> outs;
    outs.reserve(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
      Tensor<T> si = reshape(slice(scales, 0, i, 1), {x.dim(1)});
      Tensor<T> baked = modulate_demodulate(weight, si, eps);
      outs.push_back(conv2d(slice(x, 0, i, 1), baked, /*stride=*/1, /*pad=*/weight.dim(2) / 2));
    }
    Tensor<T> y = outs.size() == 1 ? outs[0] : concat(outs, 0);
    y = add(y, reshape(bias, {1, bias.dim(0), 1, 1}));
    if (noise_rng) y = noise_injection(y, noise_strength, *noise_rng);
    return y;
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
    affine.params(prefix + ".affine", out);
    out.add(prefix + ".noise_strength", noise_strength);
  }
};

// Noise-unconditional and image-conditional styles fused by one FC layer.
template <typename T>
struct StylePipeline {
  MappingNetwork<T> mapping;
  ConditionalStyleNet<T> cond;
  Linear<T> fuse;  // [s_u, s_c] -> s
  double p = 0.5;

  StylePipeline() = default;
  StylePipeline(int64_t style_dim, int64_t feat_ch, double p_, Rng& rng)
      : mapping(style_dim, rng), cond(feat_ch, style_dim, rng),
        fuse(2 * style_dim, style_dim, rng), p(p_) {}

  Tensor<T> unconditional(const Tensor<T>& noise) const { return mapping.forward(noise); }

  Tensor<T> conditional(const Tensor<T>& feat, const Tensor<T>& s_u, Rng& rng) const {
    return cond.forward(style_feature_blend(feat, s_u, p, rng));
  }

  Tensor<T> fuse_styles(const Tensor<T>& s_u, const Tensor<T>& s_c) const {
    check(s_u.shape() == s_c.shape(), "fuse_styles: style length mismatch " +
                                          shape_str(s_u.shape()) + " vs " + shape_str(s_c.shape()));
    return fuse.forward(concat<T>({s_u, s_c}, -1));
  }

  // noise [b, s_d] + deep features [b, c, h, w] -> fused style [b, s_d]
  Tensor<T> forward(const Tensor<T>& noise, const Tensor<T>& feat, Rng& rng) const {
    Tensor<T> s_u = unconditional(noise);
    Tensor<T> s_c = conditional(feat, s_u, rng);
    return fuse_styles(s_u, s_c);
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    mapping.params(prefix + ".mapping", out);
    cond.params(prefix + ".cond", out);
    fuse.params(prefix + ".fuse", out);
  }
};

}  // namespace mat
