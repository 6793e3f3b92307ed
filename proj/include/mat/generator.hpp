#pragma once

#include <numeric>

#include "mat/blocks.hpp"
#include "mat/style.hpp"

// The two-stage generator: a conv head + transformer body + style-modulated
// reconstruction tail producing a coarse full-resolution image, then a
// style-modulated Conv-U-Net refining it; plus the discriminator.

namespace mat {

enum class Tokenization { kStackedConv, kLinearProjection };

template <typename T>
struct GeneratorConfig {
  int64_t input_size = 64;
  int64_t embed_dim = 32;
  int64_t num_heads = 4;
  std::array<int64_t, 5> block_counts = {1, 1, 2, 1, 1};
  std::array<int64_t, 5> windows = {4, 4, 2, 4, 4};
  int64_t mlp_ratio = 4;
  int64_t style_dim = 32;  // must equal embed_dim (styles broadcast per channel)
  int64_t unet_base = 16;
  int64_t unet_max = 64;
  int64_t disc_base = 8;
  int64_t disc_max = 32;
  Tokenization tokenization = Tokenization::kStackedConv;
  double style_p = 0.5;
  T tau = T(100);
  T demod_eps = static_cast<T>(1e-8);

  int64_t max_window() const {
    int64_t m = 0;
    for (int64_t w : windows) m = std::max(m, w);
    return m;
  }

  // inputs must align with both the deepest U-Net level (1/32) and the
  // token-grid windowing (8 * window)
  int64_t pad_multiple() const { return std::lcm<int64_t>(32, 8 * max_window()); }

  void validate() const {
    check(input_size >= 32 && input_size % pad_multiple() == 0,
          "GeneratorConfig: input size " + std::to_string(input_size) +
              " must be a positive multiple of " + std::to_string(pad_multiple()));
    check(style_dim == embed_dim, "GeneratorConfig: style_dim must equal embed_dim");
    check(embed_dim % num_heads == 0, "GeneratorConfig: heads must divide embed_dim");
    const std::array<int64_t, 5> scales = {8, 16, 32, 16, 8};
    for (int i = 0; i < 5; ++i) {
      check(block_counts[static_cast<size_t>(i)] >= 1, "GeneratorConfig: empty stage");
      const int64_t grid = input_size / scales[static_cast<size_t>(i)];
      check(grid >= 1 && grid % windows[static_cast<size_t>(i)] == 0,
            "GeneratorConfig: stage " + std::to_string(i) + " grid " + std::to_string(grid) +
                " not divisible by window " + std::to_string(windows[static_cast<size_t>(i)]));
    }
    check(unet_base >= 1 && unet_max >= unet_base, "GeneratorConfig: bad unet channels");
    check(disc_base >= 1 && disc_max >= disc_base, "GeneratorConfig: bad disc channels");
    check(style_p >= 0.0 && style_p <= 1.0, "GeneratorConfig: style_p must lie in [0,1]");
    check(tau > T(0) && demod_eps >= T(0), "GeneratorConfig: bad tau/eps");
  }

  // desk-scale preset used throughout the tests
  static GeneratorConfig tiny() { return GeneratorConfig{}; }

  // the published 512x512 configuration (for parameter accounting)
  static GeneratorConfig paper() {
    GeneratorConfig c;
    c.input_size = 512;
    c.embed_dim = 180;
    c.num_heads = 6;
    c.block_counts = {2, 3, 4, 3, 2};
    c.windows = {8, 16, 16, 16, 8};
    c.style_dim = 180;
    c.unet_base = 64;
    c.unet_max = 512;
    c.disc_base = 64;
    c.disc_max = 512;
    return c;
  }

  // micro configuration for end-to-end f64 gradchecks (8x8 token grid)
  static GeneratorConfig micro() {
    GeneratorConfig c;
    c.input_size = 64;
    c.embed_dim = 8;
    c.num_heads = 2;
    c.block_counts = {1, 1, 1, 1, 1};
    c.windows = {2, 2, 2, 2, 2};
    c.style_dim = 8;
    c.unet_base = 4;
    c.unet_max = 8;
    c.disc_base = 4;
    c.disc_max = 8;
    return c;
  }
};

// mask tensor [b,1,h,w] -> per-sample token masks at 1/8 scale
template <typename T>
std::vector<TokenMask> token_masks_from_tensor(const Tensor<T>& mask, int64_t factor) {
  const int64_t b = mask.dim(0), h = mask.dim(2), w = mask.dim(3);
  std::vector<TokenMask> out;
  out.reserve(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    BinaryMask bm(h, w, 0);
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        bm.at(y, x) = mask.vec()[static_cast<size_t>((i * h + y) * w + x)] > T(0.5) ? 1 : 0;
    out.push_back(derive_token_mask(bm, factor));
  }
  return out;
}

// out = M (.) I + (1 - M) (.) Y — visible pixels always survive verbatim
template <typename T>
Tensor<T> composite_with_mask(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& y) {
  check(image.shape() == y.shape(), "composite: image/prediction shape mismatch " +
                                        shape_str(image.shape()) + " vs " + shape_str(y.shape()));
  Tensor<T> m = expand(mask, image.shape());
  return add(mul(m, image), mul(add_scalar(neg(m), T(1)), y));
}

// ---------------------------------------------------------------------------
// stage 1: head -> body -> style-modulated reconstruction tail

template <typename T>
struct Stage1 {
  GeneratorConfig<T> cfg;
  ConvHead<T> head;
  LinearProjectionHead<T> lp_head;
  TransformerBody<T> body;
  StylePipeline<T> style;
  ModulatedConv2d<T> tail8, tail4, tail2, tail1, to_rgb;

  Stage1() = default;
  Stage1(const GeneratorConfig<T>& cfg_, Rng& rng) : cfg(cfg_) {
    const int64_t c = cfg.embed_dim;
    if (cfg.tokenization == Tokenization::kStackedConv)
      head = ConvHead<T>(c, rng);
    else
      lp_head = LinearProjectionHead<T>(c, rng);
    body = TransformerBody<T>(c, cfg.num_heads, cfg.tau, cfg.block_counts, cfg.windows,
                              cfg.mlp_ratio, rng);
    style = StylePipeline<T>(cfg.style_dim, c, cfg.style_p, rng);
    const bool shortcuts = cfg.tokenization == Tokenization::kStackedConv;
    tail8 = ModulatedConv2d<T>(shortcuts ? 2 * c : c, c, 3, cfg.style_dim, rng, cfg.demod_eps);
    tail4 = ModulatedConv2d<T>(shortcuts ? 2 * c : c, c, 3, cfg.style_dim, rng, cfg.demod_eps);
    tail2 = ModulatedConv2d<T>(shortcuts ? 2 * c : c, c, 3, cfg.style_dim, rng, cfg.demod_eps);
    tail1 = ModulatedConv2d<T>(c, c, 3, cfg.style_dim, rng, cfg.demod_eps);
    to_rgb = ModulatedConv2d<T>(c, 3, 3, cfg.style_dim, rng, cfg.demod_eps);
  }

  struct Output {
    Tensor<T> image;  // coarse prediction in [-1,1]
    Tensor<T> fused_style;
  };

  // masked_image: [b,3,h,w] (already I (.) M), mask: [b,1,h,w], noise: [b,s_d]
  Output forward(const Tensor<T>& masked_image, const Tensor<T>& mask, const Tensor<T>& noise,
                 Rng& rng) const {
    check(masked_image.ndim() == 4 && masked_image.dim(1) == 3,
          "stage1: image must be [b,3,h,w], got " + shape_str(masked_image.shape()));
    check(mask.ndim() == 4 && mask.dim(1) == 1 && mask.dim(0) == masked_image.dim(0) &&
              mask.dim(2) == masked_image.dim(2) && mask.dim(3) == masked_image.dim(3),
          "stage1: mask must be [b,1,h,w] matching the image");
    const int64_t h = masked_image.dim(2), w = masked_image.dim(3);
    check(h % 8 == 0 && w % 8 == 0, "stage1: extent must be divisible by 8");

    Tensor<T> x4 = concat<T>({masked_image, mask}, 1);
    Tensor<T> tokens, f8, f4, f2;
    const bool shortcuts = cfg.tokenization == Tokenization::kStackedConv;
    if (shortcuts) {
      auto ho = head.forward(x4);
      tokens = ho.tokens;
      f8 = ho.feat_eighth;
      f4 = ho.feat_quarter;
      f2 = ho.feat_half;
    } else {
      tokens = lp_head.forward(x4);
    }

    std::vector<TokenMask> tms = token_masks_from_tensor(mask, 8);
    auto [body_out, final_masks] = body.forward(tokens, tms);

    // one style pipeline feeds both the tail and the refinement decoder
    Tensor<T> deep = shortcuts ? f8 : tokens_to_grid(tokens, h / 8, w / 8);
    Tensor<T> s = style.forward(noise, deep, rng);

    Tensor<T> g = tokens_to_grid(body_out, h / 8, w / 8);
    g = leaky_relu(tail8.forward(shortcuts ? concat<T>({g, f8}, 1) : g, s, &rng));
    g = upsample_nearest2x(g);
    g = leaky_relu(tail4.forward(shortcuts ? concat<T>({g, f4}, 1) : g, s, &rng));
    g = upsample_nearest2x(g);
    g = leaky_relu(tail2.forward(shortcuts ? concat<T>({g, f2}, 1) : g, s, &rng));
    g = upsample_nearest2x(g);
    g = leaky_relu(tail1.forward(g, s, &rng));
    Tensor<T> y = tanh(to_rgb.forward(g, s, nullptr));
    return {y, s};
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    if (cfg.tokenization == Tokenization::kStackedConv)
      head.params(prefix + ".head", out);
    else
      lp_head.params(prefix + ".lp_head", out);
    body.params(prefix + ".body", out);
    style.params(prefix + ".style", out);
    tail8.params(prefix + ".tail8", out);
    tail4.params(prefix + ".tail4", out);
    tail2.params(prefix + ".tail2", out);
    tail1.params(prefix + ".tail1", out);
    to_rgb.params(prefix + ".to_rgb", out);
  }
};

// ---------------------------------------------------------------------------
// stage 2: Conv-U-Net refiner, decoder modulated by the fused style

template <typename T>
struct Unet {
  static constexpr int kLevels = 5;  // downsamples to 1/32
  GeneratorConfig<T> cfg;
  Conv2dLayer<T> from_rgb;
  std::vector<Conv2dLayer<T>> enc_conv;
  std::vector<Conv2dLayer<T>> enc_down;
  Conv2dLayer<T> mid;
  std::vector<ModulatedConv2d<T>> dec_conv;
  ModulatedConv2d<T> to_rgb;

  int64_t ch(int level) const {
    return std::min<int64_t>(cfg.unet_base << level, cfg.unet_max);
  }

  Unet() = default;
  Unet(const GeneratorConfig<T>& cfg_, Rng& rng) : cfg(cfg_) {
    from_rgb = Conv2dLayer<T>(4, ch(0), 3, 1, rng);
    for (int l = 0; l < kLevels; ++l) {
      enc_conv.emplace_back(ch(l), ch(l), 3, 1, rng);
      enc_down.emplace_back(ch(l), ch(l + 1), 3, 2, rng);
    }
    mid = Conv2dLayer<T>(ch(kLevels), ch(kLevels), 3, 1, rng);
    for (int l = 0; l < kLevels; ++l) {
      dec_conv.emplace_back(ch(l + 1) + ch(l), ch(l), 3, cfg.style_dim, rng, cfg.demod_eps);
    }
    to_rgb = ModulatedConv2d<T>(ch(0), 3, 3, cfg.style_dim, rng, cfg.demod_eps);
  }

  // coarse: [b,3,h,w], mask: [b,1,h,w], style: [b,s_d]
  Tensor<T> forward(const Tensor<T>& coarse, const Tensor<T>& mask, const Tensor<T>& style,
                    Rng& rng) const {
    check(coarse.dim(2) % 32 == 0 && coarse.dim(3) % 32 == 0,
          "stage2: extent " + shape_str(coarse.shape()) +
              " not divisible by 32 (pad upstream)");
    Tensor<T> x = leaky_relu(from_rgb.forward(concat<T>({coarse, mask}, 1)));
    std::vector<Tensor<T>> skips;
    for (int l = 0; l < kLevels; ++l) {
      x = leaky_relu(enc_conv[static_cast<size_t>(l)].forward(x));
      skips.push_back(x);
      x = leaky_relu(enc_down[static_cast<size_t>(l)].forward(x));
    }
    x = leaky_relu(mid.forward(x));
    for (int l = kLevels - 1; l >= 0; --l) {
      x = upsample_nearest2x(x);
      x = concat<T>({x, skips[static_cast<size_t>(l)]}, 1);
      x = leaky_relu(dec_conv[static_cast<size_t>(l)].forward(x, style, &rng));
    }
    return tanh(to_rgb.forward(x, style, nullptr));
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    from_rgb.params(prefix + ".from_rgb", out);
    for (int l = 0; l < kLevels; ++l) {
      enc_conv[static_cast<size_t>(l)].params(prefix + ".enc" + std::to_string(l), out);
      enc_down[static_cast<size_t>(l)].params(prefix + ".enc_down" + std::to_string(l), out);
    }
    mid.params(prefix + ".mid", out);
    for (int l = 0; l < kLevels; ++l)
      dec_conv[static_cast<size_t>(l)].params(prefix + ".dec" + std::to_string(l), out);
    to_rgb.params(prefix + ".to_rgb", out);
  }
};

// ---------------------------------------------------------------------------
// discriminator (residual down blocks, channels doubling to a cap, mask as a
// fourth input channel)

template <typename T>
struct Discriminator {
  struct ResDown {
    Conv2dLayer<T> conv1;
    Conv2dLayer<T> conv2;   // stride 2
    Tensor<T> skip_weight;  // 1x1 stride-2, no bias
  };

  GeneratorConfig<T> cfg;
  Conv2dLayer<T> from_rgb;
  std::vector<ResDown> blocks;
  Conv2dLayer<T> final_conv;
  Linear<T> fc_hidden;
  Linear<T> fc_out;

  int64_t ch(int level) const {
    return std::min<int64_t>(cfg.disc_base << level, cfg.disc_max);
  }

  Discriminator() = default;
  Discriminator(const GeneratorConfig<T>& cfg_, Rng& rng) : cfg(cfg_) {
    from_rgb = Conv2dLayer<T>(4, ch(0), 3, 1, rng);
    int levels = 0;
    for (int64_t s = cfg.input_size; s > 4; s /= 2) ++levels;
    for (int l = 0; l < levels; ++l) {
      ResDown b;
      b.conv1 = Conv2dLayer<T>(ch(l), ch(l), 3, 1, rng);
      b.conv2 = Conv2dLayer<T>(ch(l), ch(l + 1), 3, 2, rng);
      b.skip_weight = init_weight<T>({ch(l + 1), ch(l), 1, 1}, ch(l), rng);
      blocks.push_back(std::move(b));
    }
    const int64_t top = ch(levels);
    final_conv = Conv2dLayer<T>(top, top, 3, 1, rng);
    fc_hidden = Linear<T>(top * 4 * 4, top, rng);
    fc_out = Linear<T>(top, 1, rng);
  }

  // image: [b,3,h,w], mask: [b,1,h,w] -> logits [b,1]
  Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& mask) const {
    check(image.ndim() == 4 && image.dim(1) == 3,
          "discriminator: image must be [b,3,h,w], got " + shape_str(image.shape()));
    check(image.dim(2) == cfg.input_size && image.dim(3) == cfg.input_size,
          "discriminator: expected " + std::to_string(cfg.input_size) + "px input, got " +
              shape_str(image.shape()));
    Tensor<T> x = leaky_relu(from_rgb.forward(concat<T>({image, mask}, 1)));
    const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
    for (const auto& b : blocks) {
      Tensor<T> main = leaky_relu(b.conv1.forward(x));
      main = leaky_relu(b.conv2.forward(main));
      Tensor<T> skip = conv2d(x, b.skip_weight, /*stride=*/2, /*pad=*/0);
      x = scale(add(main, skip), inv_sqrt2);
    }
    x = leaky_relu(final_conv.forward(x));
    x = reshape(x, {x.dim(0), x.dim(1) * 16});
    x = leaky_relu(fc_hidden.forward(x));
    return fc_out.forward(x);
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    from_rgb.params(prefix + ".from_rgb", out);
    for (size_t l = 0; l < blocks.size(); ++l) {
      blocks[l].conv1.params(prefix + ".block" + std::to_string(l) + ".conv1", out);
      blocks[l].conv2.params(prefix + ".block" + std::to_string(l) + ".conv2", out);
      out.add(prefix + ".block" + std::to_string(l) + ".skip", blocks[l].skip_weight);
    }
    final_conv.params(prefix + ".final_conv", out);
    fc_hidden.params(prefix + ".fc_hidden", out);
    fc_out.params(prefix + ".fc_out", out);
  }
};

// ---------------------------------------------------------------------------
// full generator

template <typename T>
struct MatGenerator {
  GeneratorConfig<T> cfg;
  Stage1<T> stage1;
  Unet<T> stage2;

  MatGenerator() = default;
  MatGenerator(const GeneratorConfig<T>& cfg_, Rng& rng) : cfg(cfg_) {
    cfg.validate();
    stage1 = Stage1<T>(cfg, rng);
    stage2 = Unet<T>(cfg, rng);
  }

  struct Output {
    Tensor<T> coarse;           // stage-1 output
    Tensor<T> coarse_composed;  // visible pixels pasted back
    Tensor<T> refined;          // stage-2 output
    Tensor<T> composed;         // final image
  };

  // image: [b,3,h,w] ground truth in [-1,1]; mask: [b,1,h,w]; noise [b,s_d].
  // The masked image I (.) M is formed internally.
  Output forward(const Tensor<T>& image, const Tensor<T>& mask, const Tensor<T>& noise,
                 Rng& rng) const {
    Tensor<T> masked = mul(image, expand(mask, image.shape()));
    auto s1 = stage1.forward(masked, mask, noise, rng);
    Tensor<T> coarse_composed = composite_with_mask(image, mask, s1.image);
    Tensor<T> refined = stage2.forward(coarse_composed, mask, s1.fused_style, rng);
    Tensor<T> composed = composite_with_mask(image, mask, refined);
    return {s1.image, coarse_composed, refined, composed};
  }

  NamedParams<T> params() const {
    NamedParams<T> ps;
    stage1.params("g.stage1", ps);
    stage2.params("g.stage2", ps);
    return ps;
  }
};

// Whole-image convenience path: pad to the aligned extent, run both stages
// with recording disabled, crop, and composite so visible pixels are exact.
template <typename T>
ImageF inpaint(const MatGenerator<T>& gen, const ImageF& image, const BinaryMask& mask,
               uint64_t seed) {
  check(image.channels == 3, "inpaint: image must have 3 channels, got " +
                                 std::to_string(image.channels));
  check(image.height == mask.height && image.width == mask.width,
        "inpaint: image and mask extents differ");
  NoGradGuard ng;
  PaddedInput padded = pad_to_multiple(image, mask, gen.cfg.pad_multiple());
  const int64_t h = padded.image.height, w = padded.image.width;

  std::vector<T> img_v(padded.image.data.begin(), padded.image.data.end());
  Tensor<T> img = Tensor<T>::from({1, 3, h, w}, std::move(img_v));
  std::vector<T> mask_v(static_cast<size_t>(h * w));
  for (size_t i = 0; i < mask_v.size(); ++i) mask_v[i] = static_cast<T>(padded.mask.valid[i]);
  Tensor<T> m = Tensor<T>::from({1, 1, h, w}, std::move(mask_v));

  Rng rng(seed);
  Tensor<T> noise = Tensor<T>::randn({1, gen.cfg.style_dim}, rng);
  auto out = gen.forward(img, m, noise, rng);

  ImageF full(3, h, w);
  for (size_t i = 0; i < full.data.size(); ++i)
    full.data[i] = static_cast<float>(out.composed.vec()[i]);
  ImageF cropped = crop_to_original(full, padded.crop);
  // composite once more on the original extent: visible pixels bit-exact
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < cropped.height; ++y)
      for (int64_t x = 0; x < cropped.width; ++x)
        if (mask.at(y, x)) cropped.at(c, y, x) = image.at(c, y, x);
  return cropped;
}

}  // namespace mat
