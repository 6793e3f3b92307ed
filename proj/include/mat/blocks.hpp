#pragma once

#include "mat/attention.hpp"

// Transformer building blocks. The adjusted block replaces residual learning
// with concatenation + FC fusion and carries no layer normalization anywhere;
// a stage is a run of blocks (alternating window phase, starting unshifted)
// followed by a 3x3 convolution over the token grid and a global residual.

namespace mat {

template <typename T>
Tensor<T> tokens_to_grid(const Tensor<T>& x, int64_t grid_h, int64_t grid_w) {
  const int64_t b = x.dim(0), c = x.dim(2);
  return permute(reshape(x, {b, grid_h, grid_w, c}), {0, 3, 1, 2});
}

template <typename T>
Tensor<T> grid_to_tokens(const Tensor<T>& y) {
  const int64_t b = y.dim(0), c = y.dim(1), h = y.dim(2), w = y.dim(3);
  return reshape(permute(y, {0, 2, 3, 1}), {b, h * w, c});
}

// Eq-style block: x' = FC([MCA(x), x]), out = MLP(x')
template <typename T>
struct AdjustedBlock {
  Mca<T> mca;
  Linear<T> fuse;     // 2c -> c
  Linear<T> mlp_in;   // c -> ratio*c
  Linear<T> mlp_out;  // ratio*c -> c

  AdjustedBlock() = default;
  AdjustedBlock(const AttentionConfig<T>& cfg, int64_t mlp_ratio, Rng& rng)
      : mca(cfg, rng),
        fuse(2 * cfg.embed_dim, cfg.embed_dim, rng),
        mlp_in(cfg.embed_dim, mlp_ratio * cfg.embed_dim, rng),
        mlp_out(mlp_ratio * cfg.embed_dim, cfg.embed_dim, rng) {}

  std::pair<Tensor<T>, std::vector<TokenMask>> forward(const Tensor<T>& x,
                                                       const std::vector<TokenMask>& masks,
                                                       bool shifted) const {
    auto [att, updated] = mca.forward(x, masks, shifted);
    Tensor<T> fused = fuse.forward(concat<T>({att, x}, -1));
    Tensor<T> out = mlp_out.forward(gelu(mlp_in.forward(fused)));
    return {out, std::move(updated)};
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    mca.params(prefix + ".mca", out);
    fuse.params(prefix + ".fuse", out);
    mlp_in.params(prefix + ".mlp_in", out);
    mlp_out.params(prefix + ".mlp_out", out);
  }
};

template <typename T>
struct TransformerStage {
  std::vector<AdjustedBlock<T>> blocks;
  Conv2dLayer<T> conv;  // 3x3 over the token grid, no activation

  TransformerStage() = default;
  TransformerStage(const AttentionConfig<T>& cfg, int64_t num_blocks, int64_t mlp_ratio, Rng& rng)
      : conv(cfg.embed_dim, cfg.embed_dim, 3, 1, rng) {
    for (int64_t i = 0; i < num_blocks; ++i) blocks.emplace_back(cfg, mlp_ratio, rng);
  }

  std::pair<Tensor<T>, std::vector<TokenMask>> forward(const Tensor<T>& x,
                                                       const std::vector<TokenMask>& masks) const {
    Tensor<T> cur = x;
    std::vector<TokenMask> tm = masks;
    for (size_t i = 0; i < blocks.size(); ++i) {
      auto [nxt, upd] = blocks[i].forward(cur, tm, /*shifted=*/i % 2 == 1);
      cur = nxt;
      tm = std::move(upd);
    }
    const int64_t gh = masks[0].grid_h, gw = masks[0].grid_w;
    Tensor<T> y = grid_to_tokens(conv.forward(tokens_to_grid(cur, gh, gw)));
    return {add(y, x), std::move(tm)};  // global residual
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].params(prefix + ".block" + std::to_string(i), out);
    conv.params(prefix + ".conv", out);
  }
};

// Five stages at token-grid scales {1, 1/2, 1/4, 1/2, 1} of the head output
// (1/8, 1/16, 1/32, 1/16, 1/8 of the image). Downsampling is a stride-2 conv,
// upsampling nearest x2 + 3x3 conv; masks follow with any-valid pooling down
// and replication up.
template <typename T>
struct TransformerBody {
  std::vector<TransformerStage<T>> stages;
  Conv2dLayer<T> down0, down1;
  Conv2dLayer<T> up_conv0, up_conv1;

  TransformerBody() = default;
  TransformerBody(int64_t embed_dim, int64_t num_heads, T tau,
                  const std::array<int64_t, 5>& block_counts,
                  const std::array<int64_t, 5>& windows, int64_t mlp_ratio, Rng& rng) {
    for (int i = 0; i < 5; ++i) {
      AttentionConfig<T> cfg{embed_dim, num_heads, windows[static_cast<size_t>(i)], tau};
      stages.emplace_back(cfg, block_counts[static_cast<size_t>(i)], mlp_ratio, rng);
    }
    down0 = Conv2dLayer<T>(embed_dim, embed_dim, 3, 2, rng);
    down1 = Conv2dLayer<T>(embed_dim, embed_dim, 3, 2, rng);
    up_conv0 = Conv2dLayer<T>(embed_dim, embed_dim, 3, 1, rng);
    up_conv1 = Conv2dLayer<T>(embed_dim, embed_dim, 3, 1, rng);
  }

  std::pair<Tensor<T>, std::vector<TokenMask>> forward(const Tensor<T>& x,
                                                       const std::vector<TokenMask>& masks) const {
    auto apply_masks = [](const std::vector<TokenMask>& in, auto fn) {
      std::vector<TokenMask> out;
      out.reserve(in.size());
      for (const auto& m : in) out.push_back(fn(m));
      return out;
    };
    const int64_t gh = masks[0].grid_h, gw = masks[0].grid_w;

    auto [s0, m0] = stages[0].forward(x, masks);

    Tensor<T> g1 = conv2d(tokens_to_grid(s0, gh, gw), down0.weight, down0.bias, 2, 1);
    auto m1in = apply_masks(m0, [](const TokenMask& m) { return downsample_token_mask(m); });
    auto [s1, m1] = stages[1].forward(grid_to_tokens(g1), m1in);

    Tensor<T> g2 = conv2d(tokens_to_grid(s1, gh / 2, gw / 2), down1.weight, down1.bias, 2, 1);
    auto m2in = apply_masks(m1, [](const TokenMask& m) { return downsample_token_mask(m); });
    auto [s2, m2] = stages[2].forward(grid_to_tokens(g2), m2in);

    Tensor<T> g3 = upsample_nearest2x(tokens_to_grid(s2, gh / 4, gw / 4));
    g3 = conv2d(g3, up_conv0.weight, up_conv0.bias, 1, 1);
    auto m3in = apply_masks(m2, [](const TokenMask& m) { return upsample_token_mask(m); });
    auto [s3, m3] = stages[3].forward(grid_to_tokens(g3), m3in);

    Tensor<T> g4 = upsample_nearest2x(tokens_to_grid(s3, gh / 2, gw / 2));
    g4 = conv2d(g4, up_conv1.weight, up_conv1.bias, 1, 1);
    auto m4in = apply_masks(m3, [](const TokenMask& m) { return upsample_token_mask(m); });
    auto [s4, m4] = stages[4].forward(grid_to_tokens(g4), m4in);

    return {s4, std::move(m4)};
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    for (size_t i = 0; i < stages.size(); ++i)
      stages[i].params(prefix + ".stage" + std::to_string(i), out);
    down0.params(prefix + ".down0", out);
    down1.params(prefix + ".down1", out);
    up_conv0.params(prefix + ".up0", out);
    up_conv1.params(prefix + ".up1", out);
  }
};

// ---------------------------------------------------------------------------
// tokenization heads

// Four convolutions: one channel lift (image 3 + mask 1 -> c) and three
// stride-2 downsamplers, yielding 1/8-scale tokens. Intermediate features at
// 1/2, 1/4 and 1/8 are kept for decoder shortcuts.
template <typename T>
struct ConvHead {
  Conv2dLayer<T> lift;
  Conv2dLayer<T> down1, down2, down3;

  struct Output {
    Tensor<T> tokens;       // [b, h/8*w/8, c]
    Tensor<T> feat_half;    // [b, c, h/2, w/2]
    Tensor<T> feat_quarter; // [b, c, h/4, w/4]
    Tensor<T> feat_eighth;  // [b, c, h/8, w/8]
  };

  ConvHead() = default;
  ConvHead(int64_t embed_dim, Rng& rng)
      : lift(4, embed_dim, 3, 1, rng),
        down1(embed_dim, embed_dim, 3, 2, rng),
        down2(embed_dim, embed_dim, 3, 2, rng),
        down3(embed_dim, embed_dim, 3, 2, rng) {}

  Output forward(const Tensor<T>& x) const {
    check(x.ndim() == 4 && x.dim(1) == 4,
          "conv_head: input must be [b,4,h,w], got " + shape_str(x.shape()));
    check(x.dim(2) % 8 == 0 && x.dim(3) % 8 == 0,
          "conv_head: extent " + shape_str(x.shape()) + " not divisible by 8");
    Output out;
    Tensor<T> f0 = leaky_relu(lift.forward(x));
    out.feat_half = leaky_relu(down1.forward(f0));
    out.feat_quarter = leaky_relu(down2.forward(out.feat_half));
    out.feat_eighth = leaky_relu(down3.forward(out.feat_quarter));
    out.tokens = grid_to_tokens(out.feat_eighth);
    return out;
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    lift.params(prefix + ".lift", out);
    down1.params(prefix + ".down1", out);
    down2.params(prefix + ".down2", out);
    down3.params(prefix + ".down3", out);
  }
};

// ViT-style tokenization: non-overlapping 8x8 patches flattened and mapped by
// one linear layer. Only used by the ablation configuration; provides no
// multi-scale shortcuts.
template <typename T>
struct LinearProjectionHead {
  Linear<T> proj;  // 4*8*8 -> c

  LinearProjectionHead() = default;
  LinearProjectionHead(int64_t embed_dim, Rng& rng) : proj(4 * 8 * 8, embed_dim, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.ndim() == 4 && x.dim(1) == 4,
          "linear_projection_head: input must be [b,4,h,w], got " + shape_str(x.shape()));
    check(x.dim(2) % 8 == 0 && x.dim(3) % 8 == 0,
          "linear_projection_head: extent " + shape_str(x.shape()) + " not divisible by 8");
    const int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor<T> patches = reshape(x, {b, 4, h / 8, 8, w / 8, 8});
    patches = permute(patches, {0, 2, 4, 1, 3, 5});  // [b, h/8, w/8, 4, 8, 8]
    patches = reshape(patches, {b, (h / 8) * (w / 8), 4 * 8 * 8});
    return proj.forward(patches);
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    proj.params(prefix + ".proj", out);
  }
};

}  // namespace mat
