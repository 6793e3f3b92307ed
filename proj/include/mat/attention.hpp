#pragma once

#include "mat/mask.hpp"
#include "mat/nn.hpp"

// Multi-head contextual attention: windowed multi-head attention whose
// logits receive an additive -tau for invalid keys, so outputs aggregate
// (up to an exponentially small tail) only valid tokens. After each call the
// token mask is updated: any window that contained a valid token becomes
// fully valid.

namespace mat {

template <typename T>
struct AttentionConfig {
  int64_t embed_dim = 0;
  int64_t num_heads = 1;
  int64_t window = 1;
  T tau = T(100);

  int64_t head_dim() const { return embed_dim / num_heads; }

  void validate() const {
    check(embed_dim > 0 && num_heads > 0 && window > 0, "AttentionConfig: positive dims required");
    check(embed_dim % num_heads == 0, "AttentionConfig: embed_dim " + std::to_string(embed_dim) +
                                          " not divisible by heads " + std::to_string(num_heads));
    check(tau > T(0), "AttentionConfig: tau must be positive");
  }
};

// Upper bound on the total softmax weight landing on invalid keys when at
// least one valid key exists: (A-1) * exp((delta - tau) / sqrt(d_k)), with
// delta the spread of the raw logits and A the window area.
inline double attention_weight_bound(double logit_range, double tau, double d_k,
                                     double window_area) {
  check(logit_range >= 0 && tau > 0, "attention_weight_bound: need delta >= 0 and tau > 0");
  return (window_area - 1.0) * std::exp((logit_range - tau) / std::sqrt(d_k));
}

// Additive logit bias [b, nw, 1, t, t]: 0 for an admissible key, -tau when the
// key token is invalid or lies across the cyclic-shift seam (Swin wrap rule).
template <typename T>
Tensor<T> attention_logit_bias(const std::vector<TokenMask>& masks, const WindowPlan& plan, T tau) {
  const int64_t b = static_cast<int64_t>(masks.size());
  const int64_t nw = plan.num_windows();
  const int64_t t = plan.tokens_per_window();
  const std::vector<int32_t> region = wrap_region_ids(plan);
  std::vector<T> bias(static_cast<size_t>(b * nw * t * t), T(0));
  for (int64_t bi = 0; bi < b; ++bi) {
    const TokenMask& tm = masks[static_cast<size_t>(bi)];
    for (int64_t wi = 0; wi < nw; ++wi) {
      for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < t; ++j) {
          const int64_t src_j = plan.perm[static_cast<size_t>(wi * t + j)];
          const bool invalid = tm.valid[static_cast<size_t>(src_j)] == 0;
          const bool cross = region[static_cast<size_t>(wi * t + i)] !=
                             region[static_cast<size_t>(wi * t + j)];
          if (invalid || cross)
            bias[static_cast<size_t>(((bi * nw + wi) * t + i) * t + j)] = -tau;
        }
      }
    }
  }
  return Tensor<T>::from({b, nw, 1, t, t}, std::move(bias));
}

template <typename T>
struct Mca {
  AttentionConfig<T> cfg;
  Linear<T> to_q, to_k, to_v, proj;

  Mca() = default;
  Mca(const AttentionConfig<T>& cfg_, Rng& rng)
      : cfg(cfg_),
        to_q(cfg_.embed_dim, cfg_.embed_dim, rng),
        to_k(cfg_.embed_dim, cfg_.embed_dim, rng),
        to_v(cfg_.embed_dim, cfg_.embed_dim, rng),
        proj(cfg_.embed_dim, cfg_.embed_dim, rng) {
    cfg.validate();
  }

  // x: [b, tokens, c]; one TokenMask per batch element, all on the same grid.
  std::pair<Tensor<T>, std::vector<TokenMask>> forward(const Tensor<T>& x,
                                                       const std::vector<TokenMask>& masks,
                                                       bool shifted) const {
    check(x.ndim() == 3, "mca: input must be [b, tokens, c], got " + shape_str(x.shape()));
    const int64_t b = x.dim(0), tokens = x.dim(1), c = x.dim(2);
    check(c == cfg.embed_dim, "mca: channel dim " + std::to_string(c) + " != config embed_dim " +
                                  std::to_string(cfg.embed_dim));
    check(b == static_cast<int64_t>(masks.size()), "mca: need one token mask per batch element");
    const int64_t gh = masks[0].grid_h, gw = masks[0].grid_w;
    for (const auto& m : masks)
      check(m.grid_h == gh && m.grid_w == gw, "mca: token masks disagree on grid extent");
    check(gh * gw == tokens, "mca: token count " + std::to_string(tokens) + " != grid " +
                                 std::to_string(gh) + "x" + std::to_string(gw));

    const WindowPlan plan = make_window_plan(gh, gw, cfg.window, shifted);
    const int64_t nw = plan.num_windows(), t = plan.tokens_per_window();
    const int64_t heads = cfg.num_heads, dk = cfg.head_dim();

    auto window_split = [&](const Tensor<T>& y) {
      // [b, tokens, c] -> [b, nw, heads, t, dk]
      Tensor<T> g = index_select(y, 1, plan.perm);
      g = reshape(g, {b, nw, t, heads, dk});
      return permute(g, {0, 1, 3, 2, 4});
    };

    Tensor<T> q = window_split(to_q.forward(x));
    Tensor<T> k = window_split(to_k.forward(x));
    Tensor<T> v = window_split(to_v.forward(x));

    Tensor<T> logits = matmul(q, transpose_last2(k));  // [b, nw, heads, t, t]
    Tensor<T> bias = attention_logit_bias(masks, plan, cfg.tau);
    logits = scale(add(logits, bias), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))));
    Tensor<T> att = softmax_lastdim(logits);
    Tensor<T> out = matmul(att, v);  // [b, nw, heads, t, dk]

    out = permute(out, {0, 1, 3, 2, 4});           // [b, nw, t, heads, dk]
    out = reshape(out, {b, tokens, c});            // window-major rows
    out = index_select(out, 1, plan.inv_perm);     // back to grid order
    out = proj.forward(out);

    std::vector<TokenMask> updated;
    updated.reserve(masks.size());
    for (const auto& m : masks) updated.push_back(update_token_mask(m, cfg.window, shifted));
    return {out, std::move(updated)};
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    to_q.params(prefix + ".q", out);
    to_k.params(prefix + ".k", out);
    to_v.params(prefix + ".v", out);
    proj.params(prefix + ".proj", out);
  }
};

}  // namespace mat
