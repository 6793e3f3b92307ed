#pragma once

#include <array>

#include "mat/image.hpp"

// Free-form mask sampling, pixel->token mask derivation, window partition
// geometry (with cyclic shift) and the dynamic validity-update rule.

namespace mat {

// ---------------------------------------------------------------------------
// free-form mask sampling

enum class MaskSetting { kSmall, kLarge };

// Counts are sampled uniformly from the inclusive ranges below. Rectangles
// are "up to full-size" / "up to half-size"; strokes are polylines through
// uniformly placed vertices drawn with round caps of one sampled brush width.
struct MaskSpec {
  MaskSetting setting = MaskSetting::kLarge;
  int64_t full_rect_max = 3;
  int64_t half_rect_max = 5;
  int64_t stroke_max = 9;
  int64_t brush_min = 12, brush_max = 48;
  int64_t vertex_min = 4, vertex_max = 18;
  uint64_t seed = 0;

  static MaskSpec large() { return MaskSpec{}; }

  static MaskSpec small() {
    MaskSpec s;
    s.setting = MaskSetting::kSmall;
    s.full_rect_max = 2;
    s.half_rect_max = 3;
    s.stroke_max = 4;
    return s;
  }
};

namespace maskdetail {

inline void fill_rect(BinaryMask& m, int64_t x0, int64_t y0, int64_t rw, int64_t rh) {
  const int64_t x1 = std::min(m.width, x0 + rw);
  const int64_t y1 = std::min(m.height, y0 + rh);
  for (int64_t y = std::max<int64_t>(0, y0); y < y1; ++y)
    for (int64_t x = std::max<int64_t>(0, x0); x < x1; ++x) m.at(y, x) = 0;
}

// Round-capped segment: pixel is inside iff 4*dist^2(P, AB) <= width^2.
// All comparisons are in exact int64 arithmetic so masks are bit-identical
// across platforms.
inline void fill_capsule(BinaryMask& m, int64_t ax, int64_t ay, int64_t bx, int64_t by,
                         int64_t width) {
  const int64_t r = width / 2 + 1;
  const int64_t x_lo = std::max<int64_t>(0, std::min(ax, bx) - r);
  const int64_t x_hi = std::min<int64_t>(m.width - 1, std::max(ax, bx) + r);
  const int64_t y_lo = std::max<int64_t>(0, std::min(ay, by) - r);
  const int64_t y_hi = std::min<int64_t>(m.height - 1, std::max(ay, by) + r);
  const int64_t abx = bx - ax, aby = by - ay;
  const int64_t den = abx * abx + aby * aby;
  const int64_t w2 = width * width;
  for (int64_t y = y_lo; y <= y_hi; ++y) {
    for (int64_t x = x_lo; x <= x_hi; ++x) {
      const int64_t apx = x - ax, apy = y - ay;
      int64_t inside;
      if (den == 0) {
        inside = 4 * (apx * apx + apy * apy) <= w2;
      } else {
        const int64_t tnum = apx * abx + apy * aby;
        if (tnum <= 0) {
          inside = 4 * (apx * apx + apy * apy) <= w2;
        } else if (tnum >= den) {
          const int64_t bpx = x - bx, bpy = y - by;
          inside = 4 * (bpx * bpx + bpy * bpy) <= w2;
        } else {
          // dist^2 = |AP|^2 - tnum^2/den, compared as rationals
          const int64_t cross = apx * aby - apy * abx;
          inside = 4 * cross * cross <= w2 * den;
        }
      }
      if (inside) m.at(y, x) = 0;
    }
  }
}

}  // namespace maskdetail

// Union of sampled rectangles and brush strokes marked invalid.
inline BinaryMask sample_free_form_mask(const MaskSpec& spec, int64_t h, int64_t w, Rng& rng) {
  check(h >= 1 && w >= 1, "sample_free_form_mask: canvas must be at least 1x1");
  BinaryMask m(h, w, 1);

  const int64_t n_full = rng.uniform_int(0, spec.full_rect_max);
  for (int64_t i = 0; i < n_full; ++i) {
    const int64_t rw = rng.uniform_int(1, w);
    const int64_t rh = rng.uniform_int(1, h);
    const int64_t x0 = rng.uniform_int(0, w - rw);
    const int64_t y0 = rng.uniform_int(0, h - rh);
    maskdetail::fill_rect(m, x0, y0, rw, rh);
  }

  const int64_t n_half = rng.uniform_int(0, spec.half_rect_max);
  for (int64_t i = 0; i < n_half; ++i) {
    const int64_t rw = rng.uniform_int(1, std::max<int64_t>(1, w / 2));
    const int64_t rh = rng.uniform_int(1, std::max<int64_t>(1, h / 2));
    const int64_t x0 = rng.uniform_int(0, w - rw);
    const int64_t y0 = rng.uniform_int(0, h - rh);
    maskdetail::fill_rect(m, x0, y0, rw, rh);
  }

  const int64_t n_strokes = rng.uniform_int(0, spec.stroke_max);
  for (int64_t s = 0; s < n_strokes; ++s) {
    const int64_t width = rng.uniform_int(spec.brush_min, spec.brush_max);
    const int64_t nv = rng.uniform_int(spec.vertex_min, spec.vertex_max);
    int64_t px = rng.uniform_int(0, w - 1);
    int64_t py = rng.uniform_int(0, h - 1);
    for (int64_t v = 1; v < nv; ++v) {
      const int64_t qx = rng.uniform_int(0, w - 1);
      const int64_t qy = rng.uniform_int(0, h - 1);
      maskdetail::fill_capsule(m, px, py, qx, qy, width);
      px = qx;
      py = qy;
    }
  }
  return m;
}

inline BinaryMask sample_free_form_mask(const MaskSpec& spec, int64_t h, int64_t w) {
  Rng rng(spec.seed);
  return sample_free_form_mask(spec, h, w, rng);
}

// 20-bin histogram of hole ratios over [0,1]; counts sum to the list length.
inline std::array<int64_t, 20> mask_stats(const std::vector<BinaryMask>& masks) {
  check(!masks.empty(), "mask_stats: empty mask list");
  std::array<int64_t, 20> hist{};
  for (const auto& m : masks) {
    const double r = m.hole_ratio();
    int bin = static_cast<int>(r * 20.0);
    bin = std::min(19, std::max(0, bin));
    ++hist[static_cast<size_t>(bin)];
  }
  return hist;
}

// ---------------------------------------------------------------------------
// token masks

// Per-token validity on the downsampled grid. Updates are monotone: a valid
// token never becomes invalid.
struct TokenMask {
  int64_t grid_h = 0;
  int64_t grid_w = 0;
  std::vector<uint8_t> valid;
  int64_t window = 0;        // window size of the most recent update
  int64_t shift_offset = 0;  // shift of the most recent update

  TokenMask() = default;
  TokenMask(int64_t h, int64_t w, uint8_t fill = 1)
      : grid_h(h), grid_w(w), valid(static_cast<size_t>(h * w), fill) {}

  uint8_t& at(int64_t y, int64_t x) { return valid[static_cast<size_t>(y * grid_w + x)]; }
  uint8_t at(int64_t y, int64_t x) const { return valid[static_cast<size_t>(y * grid_w + x)]; }

  bool all_valid() const {
    for (uint8_t v : valid)
      if (!v) return false;
    return true;
  }
  bool any_valid() const {
    for (uint8_t v : valid)
      if (v) return true;
    return false;
  }
};

enum class TokenPoolRule { kAnyValid, kAllValid };

// Token is valid iff its factor x factor patch contains >= 1 valid pixel
// (any-valid rule; the head's receptive field mixes visible pixels into every
// such patch). The all-valid alternative sits behind the rule flag.
inline TokenMask derive_token_mask(const BinaryMask& m, int64_t factor,
                                   TokenPoolRule rule = TokenPoolRule::kAnyValid) {
  check(factor >= 1, "derive_token_mask: factor must be >= 1");
  check(m.height % factor == 0 && m.width % factor == 0,
        "derive_token_mask: " + std::to_string(m.height) + "x" + std::to_string(m.width) +
            " not divisible by " + std::to_string(factor));
  TokenMask tm(m.height / factor, m.width / factor, 0);
  for (int64_t ty = 0; ty < tm.grid_h; ++ty) {
    for (int64_t tx = 0; tx < tm.grid_w; ++tx) {
      int64_t n = 0;
      for (int64_t dy = 0; dy < factor; ++dy)
        for (int64_t dx = 0; dx < factor; ++dx) n += m.at(ty * factor + dy, tx * factor + dx);
      tm.at(ty, tx) = rule == TokenPoolRule::kAnyValid ? (n > 0) : (n == factor * factor);
    }
  }
  return tm;
}

// ---------------------------------------------------------------------------
// window partition geometry

// Token gather order for (shifted) window attention. The shifted phase
// cyclically rolls the grid by -floor(w/2) before partitioning (an axis whose
// extent equals the window size is not shifted; a full-extent window already
// sees every token on that axis). perm maps window-major position -> original
// row-major token index.
struct WindowPlan {
  int64_t grid_h = 0, grid_w = 0;
  int64_t window = 0;
  int64_t shift_h = 0, shift_w = 0;
  std::vector<int64_t> perm;
  std::vector<int64_t> inv_perm;

  int64_t num_windows() const { return (grid_h / window) * (grid_w / window); }
  int64_t tokens_per_window() const { return window * window; }
};

inline WindowPlan make_window_plan(int64_t n_h, int64_t n_w, int64_t w, bool shifted) {
  check(w >= 1, "window size must be >= 1");
  check(n_h % w == 0 && n_w % w == 0, "grid " + std::to_string(n_h) + "x" + std::to_string(n_w) +
                                          " not divisible by window " + std::to_string(w));
  WindowPlan plan;
  plan.grid_h = n_h;
  plan.grid_w = n_w;
  plan.window = w;
  plan.shift_h = shifted && w < n_h ? w / 2 : 0;
  plan.shift_w = shifted && w < n_w ? w / 2 : 0;
  const int64_t n = n_h * n_w;
  plan.perm.resize(static_cast<size_t>(n));
  plan.inv_perm.resize(static_cast<size_t>(n));
  const int64_t wins_per_row = n_w / w;
  for (int64_t wi = 0; wi < plan.num_windows(); ++wi) {
    const int64_t wr = wi / wins_per_row, wc = wi % wins_per_row;
    for (int64_t t = 0; t < w * w; ++t) {
      const int64_t si = wr * w + t / w;  // coords in the shifted grid
      const int64_t sj = wc * w + t % w;
      const int64_t oi = (si + plan.shift_h) % n_h;  // original coords
      const int64_t oj = (sj + plan.shift_w) % n_w;
      const int64_t dst = wi * w * w + t;
      const int64_t src = oi * n_w + oj;
      plan.perm[static_cast<size_t>(dst)] = src;
      plan.inv_perm[static_cast<size_t>(src)] = dst;
    }
  }
  return plan;
}

// Swin-style wrap regions: tokens pulled across the cyclic seam must not
// attend to tokens from the other side. Region id is a function of the
// original coordinate; same id <=> attention allowed. 0 everywhere when the
// plan is unshifted.
inline std::vector<int32_t> wrap_region_ids(const WindowPlan& plan) {
  auto axis_region = [&](int64_t coord, int64_t n, int64_t shift) -> int32_t {
    if (shift == 0) return 0;
    if (coord < n - plan.window) return 0;
    if (coord < n - shift) return 1;
    return 2;
  };
  std::vector<int32_t> ids(plan.perm.size());
  for (size_t dst = 0; dst < plan.perm.size(); ++dst) {
    const int64_t src = plan.perm[dst];
    const int64_t oi = src / plan.grid_w, oj = src % plan.grid_w;
    ids[dst] = axis_region(oi, plan.grid_h, plan.shift_h) * 3 +
               axis_region(oj, plan.grid_w, plan.shift_w);
  }
  return ids;
}

// A window with at least one valid token becomes fully valid; an all-invalid
// window stays invalid. Monotone and idempotent at a fixed phase.
inline TokenMask update_token_mask(const TokenMask& tm, int64_t w, bool shifted) {
  WindowPlan plan = make_window_plan(tm.grid_h, tm.grid_w, w, shifted);
  TokenMask out = tm;
  out.window = w;
  out.shift_offset = plan.shift_h;
  const int64_t t = plan.tokens_per_window();
  for (int64_t wi = 0; wi < plan.num_windows(); ++wi) {
    bool any = false;
    for (int64_t k = 0; k < t && !any; ++k)
      any = tm.valid[static_cast<size_t>(plan.perm[static_cast<size_t>(wi * t + k)])] != 0;
    if (any)
      for (int64_t k = 0; k < t; ++k)
        out.valid[static_cast<size_t>(plan.perm[static_cast<size_t>(wi * t + k)])] = 1;
  }
  return out;
}

// any-valid pooling down to half resolution (inter-stage downsampling)
inline TokenMask downsample_token_mask(const TokenMask& tm) {
  check(tm.grid_h % 2 == 0 && tm.grid_w % 2 == 0, "downsample_token_mask: odd grid");
  TokenMask out(tm.grid_h / 2, tm.grid_w / 2, 0);
  for (int64_t y = 0; y < out.grid_h; ++y)
    for (int64_t x = 0; x < out.grid_w; ++x)
      out.at(y, x) = tm.at(2 * y, 2 * x) || tm.at(2 * y, 2 * x + 1) || tm.at(2 * y + 1, 2 * x) ||
                     tm.at(2 * y + 1, 2 * x + 1);
  return out;
}

// replication up to double resolution (inter-stage upsampling)
inline TokenMask upsample_token_mask(const TokenMask& tm) {
  TokenMask out(tm.grid_h * 2, tm.grid_w * 2, 0);
  for (int64_t y = 0; y < out.grid_h; ++y)
    for (int64_t x = 0; x < out.grid_w; ++x) out.at(y, x) = tm.at(y / 2, x / 2);
  return out;
}

// ---------------------------------------------------------------------------
// padding to an aligned extent

struct CropRecord {
  int64_t orig_h = 0;
  int64_t orig_w = 0;
  bool padded = false;
};

namespace maskdetail {
// mirror index about the edges (repeating reflection for extreme pads)
inline int64_t reflect_index(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}
}  // namespace maskdetail

struct PaddedInput {
  ImageF image;
  BinaryMask mask;
  CropRecord crop;
};

// Reflect-pads the image on the bottom/right to a multiple of `multiple`;
// the mask is padded with invalid. The crop record restores the original
// extent exactly.
inline PaddedInput pad_to_multiple(const ImageF& img, const BinaryMask& mask, int64_t multiple) {
  check(multiple >= 1, "pad_to_multiple: multiple must be >= 1");
  check(img.height == mask.height && img.width == mask.width,
        "pad_to_multiple: image and mask extents differ");
  const int64_t ph = (img.height + multiple - 1) / multiple * multiple;
  const int64_t pw = (img.width + multiple - 1) / multiple * multiple;
  PaddedInput out;
  out.crop = {img.height, img.width, ph != img.height || pw != img.width};
  if (!out.crop.padded) {
    out.image = img;
    out.mask = mask;
    return out;
  }
  out.image = ImageF(img.channels, ph, pw);
  for (int64_t c = 0; c < img.channels; ++c)
    for (int64_t y = 0; y < ph; ++y) {
      const int64_t sy = maskdetail::reflect_index(y, img.height);
      for (int64_t x = 0; x < pw; ++x)
        out.image.at(c, y, x) = img.at(c, sy, maskdetail::reflect_index(x, img.width));
    }
  out.mask = BinaryMask(ph, pw, 0);
  for (int64_t y = 0; y < mask.height; ++y)
    for (int64_t x = 0; x < mask.width; ++x) out.mask.at(y, x) = mask.at(y, x);
  return out;
}

inline ImageF crop_to_original(const ImageF& img, const CropRecord& crop) {
  if (!crop.padded) return img;
  ImageF out(img.channels, crop.orig_h, crop.orig_w);
  for (int64_t c = 0; c < img.channels; ++c)
    for (int64_t y = 0; y < crop.orig_h; ++y)
      for (int64_t x = 0; x < crop.orig_w; ++x) out.at(c, y, x) = img.at(c, y, x);
  return out;
}

}  // namespace mat
