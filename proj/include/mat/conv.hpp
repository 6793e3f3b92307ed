#pragma once

#include "mat/tensor.hpp"

// 2-D convolution (cross-correlation, zero padding) plus its two adjoint maps
// as first-class differentiable primitives. The three ops form a closed set
// under vector-Jacobian products:
//
//   conv2d            : x,[w]      VJPs -> conv2d_input_grad, conv2d_weight_grad
//   conv2d_input_grad : g,[w]      VJPs -> conv2d,            conv2d_weight_grad
//   conv2d_weight_grad: x,[g]      VJPs -> conv2d_input_grad, conv2d
//
// so arbitrarily nested backward passes (R1 gradient penalty) stay exact.

namespace mat {

namespace convdetail {

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// reused per-thread workspaces for the im2col buffers (fully overwritten by
// every producer, so stale contents never leak)
template <typename T>
std::vector<T>& scratch(int slot, size_t n) {
  thread_local std::array<std::vector<T>, 3> bufs;
  auto& v = bufs[static_cast<size_t>(slot)];
  if (v.size() < n) v.resize(n);
  return v;
}

// col[cin*kh*kw, oh*ow] from x[cin, h, w]
template <typename T>
void im2col(const T* x, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t oh, int64_t ow, T* col) {
  const int64_t rows = cin * kh * kw;
#pragma omp parallel for if (rows * oh * ow > 16384)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t c = r / (kh * kw);
    const int64_t ki = (r / kw) % kh;
    const int64_t kj = r % kw;
    T* dst = col + r * oh * ow;
    const T* src = x + c * h * w;
    for (int64_t oi = 0; oi < oh; ++oi) {
      const int64_t ii = oi * stride - pad + ki;
      if (ii < 0 || ii >= h) {
        for (int64_t oj = 0; oj < ow; ++oj) dst[oi * ow + oj] = T(0);
        continue;
      }
      for (int64_t oj = 0; oj < ow; ++oj) {
        const int64_t jj = oj * stride - pad + kj;
        dst[oi * ow + oj] = (jj >= 0 && jj < w) ? src[ii * w + jj] : T(0);
      }
    }
  }
}

// colT[oh*ow, cin*kh*kw] from x[cin, h, w] (transposed im2col layout)
template <typename T>
void im2colT(const T* x, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
             int64_t pad, int64_t oh, int64_t ow, T* colt) {
  const int64_t krows = cin * kh * kw;
  const int64_t pixels = oh * ow;
#pragma omp parallel for if (pixels * krows > 16384)
  for (int64_t px = 0; px < pixels; ++px) {
    const int64_t oi = px / ow, oj = px % ow;
    T* dst = colt + px * krows;
    int64_t r = 0;
    for (int64_t c = 0; c < cin; ++c) {
      const T* src = x + c * h * w;
      for (int64_t ki = 0; ki < kh; ++ki) {
        const int64_t ii = oi * stride - pad + ki;
        if (ii < 0 || ii >= h) {
          for (int64_t kj = 0; kj < kw; ++kj) dst[r++] = T(0);
          continue;
        }
        for (int64_t kj = 0; kj < kw; ++kj) {
          const int64_t jj = oj * stride - pad + kj;
          dst[r++] = (jj >= 0 && jj < w) ? src[ii * w + jj] : T(0);
        }
      }
    }
  }
}

// accumulate col[cin*kh*kw, oh*ow] back into x[cin, h, w] (+=)
template <typename T>
void col2im_acc(const T* col, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* x) {
  const int64_t rows = cin * kh * kw;
  for (int64_t r = 0; r < rows; ++r) {  // sequential: overlapping scatter
    const int64_t c = r / (kh * kw);
    const int64_t ki = (r / kw) % kh;
    const int64_t kj = r % kw;
    const T* src = col + r * oh * ow;
    T* dst = x + c * h * w;
    for (int64_t oi = 0; oi < oh; ++oi) {
      const int64_t ii = oi * stride - pad + ki;
      if (ii < 0 || ii >= h) continue;
      for (int64_t oj = 0; oj < ow; ++oj) {
        const int64_t jj = oj * stride - pad + kj;
        if (jj >= 0 && jj < w) dst[ii * w + jj] += src[oi * ow + oj];
      }
    }
  }
}

// C[m,n] = A[m,k] * B[k,n] (row-major), optionally accumulating. Tiled over
// the n axis so each thread keeps a B strip cache-resident; threads own
// disjoint C columns, so results are bit-reproducible regardless of the
// thread count.
template <typename T>
void gemm(int64_t m, int64_t k, int64_t n, const T* a, const T* b, T* c, bool accumulate) {
  constexpr int64_t kTile = 1024;
  const int64_t tiles = (n + kTile - 1) / kTile;
#pragma omp parallel for if (tiles > 1)
  for (int64_t t = 0; t < tiles; ++t) {
    const int64_t n0 = t * kTile;
    const int64_t nb = std::min(kTile, n - n0);
    for (int64_t i = 0; i < m; ++i) {
      T* crow = c + i * n + n0;
      if (!accumulate)
        for (int64_t j = 0; j < nb; ++j) crow[j] = T(0);
      const T* arow = a + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const T s = arow[kk];
        const T* brow = b + kk * n + n0;
        for (int64_t j = 0; j < nb; ++j) crow[j] += s * brow[j];
      }
    }
  }
}

// C[m,p] += A[m,n] * Bt[n,p]  with B supplied already transposed; the inner
// loop runs contiguously over p (no scalar reductions, vectorizes cleanly).
// Four C rows advance together so each Bt row is loaded once per quad.
template <typename T>
void gemm_abt_acc(int64_t m, int64_t n, int64_t p, const T* a, const T* bt, T* c) {
  const int64_t quads = (m + 3) / 4;
#pragma omp parallel for if (quads > 1)
  for (int64_t q = 0; q < quads; ++q) {
    const int64_t i0 = q * 4;
    const int64_t rows = std::min<int64_t>(4, m - i0);
    if (rows == 4) {
      T* c0 = c + (i0 + 0) * p;
      T* c1 = c + (i0 + 1) * p;
      T* c2 = c + (i0 + 2) * p;
      T* c3 = c + (i0 + 3) * p;
      const T* a0 = a + (i0 + 0) * n;
      const T* a1 = a + (i0 + 1) * n;
      const T* a2 = a + (i0 + 2) * n;
      const T* a3 = a + (i0 + 3) * n;
      for (int64_t t = 0; t < n; ++t) {
        const T* brow = bt + t * p;
        const T s0 = a0[t], s1 = a1[t], s2 = a2[t], s3 = a3[t];
        for (int64_t j = 0; j < p; ++j) {
          const T bv = brow[j];
          c0[j] += s0 * bv;
          c1[j] += s1 * bv;
          c2[j] += s2 * bv;
          c3[j] += s3 * bv;
        }
      }
    } else {
      for (int64_t i = i0; i < i0 + rows; ++i) {
        T* crow = c + i * p;
        const T* arow = a + i * n;
        for (int64_t t = 0; t < n; ++t) {
          const T s = arow[t];
          const T* brow = bt + t * p;
          for (int64_t j = 0; j < p; ++j) crow[j] += s * brow[j];
        }
      }
    }
  }
}

template <typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, const char* op) {
  check(x.ndim() == 4, std::string(op) + ": input must be [b,c,h,w], got " + shape_str(x.shape()));
  check(w.ndim() == 4, std::string(op) + ": weight must be [co,ci,kh,kw], got " + shape_str(w.shape()));
  check(stride == 1 || stride == 2, std::string(op) + ": stride must be 1 or 2");
}

}  // namespace convdetail

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, int64_t stride, int64_t pad,
                            int64_t in_h, int64_t in_w);
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, int64_t stride, int64_t pad,
                             int64_t kh, int64_t kw);

// y[b,co,oh,ow] = cross_correlation(x, w) + bias; bias optional (pass empty)
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int64_t stride,
                 int64_t pad) {
  using namespace convdetail;
  check_conv_args(x, w, stride, "conv2d");
  const int64_t b = x.dim(0), cin = x.dim(1), h = x.dim(2), wi = x.dim(3);
  const int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == cin, "conv2d: channel mismatch, input " + shape_str(x.shape()) +
                             " vs weight " + shape_str(w.shape()));
  if (bias.defined())
    check(bias.ndim() == 1 && bias.dim(0) == cout,
          "conv2d: bias shape " + shape_str(bias.shape()) + " for cout " + std::to_string(cout));
  const int64_t oh = conv_out_extent(h, kh, stride, pad);
  const int64_t ow = conv_out_extent(wi, kw, stride, pad);
  check(oh >= 1 && ow >= 1, "conv2d: kernel larger than padded input");

  const int64_t krows = cin * kh * kw;
  std::vector<T>& col = scratch<T>(0, static_cast<size_t>(krows * oh * ow));
  std::vector<T> out(static_cast<size_t>(b * cout * oh * ow));
  for (int64_t bi = 0; bi < b; ++bi) {
    im2col(x.vec().data() + bi * cin * h * wi, cin, h, wi, kh, kw, stride, pad, oh, ow, col.data());
    gemm(cout, krows, oh * ow, w.vec().data(), col.data(), out.data() + bi * cout * oh * ow,
         false);
  }
  if (bias.defined()) {
    const T* bv = bias.vec().data();
    const int64_t plane = oh * ow;
#pragma omp parallel for if (b * cout > 1)
    for (int64_t i = 0; i < b * cout; ++i) {
      T* dst = out.data() + i * plane;
      const T bv_i = bv[i % cout];
      for (int64_t j = 0; j < plane; ++j) dst[j] += bv_i;
    }
  }
  auto bwd = [stride, pad, h, wi, kh, kw](const Tensor<T>& self, const Tensor<T>& g) {
    const auto& ps = self.node()->parents;
    std::vector<Tensor<T>> grads;
    grads.push_back(conv2d_input_grad(g, ps[1], stride, pad, h, wi));
    grads.push_back(conv2d_weight_grad(ps[0], g, stride, pad, kh, kw));
    if (ps.size() == 3) grads.push_back(sum(g, {0, 2, 3}, false));
    return grads;
  };
  std::vector<Tensor<T>> parents = {x, w};
  if (bias.defined()) parents.push_back(bias);
  return Tensor<T>::make_op(Shape{b, cout, oh, ow}, std::move(out), std::move(parents), bwd);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad) {
  return conv2d(x, w, Tensor<T>(), stride, pad);
}

// adjoint of conv2d in its input: maps g[b,co,oh,ow] back to [b,ci,in_h,in_w]
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, int64_t stride, int64_t pad,
                            int64_t in_h, int64_t in_w) {
  using namespace convdetail;
  check_conv_args(g, w, stride, "conv2d_input_grad");
  const int64_t b = g.dim(0), cout = g.dim(1), oh = g.dim(2), ow = g.dim(3);
  const int64_t cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(0) == cout, "conv2d_input_grad: channel mismatch " + shape_str(g.shape()) + " vs " +
                              shape_str(w.shape()));
  check(conv_out_extent(in_h, kh, stride, pad) == oh && conv_out_extent(in_w, kw, stride, pad) == ow,
        "conv2d_input_grad: output extent does not match input geometry");

  const int64_t krows = cin * kh * kw;
  // wmat^T[krows, cout] from w[cout, cin, kh, kw]
  std::vector<T>& wt = scratch<T>(1, static_cast<size_t>(krows * cout));
  const T* wv = w.vec().data();
  for (int64_t o = 0; o < cout; ++o)
    for (int64_t r = 0; r < krows; ++r) wt[static_cast<size_t>(r * cout + o)] = wv[o * krows + r];
  std::vector<T>& colg = scratch<T>(0, static_cast<size_t>(krows * oh * ow));
  std::vector<T> out(static_cast<size_t>(b * cin * in_h * in_w), T(0));
  for (int64_t bi = 0; bi < b; ++bi) {
    gemm(krows, cout, oh * ow, wt.data(), g.vec().data() + bi * cout * oh * ow, colg.data(), false);
    col2im_acc(colg.data(), cin, in_h, in_w, kh, kw, stride, pad, oh, ow,
               out.data() + bi * cin * in_h * in_w);
  }
  auto bwd = [stride, pad, kh, kw](const Tensor<T>& self, const Tensor<T>& gg) {
    const auto& ps = self.node()->parents;
    Tensor<T> d_g = conv2d(gg, ps[1], stride, pad);
    Tensor<T> d_w = conv2d_weight_grad(gg, ps[0], stride, pad, kh, kw);
    return std::vector<Tensor<T>>{d_g, d_w};
  };
  return Tensor<T>::make_op(Shape{b, cin, in_h, in_w}, std::move(out), {g, w}, bwd);
}

// adjoint of conv2d in its weight: correlates x[b,ci,h,w] with g[b,co,oh,ow]
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, int64_t stride, int64_t pad,
                             int64_t kh, int64_t kw) {
  using namespace convdetail;
  check(x.ndim() == 4 && g.ndim() == 4, "conv2d_weight_grad: rank-4 inputs required");
  const int64_t b = x.dim(0), cin = x.dim(1), h = x.dim(2), wi = x.dim(3);
  const int64_t cout = g.dim(1), oh = g.dim(2), ow = g.dim(3);
  check(g.dim(0) == b, "conv2d_weight_grad: batch mismatch");
  check(conv_out_extent(h, kh, stride, pad) == oh && conv_out_extent(wi, kw, stride, pad) == ow,
        "conv2d_weight_grad: geometry mismatch");

  const int64_t krows = cin * kh * kw;
  std::vector<T>& colt = scratch<T>(2, static_cast<size_t>(oh * ow * krows));
  std::vector<T> out(static_cast<size_t>(cout * krows), T(0));
  for (int64_t bi = 0; bi < b; ++bi) {
    im2colT(x.vec().data() + bi * cin * h * wi, cin, h, wi, kh, kw, stride, pad, oh, ow,
            colt.data());
    gemm_abt_acc(cout, oh * ow, krows, g.vec().data() + bi * cout * oh * ow, colt.data(),
                 out.data());
  }
  auto bwd = [stride, pad, h, wi](const Tensor<T>& self, const Tensor<T>& gr) {
    const auto& ps = self.node()->parents;
    Tensor<T> d_x = conv2d_input_grad(ps[1], gr, stride, pad, h, wi);
    Tensor<T> d_g = conv2d(ps[0], gr, stride, pad);
    return std::vector<Tensor<T>>{d_x, d_g};
  };
  return Tensor<T>::make_op(Shape{cout, cin, kh, kw}, std::move(out), {x, g}, bwd);
}

// Transposed convolution: exact inverse of conv2d's shape map. Weight layout
// is [c_in, c_out, kh, kw]. out = (in-1)*stride + k - 2*pad + out_pad, with
// out_pad defaulting to stride-1 so even extents round-trip under stride 2.
template <typename T>
Tensor<T> conv2d_transposed(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad,
                            int64_t out_pad = -1) {
  if (out_pad < 0) out_pad = stride - 1;
  check(x.ndim() == 4 && w.ndim() == 4, "conv2d_transposed: rank-4 inputs required");
  check(x.dim(1) == w.dim(0), "conv2d_transposed: channel mismatch " + shape_str(x.shape()) +
                                  " vs weight " + shape_str(w.shape()));
  const int64_t oh = (x.dim(2) - 1) * stride + w.dim(2) - 2 * pad + out_pad;
  const int64_t ow = (x.dim(3) - 1) * stride + w.dim(3) - 2 * pad + out_pad;
  check(oh >= 1 && ow >= 1, "conv2d_transposed: empty output");
  return conv2d_input_grad(x, w, stride, pad, oh, ow);
}

// ---------------------------------------------------------------------------
// resampling

// nearest-neighbor x2, as a gather (closed composite)
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  check(x.ndim() == 4, "upsample_nearest2x: input must be [b,c,h,w]");
  std::vector<int64_t> ih(static_cast<size_t>(2 * x.dim(2)));
  for (size_t i = 0; i < ih.size(); ++i) ih[i] = static_cast<int64_t>(i / 2);
  std::vector<int64_t> iw(static_cast<size_t>(2 * x.dim(3)));
  for (size_t i = 0; i < iw.size(); ++i) iw[i] = static_cast<int64_t>(i / 2);
  return index_select(index_select(x, 2, ih), 3, iw);
}

template <typename T>
Tensor<T> bilinear_adjoint(const Tensor<T>& g, int64_t in_h, int64_t in_w);

namespace convdetail {
// half-pixel sample positions for out extent -> (i0, i1, weight of i1)
template <typename T>
void bilinear_taps(int64_t out, int64_t in, std::vector<int64_t>& i0, std::vector<int64_t>& i1,
                   std::vector<T>& w1) {
  i0.resize(static_cast<size_t>(out));
  i1.resize(static_cast<size_t>(out));
  w1.resize(static_cast<size_t>(out));
  const double s = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * s - 0.5;
    src = std::max(0.0, std::min(src, static_cast<double>(in - 1)));
    int64_t lo = static_cast<int64_t>(src);
    lo = std::min(lo, in - 1);
    int64_t hi = std::min(lo + 1, in - 1);
    i0[static_cast<size_t>(o)] = lo;
    i1[static_cast<size_t>(o)] = hi;
    w1[static_cast<size_t>(o)] = static_cast<T>(src - static_cast<double>(lo));
  }
}
}  // namespace convdetail

// bilinear resize (half-pixel centers); linear map paired with its adjoint
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  using namespace convdetail;
  check(x.ndim() == 4, "upsample_bilinear: input must be [b,c,h,w]");
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<int64_t> hi0, hi1, wi0, wi1;
  std::vector<T> hw1, ww1;
  bilinear_taps<T>(out_h, h, hi0, hi1, hw1);
  bilinear_taps<T>(out_w, w, wi0, wi1, ww1);
  std::vector<T> out(static_cast<size_t>(b * c * out_h * out_w));
  const T* xv = x.vec().data();
  const int64_t planes = b * c;
#pragma omp parallel for if (planes > 1)
  for (int64_t pcb = 0; pcb < planes; ++pcb) {
    const T* src = xv + pcb * h * w;
    T* dst = out.data() + pcb * out_h * out_w;
    for (int64_t oi = 0; oi < out_h; ++oi) {
      const T fy = hw1[static_cast<size_t>(oi)];
      const int64_t y0 = hi0[static_cast<size_t>(oi)], y1 = hi1[static_cast<size_t>(oi)];
      for (int64_t oj = 0; oj < out_w; ++oj) {
        const T fx = ww1[static_cast<size_t>(oj)];
        const int64_t x0 = wi0[static_cast<size_t>(oj)], x1 = wi1[static_cast<size_t>(oj)];
        const T v00 = src[y0 * w + x0], v01 = src[y0 * w + x1];
        const T v10 = src[y1 * w + x0], v11 = src[y1 * w + x1];
        dst[oi * out_w + oj] = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) +
                               fy * ((T(1) - fx) * v10 + fx * v11);
      }
    }
  }
  auto bwd = [h, w](const Tensor<T>&, const Tensor<T>& g) {
    return std::vector<Tensor<T>>{bilinear_adjoint(g, h, w)};
  };
  return Tensor<T>::make_op(Shape{b, c, out_h, out_w}, std::move(out), {x}, bwd);
}

template <typename T>
Tensor<T> bilinear_adjoint(const Tensor<T>& g, int64_t in_h, int64_t in_w) {
  using namespace convdetail;
  check(g.ndim() == 4, "bilinear_adjoint: input must be [b,c,h,w]");
  const int64_t b = g.dim(0), c = g.dim(1), oh = g.dim(2), ow = g.dim(3);
  std::vector<int64_t> hi0, hi1, wi0, wi1;
  std::vector<T> hw1, ww1;
  bilinear_taps<T>(oh, in_h, hi0, hi1, hw1);
  bilinear_taps<T>(ow, in_w, wi0, wi1, ww1);
  std::vector<T> out(static_cast<size_t>(b * c * in_h * in_w), T(0));
  const T* gv = g.vec().data();
  const int64_t planes = b * c;
#pragma omp parallel for if (planes > 1)
  for (int64_t pcb = 0; pcb < planes; ++pcb) {
    const T* src = gv + pcb * oh * ow;
    T* dst = out.data() + pcb * in_h * in_w;
    for (int64_t oi = 0; oi < oh; ++oi) {
      const T fy = hw1[static_cast<size_t>(oi)];
      const int64_t y0 = hi0[static_cast<size_t>(oi)], y1 = hi1[static_cast<size_t>(oi)];
      for (int64_t oj = 0; oj < ow; ++oj) {
        const T fx = ww1[static_cast<size_t>(oj)];
        const int64_t x0 = wi0[static_cast<size_t>(oj)], x1 = wi1[static_cast<size_t>(oj)];
        const T gv_ = src[oi * ow + oj];
        dst[y0 * in_w + x0] += (T(1) - fy) * (T(1) - fx) * gv_;
        dst[y0 * in_w + x1] += (T(1) - fy) * fx * gv_;
        dst[y1 * in_w + x0] += fy * (T(1) - fx) * gv_;
        dst[y1 * in_w + x1] += fy * fx * gv_;
      }
    }
  }
  auto bwd = [oh, ow](const Tensor<T>&, const Tensor<T>& gg) {
    return std::vector<Tensor<T>>{upsample_bilinear(gg, oh, ow)};
  };
  return Tensor<T>::make_op(Shape{b, c, in_h, in_w}, std::move(out), {g}, bwd);
}

}  // namespace mat
