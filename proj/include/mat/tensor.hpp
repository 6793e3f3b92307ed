#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "mat/common.hpp"

// Dense row-major tensors with reverse-mode autodiff.
//
// Every differentiable primitive implements its backward pass *in terms of
// other primitives*, so the op set is closed under vector-Jacobian products.
// backward(create_graph=true) therefore yields gradients that are themselves
// differentiable, which is what the R1 gradient penalty needs.

namespace mat {

namespace detail {
inline bool& recording_flag() {
  thread_local bool rec = true;
  return rec;
}
}  // namespace detail

inline bool recording_enabled() { return detail::recording_flag(); }

// Scoped guard disabling graph recording (inference / plain-value math).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::recording_flag()) { detail::recording_flag() = false; }
  ~NoGradGuard() { detail::recording_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class RecordingGuard {
 public:
  explicit RecordingGuard(bool on) : prev_(detail::recording_flag()) {
    detail::recording_flag() = on;
  }
  ~RecordingGuard() { detail::recording_flag() = prev_; }
  RecordingGuard(const RecordingGuard&) = delete;
  RecordingGuard& operator=(const RecordingGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
class Tensor;

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  bool is_leaf = true;
  Tensor<T> grad;  // empty until backward reaches this leaf
  std::vector<Tensor<T>> parents;
  // (self, grad_out) -> grads aligned with parents (empty Tensor = no flow)
  std::function<std::vector<Tensor<T>>(const Tensor<T>&, const Tensor<T>&)> backward_fn;
};

template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor zeros(const Shape& s) { return Tensor(s, std::vector<T>(numel_of(s), T(0))); }
  static Tensor ones(const Shape& s) { return Tensor(s, std::vector<T>(numel_of(s), T(1))); }
  static Tensor full(const Shape& s, T v) { return Tensor(s, std::vector<T>(numel_of(s), v)); }

  static Tensor from(const Shape& s, std::vector<T> values) {
    check(static_cast<int64_t>(values.size()) == numel_of(s),
          "Tensor::from: " + std::to_string(values.size()) + " values for shape " + shape_str(s));
    return Tensor(s, std::move(values));
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  static Tensor randn(const Shape& s, Rng& rng) {
    std::vector<T> v(numel_of(s));
    for (auto& x : v) x = static_cast<T>(rng.normal());
    return Tensor(s, std::move(v));
  }

  static Tensor uniform(const Shape& s, Rng& rng, T lo, T hi) {
    std::vector<T> v(numel_of(s));
    for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
    return Tensor(s, std::move(v));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

  std::span<T> data() { return std::span<T>(node_->data); }
  std::span<const T> data() const { return std::span<const T>(node_->data); }
  const std::vector<T>& vec() const { return node_->data; }

  T item() const {
    check(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
    return node_->data[0];
  }

  Tensor& set_requires_grad(bool v) {
    check(node_->is_leaf, "set_requires_grad: only leaf tensors");
    node_->requires_grad = v;
    return *this;
  }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  // Absent grad on a requires_grad leaf after backward means the loss did not
  // depend on it (gradient identically zero).
  Tensor grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  // Value copy detached from the graph.
  Tensor detach() const {
    Tensor t(node_->shape, node_->data);
    return t;
  }

  void backward(bool create_graph = false);

  TensorNode<T>* node() const { return node_.get(); }

  // Internal: construct an op result. parents recorded iff recording is on
  // and some parent requires grad; otherwise the node is a plain value.
  static Tensor make_op(
      Shape shape, std::vector<T> data, std::vector<Tensor> parents,
      std::function<std::vector<Tensor>(const Tensor&, const Tensor&)> backward_fn) {
    Tensor t(std::move(shape), std::move(data));
    bool track = recording_enabled() &&
                 std::any_of(parents.begin(), parents.end(),
                             [](const Tensor& p) { return p.defined() && p.requires_grad(); });
    if (track) {
      t.node_->is_leaf = false;
      t.node_->requires_grad = true;
      t.node_->parents = std::move(parents);
      t.node_->backward_fn = std::move(backward_fn);
    }
    return t;
  }

 private:
  Tensor(Shape s, std::vector<T> d) : node_(std::make_shared<TensorNode<T>>()) {
    node_->shape = std::move(s);
    node_->data = std::move(d);
  }

  std::shared_ptr<TensorNode<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// ---------------------------------------------------------------------------
// shape helpers

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

inline int normalize_axis(int axis, int ndim) {
  if (axis < 0) axis += ndim;
  check(axis >= 0 && axis < ndim, "axis " + std::to_string(axis) + " out of range for ndim " +
                                      std::to_string(ndim));
  return axis;
}

// numpy-style broadcast of two shapes
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
  size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (size_t i = 0; i < n; ++i) {
    int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    check(da == db || da == 1 || db == 1,
          "broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise primitives

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_op(const Tensor<T>& x, FwdFn fwd, BwdFn make_grads) {
  const auto& xv = x.vec();
  std::vector<T> out(xv.size());
  const int64_t n = static_cast<int64_t>(xv.size());
#pragma omp parallel for if (n > 16384)
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = fwd(xv[static_cast<size_t>(i)]);
  return Tensor<T>::make_op(x.shape(), std::move(out), {x}, make_grads);
}

}  // namespace detail

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& s);
template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& s);
template <typename T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<int>& axes, bool keepdim = false);
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> neg(const Tensor<T>& x);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

// broadcasting binary op: both operands expanded to the common shape first,
// so the gradient reduction over broadcast axes is handled by expand's VJP.
template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_broadcast_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, FwdFn fwd,
                              BwdFn make_grads) {
  Tensor<T> ax = a, bx = b;
  if (a.shape() != b.shape()) {
    Shape s = broadcast_shapes(a.shape(), b.shape());
    ax = expand(a, s);
    bx = expand(b, s);
  }
  const auto& av = ax.vec();
  const auto& bv = bx.vec();
  std::vector<T> out(av.size());
  const int64_t n = static_cast<int64_t>(av.size());
#pragma omp parallel for if (n > 16384)
  for (int64_t i = 0; i < n; ++i) {
    size_t k = static_cast<size_t>(i);
    out[k] = fwd(av[k], bv[k]);
  }
  (void)name;
  return Tensor<T>::make_op(ax.shape(), std::move(out), {ax, bx}, make_grads);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast_op(
      a, b, "add", [](T x, T y) { return x + y; },
      [](const Tensor<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{g, g}; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast_op(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](const Tensor<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{g, neg(g)}; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast_op(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        const auto& ps = self.node()->parents;
        return std::vector<Tensor<T>>{mul(g, ps[1]), mul(g, ps[0])};
      });
}

template <typename T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_broadcast_op(
      a, b, "div", [](T x, T y) { return x / y; },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        const auto& ps = self.node()->parents;
        Tensor<T> ga = divide(g, ps[1]);
        Tensor<T> gb = neg(mul(g, divide(self, ps[1])));
        return std::vector<Tensor<T>>{ga, gb};
      });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return -v; },
      [](const Tensor<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{neg(g)}; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary_op(
      x, [s](T v) { return v * s; },
      [s](const Tensor<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{scale(g, s)}; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v + c; },
      [](const Tensor<T>&, const Tensor<T>& g) { return std::vector<Tensor<T>>{g}; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::exp(v); },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, self)};
      });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::log(v); },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{divide(g, self.node()->parents[0])};
      });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::sqrt(v); },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{divide(g, scale(self, T(2)))};
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::tanh(v); },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        // g * (1 - out^2)
        return std::vector<Tensor<T>>{mul(g, add_scalar(neg(mul(self, self)), T(1)))};
      });
}

template <typename T>
Tensor<T> erf(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::erf(v); },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        const Tensor<T>& a = self.node()->parents[0];
        const T c = static_cast<T>(2.0 / std::sqrt(3.14159265358979323846));
        return std::vector<Tensor<T>>{mul(g, scale(exp(neg(mul(a, a))), c))};
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op(
      x,
      [](T v) {
        return v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                         : std::exp(v) / (T(1) + std::exp(v));
      },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, mul(self, add_scalar(neg(self), T(1))))};
      });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary_op(
      x,
      [](T v) {
        // max(v,0) + log1p(exp(-|v|))
        return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
      },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        return std::vector<Tensor<T>>{mul(g, sigmoid(self.node()->parents[0]))};
      });
}

// Derivative factor is piecewise constant, so it enters the VJP as a
// non-differentiable mask (second-order term is zero a.e.). Branchless
// max/min form keeps the kernel vectorizable.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return detail::unary_op(
      x, [slope](T v) { return std::max(v, T(0)) + slope * std::min(v, T(0)); },
      [slope](const Tensor<T>& self, const Tensor<T>& g) {
        const Tensor<T>& a = self.node()->parents[0];
        std::vector<T> m(a.vec().size());
        const T* av = a.vec().data();
        const int64_t n = static_cast<int64_t>(m.size());
#pragma omp parallel for if (n > 16384)
        for (int64_t i = 0; i < n; ++i)
          m[static_cast<size_t>(i)] =
              slope + (T(1) - slope) * static_cast<T>(av[static_cast<size_t>(i)] >= T(0));
        Tensor<T> mask = Tensor<T>::from(a.shape(), std::move(m));
        return std::vector<Tensor<T>>{mul(g, mask)};
      });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::abs(v); },
      [](const Tensor<T>& self, const Tensor<T>& g) {
        const Tensor<T>& a = self.node()->parents[0];
        std::vector<T> m(a.vec().size());
        for (size_t i = 0; i < m.size(); ++i)
          m[i] = a.vec()[i] > T(0) ? T(1) : (a.vec()[i] < T(0) ? T(-1) : T(0));
        Tensor<T> mask = Tensor<T>::from(a.shape(), std::move(m));
        return std::vector<Tensor<T>>{mul(g, mask)};
      });
}

// exact GELU as a composite: 0.5 x (1 + erf(x/sqrt(2)))
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = static_cast<T>(0.7071067811865475244);
  return scale(mul(x, add_scalar(erf(scale(x, inv_sqrt2)), T(1))), T(0.5));
}

// operator sugar
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return divide(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return scale(a, s); }
template <typename T>
Tensor<T> operator*(T s, const Tensor<T>& a) { return scale(a, s); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& s) {
  Shape target = s;
  int64_t known = 1, infer = -1;
  for (size_t i = 0; i < target.size(); ++i) {
    if (target[i] == -1) {
      check(infer == -1, "reshape: at most one -1 dim");
      infer = static_cast<int64_t>(i);
    } else {
      known *= target[i];
    }
  }
  if (infer >= 0) target[static_cast<size_t>(infer)] = x.numel() / known;
  check(numel_of(target) == x.numel(), "reshape: cannot view " + shape_str(x.shape()) + " as " +
                                           shape_str(s));
  Shape orig = x.shape();
  return Tensor<T>::make_op(target, std::vector<T>(x.vec()), {x},
                            [orig](const Tensor<T>&, const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{reshape(g, orig)};
                            });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  return reshape(x, Shape{x.numel()});
}

namespace detail {
inline std::vector<int64_t> row_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}
}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
  const int nd = x.ndim();
  check(static_cast<int>(axes.size()) == nd, "permute: axes size mismatch");
  Shape out_shape(static_cast<size_t>(nd));
  for (int i = 0; i < nd; ++i) out_shape[static_cast<size_t>(i)] = x.dim(axes[static_cast<size_t>(i)]);
  auto in_strides = detail::row_strides(x.shape());
  auto out_strides = detail::row_strides(out_shape);
  std::vector<T> out(static_cast<size_t>(x.numel()));
  const auto& xv = x.vec();
  const int64_t n = x.numel();
#pragma omp parallel for if (n > 16384)
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (int d = 0; d < nd; ++d) {
      int64_t c = rem / out_strides[static_cast<size_t>(d)];
      rem -= c * out_strides[static_cast<size_t>(d)];
      src += c * in_strides[static_cast<size_t>(axes[static_cast<size_t>(d)])];
    }
    out[static_cast<size_t>(o)] = xv[static_cast<size_t>(src)];
  }
  std::vector<int> inv(axes.size());
  for (int i = 0; i < nd; ++i) inv[static_cast<size_t>(axes[static_cast<size_t>(i)])] = i;
  return Tensor<T>::make_op(out_shape, std::move(out), {x},
                            [inv](const Tensor<T>&, const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{permute(g, inv)};
                            });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int a, int b) {
  std::vector<int> axes(static_cast<size_t>(x.ndim()));
  for (int i = 0; i < x.ndim(); ++i) axes[static_cast<size_t>(i)] = i;
  a = normalize_axis(a, x.ndim());
  b = normalize_axis(b, x.ndim());
  std::swap(axes[static_cast<size_t>(a)], axes[static_cast<size_t>(b)]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  return transpose(x, -2, -1);
}

// embed_slice: forward of "place x into zeros of a larger dim"; paired with
// slice below so the two are each other's VJP.
template <typename T>
Tensor<T> embed_slice(const Tensor<T>& x, int axis, int64_t start, int64_t full_len) {
  axis = normalize_axis(axis, x.ndim());
  Shape out_shape = x.shape();
  int64_t len = out_shape[static_cast<size_t>(axis)];
  check(start >= 0 && start + len <= full_len, "embed_slice: range out of bounds");
  out_shape[static_cast<size_t>(axis)] = full_len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  std::vector<T> out(static_cast<size_t>(numel_of(out_shape)), T(0));
  const auto& xv = x.vec();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + (o * full_len + start) * inner, xv.data() + o * len * inner,
                static_cast<size_t>(len * inner) * sizeof(T));
  return Tensor<T>::make_op(out_shape, std::move(out), {x},
                            [axis, start, len](const Tensor<T>&, const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{slice(g, axis, start, len)};
                            });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  axis = normalize_axis(axis, x.ndim());
  int64_t full = x.dim(axis);
  check(start >= 0 && len >= 0 && start + len <= full,
        "slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") out of bounds for dim " + std::to_string(full));
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  std::vector<T> out(static_cast<size_t>(numel_of(out_shape)));
  const auto& xv = x.vec();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner, xv.data() + (o * full + start) * inner,
                static_cast<size_t>(len * inner) * sizeof(T));
  return Tensor<T>::make_op(out_shape, std::move(out), {x},
                            [axis, start, full](const Tensor<T>&, const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{embed_slice(g, axis, start, full)};
                            });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  check(!xs.empty(), "concat: empty input list");
  axis = normalize_axis(axis, xs[0].ndim());
  Shape out_shape = xs[0].shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    check(x.ndim() == xs[0].ndim(), "concat: rank mismatch");
    for (int d = 0; d < x.ndim(); ++d)
      if (d != axis)
        check(x.dim(d) == xs[0].dim(d), "concat: shape mismatch " + shape_str(x.shape()) +
                                            " vs " + shape_str(xs[0].shape()));
    total += x.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= xs[0].dim(i);
  for (int i = axis + 1; i < xs[0].ndim(); ++i) inner *= xs[0].dim(i);
  std::vector<T> out(static_cast<size_t>(numel_of(out_shape)));
  int64_t offset = 0;
  for (const auto& x : xs) {
    int64_t len = x.dim(axis);
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * total + offset) * inner, x.vec().data() + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(T));
    offset += len;
  }
  std::vector<int64_t> lens;
  for (const auto& x : xs) lens.push_back(x.dim(axis));
  return Tensor<T>::make_op(out_shape, std::move(out), xs,
                            [axis, lens](const Tensor<T>&, const Tensor<T>& g) {
                              std::vector<Tensor<T>> grads;
                              int64_t off = 0;
                              for (int64_t len : lens) {
                                grads.push_back(slice(g, axis, off, len));
                                off += len;
                              }
                              return grads;
                            });
}

// repeat_axis and sum_axis_keepdim are each other's VJP; expand and sum are
// composites chaining them axis by axis, which keeps the inner loops
// contiguous (no per-element index arithmetic).

template <typename T>
Tensor<T> sum_axis_keepdim(const Tensor<T>& x, int axis);

// replicate a size-1 axis n times
template <typename T>
Tensor<T> repeat_axis(const Tensor<T>& x, int axis, int64_t n) {
  axis = normalize_axis(axis, x.ndim());
  check(x.dim(axis) == 1, "repeat_axis: axis extent must be 1, got " + shape_str(x.shape()));
  check(n >= 1, "repeat_axis: repeat count must be >= 1");
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = n;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  std::vector<T> out(static_cast<size_t>(outer * n * inner));
  const auto& xv = x.vec();
#pragma omp parallel for if (outer * n * inner > 16384)
  for (int64_t o = 0; o < outer; ++o) {
    const T* src = xv.data() + o * inner;
    T* dst = out.data() + o * n * inner;
    if (inner == 1) {
      const T v = src[0];
      for (int64_t r = 0; r < n; ++r) dst[r] = v;
    } else {
      for (int64_t r = 0; r < n; ++r)
        std::memcpy(dst + r * inner, src, static_cast<size_t>(inner) * sizeof(T));
    }
  }
  return Tensor<T>::make_op(out_shape, std::move(out), {x},
                            [axis](const Tensor<T>&, const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{sum_axis_keepdim(g, axis)};
                            });
}

template <typename T>
Tensor<T> sum_axis_keepdim(const Tensor<T>& x, int axis) {
  axis = normalize_axis(axis, x.ndim());
  const int64_t len = x.dim(axis);
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = 1;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  std::vector<T> out(static_cast<size_t>(outer * inner), T(0));
  const auto& xv = x.vec();
#pragma omp parallel for if (outer > 1 && outer * len * inner > 16384)
  for (int64_t o = 0; o < outer; ++o) {
    const T* src = xv.data() + o * len * inner;
    T* dst = out.data() + o * inner;
    if (inner == 1) {
      T acc = T(0);
      for (int64_t a = 0; a < len; ++a) acc += src[a];
      dst[0] = acc;
    } else {
      for (int64_t a = 0; a < len; ++a) {
        const T* row = src + a * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += row[i];
      }
    }
  }
  return Tensor<T>::make_op(out_shape, std::move(out), {x},
                            [axis, len](const Tensor<T>&, const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{repeat_axis(g, axis, len)};
                            });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  const int nd = static_cast<int>(target.size());
  const int xd = x.ndim();
  check(xd <= nd, "expand: cannot shrink rank " + shape_str(x.shape()) + " -> " + shape_str(target));
  Shape padded(static_cast<size_t>(nd), 1);
  for (int i = 0; i < xd; ++i) padded[static_cast<size_t>(nd - xd + i)] = x.dim(i);
  for (int i = 0; i < nd; ++i)
    check(padded[static_cast<size_t>(i)] == target[static_cast<size_t>(i)] ||
              padded[static_cast<size_t>(i)] == 1,
          "expand: " + shape_str(x.shape()) + " not broadcastable to " + shape_str(target));
  Tensor<T> cur = x.shape() == padded ? x : reshape(x, padded);
  for (int i = nd - 1; i >= 0; --i)
    if (padded[static_cast<size_t>(i)] != target[static_cast<size_t>(i)])
      cur = repeat_axis(cur, i, target[static_cast<size_t>(i)]);
  return cur;
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<int>& axes_in, bool keepdim) {
  const int nd = x.ndim();
  std::vector<bool> reduce(static_cast<size_t>(nd), false);
  if (axes_in.empty()) {
    reduce.assign(static_cast<size_t>(nd), true);
  } else {
    for (int a : axes_in) reduce[static_cast<size_t>(normalize_axis(a, nd))] = true;
  }
  Tensor<T> cur = x;
  for (int i = nd - 1; i >= 0; --i)
    if (reduce[static_cast<size_t>(i)] && x.dim(i) != 1) cur = sum_axis_keepdim(cur, i);
  if (keepdim) return cur;
  Shape squeezed;
  for (int i = 0; i < nd; ++i)
    if (!reduce[static_cast<size_t>(i)]) squeezed.push_back(x.dim(i));
  return reshape(cur, squeezed);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  return sum(x, {}, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, const std::vector<int>& axes = {}, bool keepdim = false) {
  Tensor<T> s = sum(x, axes, keepdim);
  T count = static_cast<T>(x.numel() / std::max<int64_t>(1, s.numel()));
  return scale(s, T(1) / count);
}

// ---------------------------------------------------------------------------
// index ops

template <typename T>
Tensor<T> index_add_into_zeros(const Tensor<T>& g, int axis, const std::vector<int64_t>& idx,
                               int64_t full_len);

// out dim(axis) = idx.size(); indices may repeat.
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, const std::vector<int64_t>& idx) {
  axis = normalize_axis(axis, x.ndim());
  const int64_t full = x.dim(axis);
  for (int64_t i : idx) check(i >= 0 && i < full, "index_select: index out of range");
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = static_cast<int64_t>(idx.size());
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  std::vector<T> out(static_cast<size_t>(numel_of(out_shape)));
  const auto& xv = x.vec();
  const int64_t m = static_cast<int64_t>(idx.size());
  const int64_t rows = outer * m;
  if (inner >= 8) {
#pragma omp parallel for if (rows * inner > 16384)
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t o = r / m, j = r % m;
      std::memcpy(out.data() + r * inner,
                  xv.data() + (o * full + idx[static_cast<size_t>(j)]) * inner,
                  static_cast<size_t>(inner) * sizeof(T));
    }
  } else {
    // tiny inner extents: plain gather beats per-element memcpy calls
#pragma omp parallel for if (rows * inner > 16384)
    for (int64_t o = 0; o < outer; ++o) {
      T* dst = out.data() + o * m * inner;
      const T* src = xv.data() + o * full * inner;
      for (int64_t j = 0; j < m; ++j)
        for (int64_t k = 0; k < inner; ++k)
          dst[j * inner + k] = src[idx[static_cast<size_t>(j)] * inner + k];
    }
  }
  return Tensor<T>::make_op(out_shape, std::move(out), {x},
                            [axis, idx, full](const Tensor<T>&, const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{
                                  index_add_into_zeros(g, axis, idx, full)};
                            });
}

template <typename T>
Tensor<T> index_add_into_zeros(const Tensor<T>& g, int axis, const std::vector<int64_t>& idx,
                               int64_t full_len) {
  axis = normalize_axis(axis, g.ndim());
  check(g.dim(axis) == static_cast<int64_t>(idx.size()), "index_add: index count mismatch");
  Shape out_shape = g.shape();
  out_shape[static_cast<size_t>(axis)] = full_len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= g.dim(i);
  for (int i = axis + 1; i < g.ndim(); ++i) inner *= g.dim(i);
  std::vector<T> out(static_cast<size_t>(numel_of(out_shape)), T(0));
  const auto& gv = g.vec();
  const int64_t m = static_cast<int64_t>(idx.size());
  // parallel over outer slices only: repeated indices scatter within a slice
#pragma omp parallel for if (outer > 1 && m * inner > 8192)
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < m; ++j) {
      T* dst = out.data() + (o * full_len + idx[static_cast<size_t>(j)]) * inner;
      const T* src = gv.data() + (o * m + j) * inner;
      for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
    }
  return Tensor<T>::make_op(out_shape, std::move(out), {g},
                            [axis, idx](const Tensor<T>&, const Tensor<T>& gg) {
                              return std::vector<Tensor<T>>{index_select(gg, axis, idx)};
                            });
}

// sum g down to `target` shape (inverse of broadcast); composite op
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  const int nd = g.ndim();
  const int td = static_cast<int>(target.size());
  std::vector<int> axes;
  for (int i = 0; i < nd - td; ++i) axes.push_back(i);
  for (int i = 0; i < td; ++i)
    if (target[static_cast<size_t>(i)] == 1 && g.dim(nd - td + i) != 1)
      axes.push_back(nd - td + i);
  Tensor<T> r = axes.empty() ? g : sum(g, axes, true);
  return reshape(r, target);
}

// ---------------------------------------------------------------------------
// matmul

// batched matmul on equal batch dims: [B...,m,k] x [B...,k,n] -> [B...,m,n]
template <typename T>
Tensor<T> bmm_equal(const Tensor<T>& a, const Tensor<T>& b) {
  const int nd = a.ndim();
  check(nd >= 2 && b.ndim() == nd, "matmul: rank mismatch " + shape_str(a.shape()) + " vs " +
                                       shape_str(b.shape()));
  for (int i = 0; i < nd - 2; ++i)
    check(a.dim(i) == b.dim(i), "matmul: batch mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  const int64_t m = a.dim(nd - 2), k = a.dim(nd - 1), n = b.dim(nd - 1);
  check(b.dim(nd - 2) == k, "matmul: inner dims disagree " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  int64_t batch = 1;
  for (int i = 0; i < nd - 2; ++i) batch *= a.dim(i);
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(nd - 1)] = n;
  std::vector<T> out(static_cast<size_t>(batch * m * n));
  const T* av = a.vec().data();
  const T* bv = b.vec().data();
  T* ov = out.data();
  const int64_t rows = batch * m;
#pragma omp parallel for if (rows > 1)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t bi = r / m, i = r % m;
    const T* arow = av + bi * m * k + i * k;
    const T* bmat = bv + bi * k * n;
    T* orow = ov + bi * m * n + i * n;
    for (int64_t j = 0; j < n; ++j) orow[j] = T(0);
    for (int64_t kk = 0; kk < k; ++kk) {
      const T s = arow[kk];
      const T* brow = bmat + kk * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  return Tensor<T>::make_op(out_shape, std::move(out), {a, b},
                            [](const Tensor<T>& self, const Tensor<T>& g) {
                              const auto& ps = self.node()->parents;
                              Tensor<T> ga = bmm_equal(g, transpose_last2(ps[1]));
                              Tensor<T> gb = bmm_equal(transpose_last2(ps[0]), g);
                              return std::vector<Tensor<T>>{ga, gb};
                            });
}

// general matmul with numpy-style batch broadcasting
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.ndim() >= 2 && b.ndim() >= 2, "matmul: operands must have rank >= 2, got " +
                                            shape_str(a.shape()) + " and " + shape_str(b.shape()));
  check(a.dim(a.ndim() - 1) == b.dim(b.ndim() - 2),
        "matmul: inner dims disagree " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch = broadcast_shapes(batch_a, batch_b);
  Shape sa = batch, sb = batch;
  sa.push_back(a.dim(a.ndim() - 2));
  sa.push_back(a.dim(a.ndim() - 1));
  sb.push_back(b.dim(b.ndim() - 2));
  sb.push_back(b.dim(b.ndim() - 1));
  return bmm_equal(expand(a, sa), expand(b, sb));
}

// ---------------------------------------------------------------------------
// softmax / misc composites

// per-row max over the last axis, detached (constant shift for stability)
template <typename T>
Tensor<T> rowmax_detached(const Tensor<T>& x) {
  const int64_t cols = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / cols;
  std::vector<T> out(static_cast<size_t>(rows));
  const auto& xv = x.vec();
  for (int64_t r = 0; r < rows; ++r) {
    T m = xv[static_cast<size_t>(r * cols)];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, xv[static_cast<size_t>(r * cols + j)]);
    out[static_cast<size_t>(r)] = m;
  }
  Shape s = x.shape();
  s[s.size() - 1] = 1;
  return Tensor<T>::from(s, std::move(out));
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  Tensor<T> shifted = sub(x, rowmax_detached(x));
  Tensor<T> e = exp(shifted);
  Tensor<T> denom = sum(e, {-1}, true);
  return divide(e, denom);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  axis = normalize_axis(axis, x.ndim());
  if (axis == x.ndim() - 1) return softmax_lastdim(x);
  Tensor<T> moved = transpose(x, axis, -1);
  return transpose(softmax_lastdim(moved), axis, -1);
}

// ---------------------------------------------------------------------------
// backward machinery

namespace detail {

template <typename T>
std::vector<Tensor<T>> topo_order(const Tensor<T>& root) {
  std::vector<Tensor<T>> order;
  std::unordered_set<TensorNode<T>*> seen;
  // iterative DFS (graphs from conv-heavy nets can be deep)
  std::vector<std::pair<Tensor<T>, size_t>> stack;
  if (!root.defined() || !root.requires_grad()) return order;
  stack.emplace_back(root, 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    const auto& parents = node.node()->parents;
    bool descended = false;
    while (next_child < parents.size()) {
      const Tensor<T>& p = parents[next_child++];
      if (p.defined() && p.requires_grad() && !seen.count(p.node())) {
        seen.insert(p.node());
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && next_child >= parents.size()) {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

template <typename T>
void run_backward(const Tensor<T>& root, const Tensor<T>& seed, bool create_graph,
                  std::unordered_map<TensorNode<T>*, Tensor<T>>* captured,
                  bool accumulate_into_leaves) {
  auto order = topo_order(root);
  std::unordered_map<TensorNode<T>*, Tensor<T>> grads;
  grads[root.node()] = seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Tensor<T>& t = *it;
    auto git = grads.find(t.node());
    if (git == grads.end()) continue;
    Tensor<T> g = git->second;
    if (captured && captured->count(t.node())) (*captured)[t.node()] = g;
    if (t.node()->backward_fn) {
      RecordingGuard rec(create_graph);
      std::vector<Tensor<T>> pgrads = t.node()->backward_fn(t, g);
      const auto& parents = t.node()->parents;
      check(pgrads.size() == parents.size(), "backward: VJP arity mismatch");
      for (size_t i = 0; i < parents.size(); ++i) {
        if (!pgrads[i].defined()) continue;
        if (!parents[i].defined() || !parents[i].requires_grad()) continue;
        auto pit = grads.find(parents[i].node());
        if (pit == grads.end()) {
          grads[parents[i].node()] = pgrads[i];
        } else {
          pit->second = add(pit->second, pgrads[i]);
        }
      }
      if (!create_graph) grads.erase(t.node());
    } else if (t.is_leaf() && t.requires_grad() && accumulate_into_leaves) {
      RecordingGuard rec(false);
      Tensor<T>& slot = t.node()->grad;
      slot = slot.defined() ? add(slot, g.detach()) : g.detach();
    }
  }
  // leaves captured above when requested
  if (captured) {
    for (auto& [node, slot] : *captured) {
      auto git = grads.find(node);
      if (git != grads.end()) slot = git->second;
    }
  }
}

}  // namespace detail

template <typename T>
void Tensor<T>::backward(bool create_graph) {
  check(numel() == 1, "backward: loss must be scalar, got shape " + shape_str(shape()));
  check(requires_grad(), "backward: tensor is not connected to any requires_grad leaf");
  Tensor<T> seed = Tensor<T>::ones(shape());
  detail::run_backward(*this, seed, create_graph,
                       static_cast<std::unordered_map<TensorNode<T>*, Tensor<T>>*>(nullptr),
                       /*accumulate_into_leaves=*/true);
}

namespace autograd {

// Gradients of a scalar output w.r.t. the given inputs, without touching
// .grad. With create_graph=true the results are differentiable.
// Disconnected inputs yield zeros.
template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, const std::vector<Tensor<T>>& inputs,
                            bool create_graph = false) {
  check(output.numel() == 1, "autograd::grad: output must be scalar");
  check(output.requires_grad(), "autograd::grad: output is not connected to the graph");
  std::unordered_map<TensorNode<T>*, Tensor<T>> captured;
  for (const auto& in : inputs) captured[in.node()] = Tensor<T>();
  Tensor<T> seed = Tensor<T>::ones(output.shape());
  detail::run_backward(output, seed, create_graph, &captured, /*accumulate_into_leaves=*/false);
  std::vector<Tensor<T>> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    Tensor<T> g = captured[in.node()];
    out.push_back(g.defined() ? g : Tensor<T>::zeros(in.shape()));
  }
  return out;
}

}  // namespace autograd

}  // namespace mat
