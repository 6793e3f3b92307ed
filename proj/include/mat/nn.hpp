#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mat/conv.hpp"
#include "mat/tensor.hpp"

namespace mat {

// Ordered named parameter registry. Order is construction order, which makes
// checkpoints and optimizer state layouts reproducible.
template <typename T>
struct NamedParams {
  std::vector<std::pair<std::string, Tensor<T>>> items;

  void add(const std::string& name, const Tensor<T>& t) { items.emplace_back(name, t); }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& [name, t] : items) n += t.numel();
    return n;
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }
};

// fan-in scaled unit normal, the StyleGAN2-family initialization
template <typename T>
Tensor<T> init_weight(const Shape& shape, int64_t fan_in, Rng& rng) {
  Tensor<T> w = Tensor<T>::randn(shape, rng);
  T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  for (auto& v : w.data()) v *= s;
  w.set_requires_grad(true);
  return w;
}

template <typename T>
Tensor<T> init_zeros(const Shape& shape) {
  Tensor<T> b = Tensor<T>::zeros(shape);
  b.set_requires_grad(true);
  return b;
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng)
      : weight(init_weight<T>({in, out}, in, rng)), bias(init_zeros<T>({out})) {}

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = matmul(x, weight);
    Shape bshape(static_cast<size_t>(y.ndim()), 1);
    bshape.back() = bias.dim(0);
    return add(y, reshape(bias, bshape));
  }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;  // [cout, cin, k, k]
  Tensor<T> bias;    // [cout]
  int64_t stride = 1;
  int64_t pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int64_t cin, int64_t cout, int64_t k, int64_t stride_, Rng& rng)
      : weight(init_weight<T>({cout, cin, k, k}, cin * k * k, rng)),
        bias(init_zeros<T>({cout})),
        stride(stride_),
        pad(k / 2) {}

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }

  void params(const std::string& prefix, NamedParams<T>& out) const {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
  }
};

}  // namespace mat
