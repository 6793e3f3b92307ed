#pragma once

#include <functional>

#include "mat/tensor.hpp"

namespace mat {

// Central finite-difference comparison against reverse-mode gradients, in f64.
// The scalar probe is sum(out * fixed_random_weights) so every output
// component contributes. For large inputs only a deterministic random subset
// of coordinates is probed.
struct GradcheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
};

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

inline GradcheckReport gradcheck(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& fn,
    std::vector<Tensor<double>> inputs, double tol = 1e-4, double h = 1e-5,
    int64_t max_coords_per_input = 64, uint64_t probe_seed = 17) {
  for (auto& in : inputs) in.set_requires_grad(true);

  Rng probe_rng(probe_seed);
  Tensor<double> out = fn(inputs);
  Tensor<double> w = Tensor<double>::randn(out.shape(), probe_rng);
  Tensor<double> loss = sum(mul(out, w));
  std::vector<Tensor<double>> analytic = autograd::grad(loss, inputs, /*create_graph=*/false);

  auto loss_value = [&]() {
    NoGradGuard ng;
    Tensor<double> o = fn(inputs);
    double acc = 0.0;
    for (int64_t i = 0; i < o.numel(); ++i)
      acc += o.data()[static_cast<size_t>(i)] * w.data()[static_cast<size_t>(i)];
    return acc;
  };

  GradcheckReport rep;
  for (size_t ii = 0; ii < inputs.size(); ++ii) {
    auto data = inputs[ii].data();
    const int64_t n = inputs[ii].numel();
    std::vector<int64_t> coords;
    if (n <= max_coords_per_input) {
      for (int64_t c = 0; c < n; ++c) coords.push_back(c);
    } else {
      for (int64_t c = 0; c < max_coords_per_input; ++c)
        coords.push_back(probe_rng.uniform_int(0, n - 1));
    }
    for (int64_t c : coords) {
      const double orig = data[static_cast<size_t>(c)];
      data[static_cast<size_t>(c)] = orig + h;
      const double lp = loss_value();
      data[static_cast<size_t>(c)] = orig - h;
      const double lm = loss_value();
      data[static_cast<size_t>(c)] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[ii].data()[static_cast<size_t>(c)];
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err(a, numeric));
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace mat
