#pragma once

#include "mat/nn.hpp"

namespace mat {

// Bias-corrected Adam over a NamedParams registry. With beta1 = 0 the first
// moment is the raw gradient.
template <typename T>
class Adam {
 public:
  struct Slot {
    std::vector<T> m;
    std::vector<T> v;
  };

  Adam() = default;
  Adam(NamedParams<T> params, T lr, T beta1, T beta2, T eps = static_cast<T>(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params_.items.size());
    for (size_t i = 0; i < params_.items.size(); ++i) {
      size_t n = static_cast<size_t>(params_.items[i].second.numel());
      slots_[i].m.assign(n, T(0));
      slots_[i].v.assign(n, T(0));
    }
  }

  // One update over all registered parameters. Parameters whose grad is
  // absent (loss did not reach them this step) are left untouched.
  void step() {
    ++t_;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), t_));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), t_));
    for (size_t i = 0; i < params_.items.size(); ++i) {
      Tensor<T>& p = params_.items[i].second;
      Tensor<T> g = p.grad();
      if (!g.defined()) continue;
      check(g.shape() == p.shape(), "adam: grad shape " + shape_str(g.shape()) +
                                        " mismatches param " + shape_str(p.shape()));
      auto& slot = slots_[i];
      check(slot.m.size() == static_cast<size_t>(p.numel()), "adam: state shape mismatch for " +
                                                                 params_.items[i].first);
      auto pd = p.data();
      auto gd = g.data();
      for (size_t k = 0; k < slot.m.size(); ++k) {
        slot.m[k] = beta1_ * slot.m[k] + (T(1) - beta1_) * gd[k];
        slot.v[k] = beta2_ * slot.v[k] + (T(1) - beta2_) * gd[k] * gd[k];
        const T mhat = slot.m[k] / bc1;
        const T vhat = slot.v[k] / bc2;
        pd[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_.items) p.zero_grad();
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  NamedParams<T>& params() { return params_; }
  std::vector<Slot>& slots() { return slots_; }
  T lr() const { return lr_; }

 private:
  NamedParams<T> params_;
  std::vector<Slot> slots_;
  T lr_ = static_cast<T>(1e-3);
  T beta1_ = T(0);
  T beta2_ = static_cast<T>(0.99);
  T eps_ = static_cast<T>(1e-8);
  int64_t t_ = 0;
};

}  // namespace mat
