#pragma once

#include <cmath>
#include <vector>

#include "uwf/params.hpp"

namespace uwf {

// Adaptive-moment first-order optimizer with bias correction.
template <typename T>
class Adam {
 public:
  Adam(ParameterSet<T>& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [_, v] : params_.items()) {
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    auto& items = params_.items();
    for (std::size_t p = 0; p < items.size(); ++p) {
      auto& var = items[p].second;
      if (!var.requires_grad() || var.grad().empty()) continue;
      Tensor<T>& w = var.mutable_value();
      const Tensor<T>& g = var.grad();
      Tensor<T>& m = m_[p];
      Tensor<T>& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        const double mi = beta1_ * m[i] + (1 - beta1_) * gi;
        const double vi = beta2_ * v[i] + (1 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        w[i] = static_cast<T>(w[i] - lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_));
      }
    }
  }

  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

 private:
  ParameterSet<T>& params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

}  // namespace uwf
