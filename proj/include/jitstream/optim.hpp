#pragma once

#include <span>
#include <string>
#include <vector>

#include "jitstream/tensor.hpp"

namespace jitstream {

/// A trainable tensor with its gradient and momentum buffer. All three share one shape.
template <typename T>
struct ParamState {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;

  ParamState() = default;
  ParamState(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), momentum(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }

  void accumulate(std::span<const T> g) {
    if (g.size() != grad.size()) {
      throw std::invalid_argument("gradient size mismatch for parameter " + name);
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
};

struct SgdStepReport {
  std::size_t updated = 0;
  std::vector<std::string> rejected;  // parameters skipped for a non-finite gradient
};

/// buffer <- momentum * buffer + grad; value <- value - lr * buffer; grad <- 0.
template <typename T>
SgdStepReport sgd_momentum_step(std::span<ParamState<T>* const> params, T lr, T momentum) {
  SgdStepReport report;
  for (ParamState<T>* p : params) {
    if (!p->grad.all_finite()) {
      report.rejected.push_back(p->name);
      p->zero_grad();
      continue;
    }
    T* value = p->value.data();
    T* buffer = p->momentum.data();
    const T* grad = p->grad.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      buffer[i] = momentum * buffer[i] + grad[i];
      value[i] -= lr * buffer[i];
    }
    p->zero_grad();
    ++report.updated;
  }
  return report;
}

}  // namespace jitstream
