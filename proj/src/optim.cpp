#include "deblur/optim.hpp"

#include <cmath>

#include "deblur/error.hpp"

namespace deblur {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)),
      value(std::move(v)),
      first_moment(value.numel(), Real(0)),
      second_moment(value.numel(), Real(0)) {
  value.set_requires_grad(true);
}

void adam_step(std::span<Parameter> params, const AdamConfig& config) {
  for (const Parameter& p : params)
    if (!p.value.has_grad()) throw StateError("adam_step: parameter '" + p.name + "' has no accumulated gradient");
  for (Parameter& p : params) {
    ++p.step_count;
    const Real t = static_cast<Real>(p.step_count);
    const Real correction1 = Real(1) - std::pow(config.beta1, t);
    const Real correction2 = Real(1) - std::pow(config.beta2, t);
    auto w = p.value.mutable_data();
    auto g = p.value.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Real m = config.beta1 * p.first_moment[i] + (Real(1) - config.beta1) * g[i];
      const Real v = config.beta2 * p.second_moment[i] + (Real(1) - config.beta2) * g[i] * g[i];
      p.first_moment[i] = to_storage(m);
      p.second_moment[i] = to_storage(v);
      const Real update = config.lr * (m / correction1) / (std::sqrt(v / correction2) + config.eps);
      w[i] = to_storage(w[i] - update);
    }
    p.value.clear_grad();
  }
}

}  // namespace deblur
