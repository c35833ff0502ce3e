#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deblur/tensor.hpp"

namespace deblur {

/// A named trainable tensor with its adaptive-moment optimizer state.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<Real> first_moment;
  std::vector<Real> second_moment;
  std::uint64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string name, Tensor value);
};

struct AdamConfig {
  Real lr = Real(1e-4);
  Real beta1 = Real(0.5);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
  bool operator==(const AdamConfig&) const = default;
};

/// One bias-corrected Adam update of every parameter, then clears the grads.
/// Updated values and moments are rounded to 32-bit storage.
/// Throws StateError naming the first parameter without an accumulated gradient.
void adam_step(std::span<Parameter> params, const AdamConfig& config);

}  // namespace deblur
