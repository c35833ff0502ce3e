#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "deblur/tape.hpp"
#include "deblur/tensor.hpp"

namespace deblur {

/// Scalar function of the gradcheck inputs; must be deterministic.
using ScalarFunction = std::function<Tensor(Tape&, std::span<const Tensor>)>;

struct GradcheckOptions {
  double step = 1e-6;
  /// Elements checked per input; 0 checks all. Sampled with `seed` otherwise.
  std::size_t max_elements_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  /// Worst elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor),
  /// where floor = 1e-3 * (largest analytic gradient magnitude). The floor keeps
  /// elements whose true gradient is ~0 from dominating through rounding noise.
  double max_rel_error = 0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t elements_checked = 0;
};

/// Compares reverse-mode gradients of `f` at `inputs` against central finite
/// differences. Inputs are perturbed in place and restored afterwards; their
/// requires_grad flag is forced on. Throws NumericalError if two evaluations
/// at the same point disagree.
GradcheckResult gradcheck(const ScalarFunction& f, std::vector<Tensor> inputs, const GradcheckOptions& options = {});

}  // namespace deblur
