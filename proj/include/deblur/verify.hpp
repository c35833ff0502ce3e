#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deblur/gradcheck.hpp"

namespace deblur {

enum class GradcheckScope { Op, Network, Loss };

struct CheckOutcome {
  std::string name;
  std::uint64_t seed = 0;
  double tolerance = 0;
  GradcheckResult result;
  bool pass = false;
};

/// Finite-difference checks of every differentiable operation (op scope),
/// the generator and discriminator end to end on toy specs (network scope),
/// and the two adversarial objectives through toy networks (loss scope).
/// One outcome per case and seed.
std::vector<CheckOutcome> run_gradcheck_suite(GradcheckScope scope, const std::vector<std::uint64_t>& seeds);

/// Case names in suite order for a scope.
std::vector<std::string> gradcheck_case_names(GradcheckScope scope);

/// Fixed-width table of outcomes, worst element included.
std::string format_outcomes(const std::vector<CheckOutcome>& outcomes);

}  // namespace deblur
