#include "deblur/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deblur/error.hpp"
#include "deblur/rng.hpp"

namespace deblur {

namespace {
double evaluate(const ScalarFunction& f, std::span<const Tensor> inputs) {
  Tape tape;
  return static_cast<double>(f(tape, inputs).item());
}
}  // namespace

GradcheckResult gradcheck(const ScalarFunction& f, std::vector<Tensor> inputs, const GradcheckOptions& options) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  std::vector<std::vector<Real>> analytic;
  {
    Tape tape;
    Tensor loss = f(tape, inputs);
    tape.backward(loss);
    for (Tensor& t : inputs) {
      analytic.emplace_back(t.has_grad() ? std::vector<Real>(t.grad().begin(), t.grad().end())
                                         : std::vector<Real>(t.numel(), Real(0)));
      t.clear_grad();
    }
  }
  const double base0 = evaluate(f, inputs);
  const double base1 = evaluate(f, inputs);
  if (base0 != base1)
    throw NumericalError("gradcheck: function is not deterministic (" + std::to_string(base0) + " vs " +
                         std::to_string(base1) + ")");

  double scale = 0;
  for (const auto& a : analytic)
    for (Real v : a) scale = std::max(scale, std::abs(static_cast<double>(v)));
  const double floor = std::max(1e-3 * scale, 1e-12);

  Rng rng = make_rng(options.seed, {0x6772616463686bULL});
  GradcheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& t = inputs[i];
    std::vector<std::size_t> elements(t.numel());
    std::iota(elements.begin(), elements.end(), std::size_t{0});
    if (options.max_elements_per_input != 0 && elements.size() > options.max_elements_per_input) {
      std::shuffle(elements.begin(), elements.end(), rng);
      elements.resize(options.max_elements_per_input);
      std::sort(elements.begin(), elements.end());
    }
    for (std::size_t e : elements) {
      auto data = t.mutable_data();
      const Real original = data[e];
      data[e] = original + static_cast<Real>(options.step);
      const double plus = evaluate(f, inputs);
      data[e] = original - static_cast<Real>(options.step);
      const double minus = evaluate(f, inputs);
      data[e] = original;
      const double numeric = (plus - minus) / (2 * options.step);
      const double a = static_cast<double>(analytic[i][e]);
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.elements_checked;
      if (result.elements_checked == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = i;
        result.worst_element = e;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace deblur
