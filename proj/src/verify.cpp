#include "deblur/verify.hpp"

#include <cstdio>
#include <functional>
#include <random>

#include "deblur/dark_channel.hpp"
#include "deblur/networks.hpp"
#include "deblur/ops.hpp"
#include "deblur/training.hpp"

namespace deblur {

namespace {

constexpr double kLayerTolerance = 1e-3;
constexpr double kElementwiseTolerance = 1e-4;
constexpr double kCompositeTolerance = 1e-2;
constexpr std::size_t kSampledElements = 6;

struct Setup {
  ScalarFunction f;
  std::vector<Tensor> inputs;
  std::size_t max_elements = 0;
};

struct Case {
  std::string name;
  double tolerance;
  std::function<Setup(Rng&)> make;
};

std::uint64_t name_tag(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

Tensor random_tensor(Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (Real& x : v) x = static_cast<Real>(u(rng));
  return Tensor(std::move(shape), std::move(v));
}

// Scalar probe of a tensor output: squared distance to a fixed random target,
// so every output element contributes a distinct weight.
Tensor probe(Tape& tape, const Tensor& y, const Tensor& target) { return reduce_l2sq(tape, y, target); }

Case unary_case(std::string name, double lo, double hi, std::function<Tensor(Tape&, const Tensor&)> op) {
  return {name, kElementwiseTolerance, [=](Rng& rng) {
            const Shape s{2, 3, 4, 4};
            const Tensor target = random_tensor(s, -1, 1, rng);
            return Setup{[=](Tape& t, std::span<const Tensor> in) { return probe(t, op(t, in[0]), target); },
                         {random_tensor(s, lo, hi, rng)}};
          }};
}

std::vector<Case> op_cases() {
  std::vector<Case> cases;
  cases.push_back({"conv2d", kLayerTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({2, 4, 4, 3}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    return probe(t, conv2d(t, in[0], in[1], in[2], 2, 1), target);
                                  },
                                  {random_tensor({2, 3, 7, 6}, -1, 1, rng), random_tensor({4, 3, 3, 3}, -1, 1, rng),
                                   random_tensor({4}, -1, 1, rng)}};
                   }});
  cases.push_back({"transposed_conv2d", kLayerTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({2, 2, 8, 10}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    return probe(t, transposed_conv2d(t, in[0], in[1], in[2], 2, 2, 1), target);
                                  },
                                  {random_tensor({2, 3, 4, 5}, -1, 1, rng), random_tensor({3, 2, 5, 5}, -1, 1, rng),
                                   random_tensor({2}, -1, 1, rng)}};
                   }});
  cases.push_back({"batch_norm_train", kLayerTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({3, 4, 3, 3}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    RunningStats stats;
                                    return probe(t, batch_norm(t, in[0], in[1], in[2], Mode::Train, stats), target);
                                  },
                                  {random_tensor({3, 4, 3, 3}, -2, 2, rng), random_tensor({4}, 0.5, 1.5, rng),
                                   random_tensor({4}, -1, 1, rng)}};
                   }});
  cases.push_back({"batch_norm_infer", kLayerTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({2, 4, 3, 3}, -1, 1, rng);
                     RunningStats fixed = RunningStats::identity(4);
                     std::uniform_real_distribution<double> u(0.5, 2.0);
                     for (std::size_t c = 0; c < 4; ++c) {
                       fixed.mean[c] = static_cast<Real>(u(rng) - 1.25);
                       fixed.var[c] = static_cast<Real>(u(rng));
                     }
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    RunningStats stats = fixed;
                                    return probe(t, batch_norm(t, in[0], in[1], in[2], Mode::Infer, stats), target);
                                  },
                                  {random_tensor({2, 4, 3, 3}, -2, 2, rng), random_tensor({4}, 0.5, 1.5, rng),
                                   random_tensor({4}, -1, 1, rng)}};
                   }});
  cases.push_back(unary_case("leaky_relu", -2, 2, [](Tape& t, const Tensor& x) { return leaky_relu(t, x, Real(0.2)); }));
  cases.push_back(unary_case("sigmoid", -3, 3, [](Tape& t, const Tensor& x) { return sigmoid(t, x); }));
  cases.push_back(unary_case("tanh", -2, 2, [](Tape& t, const Tensor& x) { return tanh(t, x); }));
  cases.push_back({"dropout", kElementwiseTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({2, 3, 4, 4}, -1, 1, rng);
                     const std::uint64_t mask_seed = rng();
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    Rng mask(mask_seed);
                                    return probe(t, dropout(t, in[0], Real(0.5), Mode::Train, mask), target);
                                  },
                                  {random_tensor({2, 3, 4, 4}, -1, 1, rng)}};
                   }});
  cases.push_back({"min_pool_channels_window", kLayerTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({2, 1, 6, 6}, 0, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    return probe(t, min_pool_channels_window(t, in[0], 3).values, target);
                                  },
                                  {random_tensor({2, 3, 6, 6}, 0, 1, rng)}};
                   }});
  cases.push_back({"dark_channel_loss", kLayerTolerance, [](Rng& rng) {
                     const Tensor sharp = random_tensor({1, 3, 8, 8}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    return dark_channel_loss(t, in[0], sharp, 3);
                                  },
                                  {random_tensor({1, 3, 8, 8}, -1, 1, rng)}};
                   }});
  cases.push_back({"concat_channels", kElementwiseTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({2, 5, 3, 3}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) {
                                    return probe(t, concat_channels(t, in[0], in[1]), target);
                                  },
                                  {random_tensor({2, 2, 3, 3}, -1, 1, rng), random_tensor({2, 3, 3, 3}, -1, 1, rng)}};
                   }});
  cases.push_back({"reduce_l1", kElementwiseTolerance, [](Rng& rng) {
                     return Setup{[](Tape& t, std::span<const Tensor> in) { return reduce_l1(t, in[0], in[1]); },
                                  {random_tensor({2, 3, 4, 4}, -1, 1, rng), random_tensor({2, 3, 4, 4}, -1, 1, rng)}};
                   }});
  cases.push_back({"reduce_l2sq", kElementwiseTolerance, [](Rng& rng) {
                     return Setup{[](Tape& t, std::span<const Tensor> in) { return reduce_l2sq(t, in[0], in[1]); },
                                  {random_tensor({2, 3, 4, 4}, -1, 1, rng), random_tensor({2, 3, 4, 4}, -1, 1, rng)}};
                   }});
  cases.push_back(unary_case("affine", -1, 1, [](Tape& t, const Tensor& x) { return affine(t, x, Real(-1.5), Real(0.25)); }));
  cases.push_back({"add", kElementwiseTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({2, 3, 4, 4}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) { return probe(t, add(t, in[0], in[1]), target); },
                                  {random_tensor({2, 3, 4, 4}, -1, 1, rng), random_tensor({2, 3, 4, 4}, -1, 1, rng)}};
                   }});
  cases.push_back({"mean", kElementwiseTolerance, [](Rng& rng) {
                     const Tensor target = random_tensor({1}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor> in) { return probe(t, mean(t, in[0]), target); },
                                  {random_tensor({2, 3, 4, 4}, -1, 1, rng)}};
                   }});
  cases.push_back(unary_case("log", 0.5, 2, [](Tape& t, const Tensor& x) { return log(t, x); }));
  cases.push_back(unary_case("clamp", -2, 2, [](Tape& t, const Tensor& x) { return clamp(t, x, Real(-1), Real(1)); }));
  cases.push_back({"discriminator_loss", kElementwiseTolerance, [](Rng& rng) {
                     return Setup{[](Tape& t, std::span<const Tensor> in) {
                                    return discriminator_loss(t, sigmoid(t, in[0]), sigmoid(t, in[1]));
                                  },
                                  {random_tensor({3, 1, 1, 1}, -3, 3, rng), random_tensor({3, 1, 1, 1}, -3, 3, rng)}};
                   }});
  return cases;
}

NetworkSpec toy_spec() {
  NetworkSpec spec;
  spec.encoder_filters = {4, 8};
  spec.decoder_filters = mirrored_decoder(spec.encoder_filters);
  spec.dropout_blocks = {0};
  return spec;
}

constexpr int kToySize = 16;

// Parameter tensors of a network as gradcheck inputs (handles alias the network).
std::vector<Tensor> parameter_tensors(const Network& net) {
  std::vector<Tensor> out;
  for (const Parameter& p : net.parameters()) out.push_back(p.value);
  return out;
}

std::vector<Case> network_cases() {
  std::vector<Case> cases;
  cases.push_back({"generator_sum", kCompositeTolerance, [](Rng& rng) {
                     auto g = std::make_shared<Network>(build_generator(toy_spec(), rng));
                     const Tensor blurry = random_tensor({2, 3, kToySize, kToySize}, -1, 1, rng);
                     const std::uint64_t dropout_seed = rng();
                     Setup s{[=](Tape& t, std::span<const Tensor>) {
                               Rng dr(dropout_seed);
                               const Tensor out = generator_forward(t, *g, blurry, dr);
                               return affine(t, mean(t, out), static_cast<Real>(out.numel()), Real(0));
                             },
                             parameter_tensors(*g), kSampledElements};
                     return s;
                   }});
  cases.push_back({"discriminator_mean", kCompositeTolerance, [](Rng& rng) {
                     NetworkSpec spec = toy_spec();
                     spec.dropout_blocks.clear();
                     auto d = std::make_shared<Network>(build_discriminator(spec, kToySize, rng));
                     const Tensor a = random_tensor({2, 3, kToySize, kToySize}, -1, 1, rng);
                     const Tensor b = random_tensor({2, 3, kToySize, kToySize}, -1, 1, rng);
                     return Setup{[=](Tape& t, std::span<const Tensor>) {
                                    return mean(t, discriminator_forward(t, *d, a, b));
                                  },
                                  parameter_tensors(*d), kSampledElements};
                   }});
  return cases;
}

struct ToyPair {
  std::shared_ptr<Network> g;
  std::shared_ptr<Network> d;
  Tensor blurry;
  Tensor sharp;
  std::uint64_t dropout_seed;
};

ToyPair toy_pair(Rng& rng) {
  NetworkSpec dspec = toy_spec();
  dspec.dropout_blocks.clear();
  ToyPair p{std::make_shared<Network>(build_generator(toy_spec(), rng)),
            std::make_shared<Network>(build_discriminator(dspec, kToySize, rng)),
            random_tensor({2, 3, kToySize, kToySize}, -1, 1, rng), random_tensor({2, 3, kToySize, kToySize}, -1, 1, rng),
            rng()};
  return p;
}

std::vector<Case> loss_cases() {
  std::vector<Case> cases;
  cases.push_back({"discriminator_objective", kCompositeTolerance, [](Rng& rng) {
                     const ToyPair p = toy_pair(rng);
                     p.g->set_trainable(false);
                     return Setup{[=](Tape& t, std::span<const Tensor>) {
                                    Rng dr(p.dropout_seed);
                                    const Tensor fake = generator_forward(t, *p.g, p.blurry, dr);
                                    return discriminator_loss(t, discriminator_forward(t, *p.d, p.sharp, p.blurry),
                                                              discriminator_forward(t, *p.d, fake, p.blurry));
                                  },
                                  parameter_tensors(*p.d), kSampledElements};
                   }});
  cases.push_back({"generator_objective", kCompositeTolerance, [](Rng& rng) {
                     const ToyPair p = toy_pair(rng);
                     p.d->set_trainable(false);
                     return Setup{[=](Tape& t, std::span<const Tensor>) {
                                    Rng dr(p.dropout_seed);
                                    const Tensor restored = generator_forward(t, *p.g, p.blurry, dr);
                                    const Tensor d_fake = discriminator_forward(t, *p.d, restored, p.blurry);
                                    return generator_loss(t, d_fake, restored, p.sharp, 100, 250, 3).total;
                                  },
                                  parameter_tensors(*p.g), kSampledElements};
                   }});
  return cases;
}

std::vector<Case> cases_for(GradcheckScope scope) {
  switch (scope) {
    case GradcheckScope::Op: return op_cases();
    case GradcheckScope::Network: return network_cases();
    case GradcheckScope::Loss: return loss_cases();
  }
  return {};
}

}  // namespace

std::vector<CheckOutcome> run_gradcheck_suite(GradcheckScope scope, const std::vector<std::uint64_t>& seeds) {
  std::vector<CheckOutcome> outcomes;
  for (const Case& c : cases_for(scope))
    for (std::uint64_t seed : seeds) {
      Rng rng = make_rng(seed, {name_tag(c.name)});
      Setup setup = c.make(rng);
      GradcheckOptions options;
      options.seed = seed;
      options.max_elements_per_input = setup.max_elements;
      CheckOutcome o{c.name, seed, c.tolerance, gradcheck(setup.f, setup.inputs, options), false};
      o.pass = o.result.max_rel_error <= c.tolerance;
      outcomes.push_back(std::move(o));
    }
  return outcomes;
}

std::vector<std::string> gradcheck_case_names(GradcheckScope scope) {
  std::vector<std::string> names;
  for (const Case& c : cases_for(scope)) names.push_back(c.name);
  return names;
}

std::string format_outcomes(const std::vector<CheckOutcome>& outcomes) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-26s %6s %12s %9s %6s  %s\n", "case", "seed", "max_rel_err", "tolerance", "status",
                "worst (input, element): analytic / numeric");
  out += line;
  for (const CheckOutcome& o : outcomes) {
    std::snprintf(line, sizeof line, "%-26s %6llu %12.3e %9.0e %6s  (%zu, %zu): %.6e / %.6e\n", o.name.c_str(),
                  static_cast<unsigned long long>(o.seed), o.result.max_rel_error, o.tolerance, o.pass ? "PASS" : "FAIL",
                  o.result.worst_input, o.result.worst_element, o.result.analytic, o.result.numeric);
    out += line;
  }
  return out;
}

}  // namespace deblur
