#include "deblur/error.hpp"
#include "deblur/image.hpp"
#include "deblur/networks.hpp"
#include "support.hpp"

using namespace deblur;
using namespace testing;

namespace {

NetworkSpec toy_spec() {
  NetworkSpec s;
  s.encoder_filters = {4, 8};
  s.decoder_filters = mirrored_decoder(s.encoder_filters);
  s.dropout_blocks = {0};
  return s;
}

NetworkSpec small_spec() {
  NetworkSpec s;
  s.encoder_filters = {8, 16, 16, 32};
  s.decoder_filters = mirrored_decoder(s.encoder_filters);
  return s;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  return affine(tape, mean(tape, x), static_cast<Real>(x.numel()), 0);
}

}  // namespace

TEST_SUITE("networks") {
  TEST_CASE("mirrored decoder") {
    CHECK(mirrored_decoder({64, 128, 256, 512}) == std::vector<int>{256, 128, 64, 3});
    CHECK(NetworkSpec{}.decoder_filters == mirrored_decoder(NetworkSpec{}.encoder_filters));
  }

  TEST_CASE("default parameter counts match an independent count") {
    // frozen from a standalone closed-form count: sum of k*k*in*out + out (+ 2*out with batch norm)
    Rng rng(0);
    CHECK(build_generator(NetworkSpec{}, rng).parameter_count() == 9644099);
    CHECK(build_discriminator(default_discriminator_spec(), 64, rng).parameter_count() == 4321345);
  }

  TEST_CASE("default generator preserves a 64x64 shape and stays in range") {
    Rng rng(1);
    Network g = build_generator(NetworkSpec{}, rng);
    Tape tape;
    const Tensor y = generator_forward(tape, g, uniform({1, 3, 64, 64}, rng), rng);
    CHECK(y.shape() == Shape{1, 3, 64, 64});
    for (Real v : y.data()) CHECK((v >= -1 && v <= 1));
  }

  TEST_CASE("output size equals input size for legal inputs") {
    Rng rng(2);
    Network g = build_generator(small_spec(), rng);
    for (auto [h, w] : {std::pair{16, 16}, std::pair{32, 48}, std::pair{64, 16}}) {
      Tape tape;
      const Tensor y = generator_forward(tape, g, uniform({2, 3, std::size_t(h), std::size_t(w)}, rng), rng);
      CHECK(y.shape() == Shape{2, 3, std::size_t(h), std::size_t(w)});
    }
  }

  TEST_CASE("indivisible input is a ConfigError naming the reduction") {
    Rng rng(3);
    Network g = build_generator(small_spec(), rng);
    Tape tape;
    CHECK_THROWS_AS(generator_forward(tape, g, Tensor(Shape{1, 3, 20, 16}), rng), ConfigError);
    CHECK_THROWS_AS(generator_forward(tape, g, Tensor(Shape{1, 1, 16, 16}), rng), DimensionError);
  }

  TEST_CASE("spec validation lists every problem") {
    NetworkSpec s;
    s.kernel = 4;
    s.decoder_filters = {1, 2};
    s.dropout_rate = 1.5;
    CHECK(s.generator_violations().size() >= 3);
    CHECK(NetworkSpec{}.discriminator_violations(40).size() == 1);
    CHECK(NetworkSpec{}.discriminator_violations(64).empty());
    Rng rng(0);
    CHECK_THROWS_AS(build_generator(s, rng), ConfigError);
  }

  TEST_CASE("discriminator emits one probability per batch item") {
    Rng rng(4);
    NetworkSpec ds = default_discriminator_spec();
    ds.encoder_filters = {8, 16, 32, 32};
    Network d = build_discriminator(ds, 64, rng);
    Tape tape;
    const Tensor p = discriminator_forward(tape, d, uniform({3, 3, 64, 64}, rng), uniform({3, 3, 64, 64}, rng));
    REQUIRE(p.numel() == 3);
    for (Real v : p.data()) CHECK((v > 0 && v < 1));
  }

  TEST_CASE("discriminator is deterministic and near 0.5 at init with running statistics") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng a(seed), b(seed);
      Network d1 = build_discriminator(default_discriminator_spec(), 64, a);
      Network d2 = build_discriminator(default_discriminator_spec(), 64, b);
      d1.set_mode(Mode::Infer);
      d2.set_mode(Mode::Infer);
      Rng data(seed + 1000);
      const Tensor x = uniform({1, 3, 64, 64}, data), y = uniform({1, 3, 64, 64}, data);
      Tape tape;
      const Tensor p1 = discriminator_forward(tape, d1, x, y), p2 = discriminator_forward(tape, d2, x, y);
      CHECK(p1[0] == p2[0]);
      CHECK((p1[0] > 0.2 && p1[0] < 0.8));
    }
  }

  TEST_CASE("infer mode is deterministic, train mode dropout varies with the seed") {
    Rng rng(5);
    Network g = build_generator(small_spec(), rng);
    const Tensor x = uniform({1, 3, 32, 32}, rng);
    g.set_mode(Mode::Infer);
    Rng r1(1), r2(2);
    Tape tape;
    CHECK(bit_equal(generator_forward(tape, g, x, r1), generator_forward(tape, g, x, r2)));
    g.set_mode(Mode::Train);
    Rng r3(1), r4(2);
    CHECK_FALSE(bit_equal(generator_forward(tape, g, x, r3), generator_forward(tape, g, x, r4)));
  }

  TEST_CASE("every skip connection is live") {
    Rng rng(6);
    Network g = build_generator(small_spec(), rng);
    g.set_mode(Mode::Infer);
    const Tensor x = uniform({1, 3, 32, 32}, rng);
    Tape tape;
    const Tensor base = generator_forward(tape, g, x, rng);
    for (int skip = 0; skip + 1 < static_cast<int>(g.spec().depth()); ++skip) {
      GeneratorForwardOptions opt;
      opt.zero_skip = skip;
      CHECK_FALSE(bit_equal(generator_forward(tape, g, x, rng, opt), base));
    }
  }

  TEST_CASE("every parameter receives gradient") {
    Rng rng(7);
    Network g = build_generator(small_spec(), rng);
    Tape tape;
    Rng drop(1);
    tape.backward(sum_all(tape, generator_forward(tape, g, uniform({2, 3, 32, 32}, rng), drop)));
    for (const Parameter& p : g.parameters()) {
      bool any = false;
      for (Real v : p.value.grad()) any = any || v != 0;
      CHECK_MESSAGE(any, p.name);
    }

    Network d = build_discriminator(default_discriminator_spec(), 32, rng);
    Tape dtape;
    dtape.backward(sum_all(dtape, discriminator_forward(dtape, d, uniform({2, 3, 32, 32}, rng),
                                                        uniform({2, 3, 32, 32}, rng))));
    for (const Parameter& p : d.parameters()) {
      bool any = false;
      for (Real v : p.value.grad()) any = any || v != 0;
      CHECK_MESSAGE(any, p.name);
    }
  }

  TEST_CASE("frozen network records no parameter gradients") {
    Rng rng(8);
    Network g = build_generator(toy_spec(), rng);
    g.set_trainable(false);
    Tensor x = uniform({1, 3, 16, 16}, rng, -1, 1, true);
    Tape tape;
    tape.backward(sum_all(tape, generator_forward(tape, g, x, rng)));
    CHECK(x.has_grad());
    for (const Parameter& p : g.parameters()) CHECK_FALSE(p.value.has_grad());
  }

  TEST_CASE("parameter names follow the block layout") {
    Rng rng(9);
    Network g = build_generator(toy_spec(), rng);
    CHECK(g.parameter("G.enc1.weight").value.shape() == Shape{4, 3, 5, 5});
    CHECK(g.parameter("G.dec1.weight").value.shape() == Shape{8, 4, 5, 5});
    CHECK(g.parameter("G.dec2.bias").value.shape() == Shape{3});
    CHECK_THROWS(g.parameter("G.nope"));
  }

  TEST_CASE("initial weights follow N(0, 0.02)") {
    Rng rng(10);
    Network g = build_generator(NetworkSpec{}, rng);
    const Tensor& w = g.parameter("G.enc3.weight").value;
    double s = 0, s2 = 0;
    for (Real v : w.data()) {
      s += static_cast<double>(v);
      s2 += static_cast<double>(v) * static_cast<double>(v);
    }
    const double n = static_cast<double>(w.numel());
    CHECK(std::abs(s / n) < 1e-3);
    CHECK(std::sqrt(s2 / n) == doctest::Approx(0.02).epsilon(0.02));
  }
}

TEST_SUITE("inference") {
  TEST_CASE("70x70 input on a depth-4 net comes back 70x70") {
    Rng rng(11);
    Network g = build_generator(small_spec(), rng);
    const Tensor x = uniform({1, 3, 70, 70}, rng, 0, 1);
    const Tensor y = deblur_image(g, x);
    CHECK(y.shape() == Shape{1, 3, 70, 70});
    for (Real v : y.data()) CHECK((v >= 0 && v <= 1));
    CHECK(bit_equal(deblur_image(g, x), y));
    CHECK(g.mode() == Mode::Train);
    CHECK(g.trainable());
  }

  TEST_CASE("reflect pad and crop") {
    const Tensor x(Shape{1, 1, 2, 3}, std::vector<Real>{1, 2, 3, 4, 5, 6});
    const Tensor p = reflect_pad(x, 1, 2);
    CHECK(p.shape() == Shape{1, 1, 3, 5});
    CHECK(std::vector<Real>(p.data().begin(), p.data().end()) ==
          std::vector<Real>{1, 2, 3, 2, 1, 4, 5, 6, 5, 4, 1, 2, 3, 2, 1});
    CHECK(bit_equal(crop(p, 0, 0, 2, 3), x));
  }
}
