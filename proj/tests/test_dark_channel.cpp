#include "deblur/blur.hpp"
#include "deblur/dark_channel.hpp"
#include "deblur/dataset.hpp"
#include "deblur/error.hpp"
#include "support.hpp"

using namespace deblur;
using namespace testing;

TEST_SUITE("dark_channel") {
  TEST_CASE("constant gray image") {
    Tape tape;
    const DarkChannelMap m = dark_channel_map(tape, Tensor(Shape{1, 3, 9, 9}, 0.4), 5);
    for (Real v : m.values.data()) CHECK(v == Real(0.4));
    CHECK(m.values.shape() == Shape{1, 1, 9, 9});
  }

  TEST_CASE("window covering the image gives the global minimum") {
    Rng rng(1);
    const Tensor img = uniform({1, 3, 6, 6}, rng, 0, 1);
    const Real lo = *std::min_element(img.data().begin(), img.data().end());
    Tape tape;
    const DarkChannelMap m = dark_channel_map(tape, img, 13);
    for (Real v : m.values.data()) CHECK(v == lo);
  }

  TEST_CASE("matches the exhaustive oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const Tensor img = uniform({1, 3, 16, 16}, rng, 0, 1);
      for (int w : {1, 3, 5}) {
        Tape tape;
        CHECK(bit_equal(dark_channel_map(tape, img, w).values, dark_channel_oracle(img, w)));
      }
    }
  }

  TEST_CASE("window 1 on one channel is the identity") {
    Rng rng(2);
    const Tensor img = uniform({2, 1, 7, 5}, rng, 0, 1);
    Tape tape;
    CHECK(bit_equal(dark_channel_map(tape, img, 1).values, img));
  }

  TEST_CASE("blur never undershoots the dilated-window dark channel") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const Tensor img = uniform({1, 3, 16, 16}, rng, 0, 1);
      const Tensor blurred = apply_blur(img, box_kernel(3));
      for (int w : {1, 3, 5}) {
        Tape tape;
        const Tensor lhs = dark_channel_map(tape, blurred, w).values;
        const Tensor rhs = dark_channel_map(tape, img, w + 2).values;
        const std::size_t margin = static_cast<std::size_t>(w / 2 + 1);
        for (std::size_t y = margin; y < 16 - margin; ++y)
          for (std::size_t x = margin; x < 16 - margin; ++x) CHECK(lhs[y * 16 + x] >= rhs[y * 16 + x] - 1e-12);
      }
    }
  }

  TEST_CASE("loss closed forms") {
    Rng rng(3);
    const Tensor a = uniform({1, 3, 8, 8}, rng);
    Tape tape;
    CHECK(dark_channel_loss(tape, a, a, 3).item() == 0.0);
    // network range: -1 maps to 0, +1 maps to 1
    CHECK(dark_channel_loss(tape, Tensor(Shape{1, 3, 8, 8}, -1.0), Tensor(Shape{1, 3, 8, 8}, 1.0), 3).item() == 1.0);
  }

  TEST_CASE("loss is nonnegative and zero only for identical maps") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const Tensor a = uniform({1, 3, 8, 8}, rng), b = uniform({1, 3, 8, 8}, rng);
      Tape tape;
      const double l = static_cast<double>(dark_channel_loss(tape, a, b, 3).item());
      const bool same = bit_equal(dark_channel_map(tape, a, 3).values, dark_channel_map(tape, b, 3).values);
      CHECK(l >= 0);
      CHECK((l == 0) == same);
    }
  }

  TEST_CASE("sparsity bounds") {
    CHECK(dark_channel_sparsity(Tensor(Shape{1, 3, 8, 8}), 3, 1e-6) == 0.0);
    CHECK(dark_channel_sparsity(Tensor(Shape{1, 3, 8, 8}, 1.0), 3, 0.5) == 1.0);
  }

  TEST_CASE("blur raises dark channel sparsity on synthetic scenes") {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng = make_rng(seed, {7});
      const Tensor sharp = synthetic_sharp_image(64, 64, rng);
      const Tensor blurry = apply_blur(sharp, random_motion_kernel(15, rng));
      ok += dark_channel_sparsity(blurry, kDefaultDarkChannelWindow) >=
            dark_channel_sparsity(sharp, kDefaultDarkChannelWindow);
    }
    CHECK(ok >= 45);
  }

  TEST_CASE("bad window") {
    Tape tape;
    CHECK_THROWS_AS(dark_channel_map(tape, Tensor(Shape{1, 3, 4, 4}), 4), ConfigError);
    CHECK_THROWS_AS(dark_channel_map(tape, Tensor(Shape{1, 3, 4, 4}), 0), ConfigError);
  }
}
