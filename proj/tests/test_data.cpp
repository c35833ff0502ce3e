#include <fstream>
#include <numeric>

#include "deblur/blur.hpp"
#include "deblur/dataset.hpp"
#include "deblur/error.hpp"
#include "deblur/image.hpp"
#include "deblur/image_io.hpp"
#include "support.hpp"

using namespace deblur;
using namespace testing;
namespace fs = std::filesystem;

namespace {

// Direct convolution with edge replication, anchored at the kernel center.
Tensor blur_oracle(const Tensor& img, const BlurKernel& k) {
  Tensor out(img.shape());
  const long h = static_cast<long>(img.dim(2)), w = static_cast<long>(img.dim(3));
  const long kh = static_cast<long>(k.height), kw = static_cast<long>(k.width);
  for (std::size_t c = 0; c < img.dim(1); ++c)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        double acc = 0;
        for (long r = 0; r < kh; ++r)
          for (long q = 0; q < kw; ++q) {
            const long yy = std::clamp(y - (r - kh / 2), 0L, h - 1), xx = std::clamp(x - (q - kw / 2), 0L, w - 1);
            acc += k.at(std::size_t(r), std::size_t(q)) * static_cast<double>(img[(c * h + yy) * w + xx]);
          }
        out.mutable_data()[(c * h + y) * w + x] = static_cast<Real>(acc);
      }
  return out;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

void write_images(const fs::path& dir, const std::vector<std::string>& names, std::size_t size, std::uint64_t seed) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < names.size(); ++i) {
    Rng rng = make_rng(seed, {i});
    save_image(synthetic_sharp_image(size, size, rng), dir / names[i]);
  }
}

}  // namespace

TEST_SUITE("image_io") {
  TEST_CASE("PNG and PPM round trips stay within one quantization level") {
    TempDir dir("io");
    Rng rng(1);
    const Tensor img = uniform({1, 3, 13, 9}, rng, 0, 1);
    for (const char* name : {"a.png", "a.ppm"}) {
      save_image(img, dir.path / name);
      const Tensor back = load_image(dir.path / name);
      REQUIRE(back.shape() == img.shape());
      CHECK(max_abs_diff(back, img) <= 1.0 / 255 + 1e-9);
      // a second round trip is exact
      save_image(back, dir.path / name);
      CHECK(bit_equal(load_image(dir.path / name), back));
    }
  }

  TEST_CASE("hand-encoded 2x2 P6 fixture") {
    std::vector<std::uint8_t> bytes{'P', '6', '\n', '#', ' ', 'c', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n'};
    for (std::uint8_t b : {255, 0, 0, 0, 255, 0, 0, 0, 255, 51, 102, 153}) bytes.push_back(b);
    const Tensor t = decode_ppm(bytes);
    REQUIRE(t.shape() == Shape{1, 3, 2, 2});
    // planar layout: R plane, G plane, B plane
    const std::vector<double> expect{1, 0, 0, 0.2, 0, 1, 0, 0.4, 0, 0, 1, 0.6};
    for (std::size_t i = 0; i < 12; ++i) CHECK(t[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    const auto enc = encode_ppm(t);
    CHECK(decode_ppm(enc).data().size() == 12);
    CHECK(std::vector<std::uint8_t>(enc.end() - 12, enc.end()) ==
          std::vector<std::uint8_t>(bytes.end() - 12, bytes.end()));
  }

  TEST_CASE("quantization rounds half up and clamps") {
    CHECK(quantize8(0.0) == 0);
    CHECK(quantize8(1.0) == 255);
    CHECK(quantize8(-0.3) == 0);
    CHECK(quantize8(7.0) == 255);
    CHECK(quantize8(0.5 / 255) == 1);
    CHECK(quantize8(127.5 / 255) == 128);
  }

  TEST_CASE("non-image and truncated files raise typed errors") {
    TempDir dir("io_err");
    write_bytes(dir.path / "x.png", {'h', 'e', 'l', 'l', 'o'});
    CHECK_THROWS_AS(load_image(dir.path / "x.png"), Error);
    write_bytes(dir.path / "y.txt", std::vector<std::uint8_t>(64, 'z'));
    CHECK_THROWS_AS(load_image(dir.path / "y.txt"), FormatError);
    write_bytes(dir.path / "t.ppm", {'P', '6', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 1, 2, 3});
    CHECK_THROWS_AS(load_image(dir.path / "t.ppm"), TruncatedError);
    CHECK_THROWS_AS(load_image(dir.path / "missing.png"), Error);

    Rng rng(2);
    save_image(uniform({1, 3, 16, 16}, rng, 0, 1), dir.path / "ok.png");
    std::ifstream in(dir.path / "ok.png", std::ios::binary);
    std::vector<std::uint8_t> png{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    png.resize(png.size() / 2);
    write_bytes(dir.path / "half.png", png);
    CHECK_THROWS_AS(load_image(dir.path / "half.png"), TruncatedError);
  }
}

TEST_SUITE("blur") {
  TEST_CASE("length one gives the identity kernel") {
    Rng rng(1);
    const BlurKernel k = random_motion_kernel(1, rng);
    CHECK(k.height == 1);
    CHECK(k.width == 1);
    CHECK(k.taps[0] == 1.0);
  }

  TEST_CASE("kernels are normalized, odd-sized and bounded by the trajectory length") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      Rng rng(seed);
      const double length = 1 + static_cast<double>(seed % 25);
      const BlurKernel k = random_motion_kernel(length, rng);
      const double sum = std::accumulate(k.taps.begin(), k.taps.end(), 0.0);
      REQUIRE(std::abs(sum - 1) < 1e-9);
      REQUIRE(k.height % 2 == 1);
      REQUIRE(k.width % 2 == 1);
      // support bounding box, ignoring the odd-size padding
      std::size_t r0 = k.height, r1 = 0, c0 = k.width, c1 = 0;
      for (std::size_t r = 0; r < k.height; ++r)
        for (std::size_t c = 0; c < k.width; ++c)
          if (k.at(r, c) > 0) {
            r0 = std::min(r0, r), r1 = std::max(r1, r), c0 = std::min(c0, c), c1 = std::max(c1, c);
          }
      REQUIRE(double(r1 - r0 + 1) <= length + 2);
      REQUIRE(double(c1 - c0 + 1) <= length + 2);
      for (double t : k.taps) REQUIRE(t >= 0);
    }
  }

  TEST_CASE("identity and constant images") {
    Rng rng(2);
    const Tensor img = uniform({1, 3, 8, 8}, rng, 0, 1);
    CHECK(bit_equal(apply_blur(img, identity_kernel()), img));
    const Tensor flat(Shape{1, 3, 20, 20}, 0.3);
    const Tensor out = apply_blur(flat, random_motion_kernel(9, rng));
    CHECK(max_abs_diff(out, flat) < 1e-12);
  }

  TEST_CASE("matches the quadruple-loop oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      const Tensor img = uniform({1, 3, 8, 8}, rng, 0, 1);
      BlurKernel k;
      k.height = k.width = 3;
      k.taps.resize(9);
      std::uniform_real_distribution<double> u(0, 1);
      double s = 0;
      for (double& t : k.taps) s += (t = u(rng));
      for (double& t : k.taps) t /= s;
      // equal up to fused multiply-add contraction
      CHECK(max_abs_diff(apply_blur(img, k), blur_oracle(img, k)) < 1e-15);
      const BlurKernel m = random_motion_kernel(5, rng);
      CHECK(max_abs_diff(apply_blur(img, m), blur_oracle(img, m)) < 1e-15);
    }
  }

  TEST_CASE("blur preserves the mean of interior-dominated images") {
    Rng rng(3);
    Tensor img(Shape{1, 3, 64, 64}, 0.5);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 16; y < 48; ++y)
        for (std::size_t x = 16; x < 48; ++x) img.mutable_data()[(c * 64 + y) * 64 + x] = Real((x + y) % 7) / 7;
    const Tensor out = apply_blur(img, random_motion_kernel(9, rng));
    const double a = std::accumulate(img.data().begin(), img.data().end(), 0.0);
    const double b = std::accumulate(out.data().begin(), out.data().end(), 0.0);
    CHECK(std::abs(a - b) / static_cast<double>(img.numel()) < 1e-6);
  }

  TEST_CASE("kernel larger than the image is rejected") {
    Rng rng(4);
    CHECK_THROWS_AS(apply_blur(Tensor(Shape{1, 3, 2, 2}), box_kernel(5)), DimensionError);
    CHECK_THROWS_AS(random_motion_kernel(0.5, rng), ConfigError);
  }

  TEST_CASE("noise") {
    Rng rng(5);
    const Tensor gray(Shape{1, 1, 256, 256}, 0.5);
    CHECK(bit_equal(add_gaussian_noise(gray, 0, rng), gray));
    const Tensor noisy = add_gaussian_noise(gray, 0.001, rng);
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < noisy.numel(); ++i) {
      const double d = static_cast<double>(noisy[i] - gray[i]);
      s += d;
      s2 += d * d;
    }
    const double n = static_cast<double>(noisy.numel()), m = s / n;
    CHECK(std::abs(s2 / n - m * m - 0.001) < 0.0001);
    const Tensor wild = add_gaussian_noise(uniform({1, 3, 32, 32}, rng, 0, 1), 0.5, rng);
    for (Real v : wild.data()) CHECK((v >= 0 && v <= 1));
    CHECK_THROWS_AS(add_gaussian_noise(gray, -1, rng), ConfigError);
  }

  TEST_CASE("downsample2 averages 2x2 boxes") {
    Tensor board(Shape{1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) board.mutable_data()[i] = Real((i / 4 + i % 4) % 2);
    const Tensor half = downsample2(board);
    for (Real v : half.data()) CHECK(v == 0.5);
    CHECK(downsample2(board).shape() == Shape{1, 1, 2, 2});
    CHECK(bit_equal(downsample(board, 1), board));
    CHECK(downsample(board, 4).shape() == Shape{1, 1, 1, 1});
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("crop equal to the image size is the identity") {
    Rng rng(1);
    ImagePair p{uniform({1, 3, 8, 8}, rng, 0, 1), uniform({1, 3, 8, 8}, rng, 0, 1), "p", {}};
    const ImagePair c = random_crop_pair(p, 8, rng);
    CHECK(c.augmentation.crop_top == 0);
    CHECK(c.augmentation.crop_left == 0);
    CHECK(bit_equal(c.sharp, p.sharp));
    CHECK(bit_equal(c.blurry, p.blurry));
    CHECK_THROWS_AS(random_crop_pair(p, 9, rng), DataError);
  }

  TEST_CASE("crops are reproducible and aligned") {
    Rng rng(2);
    ImagePair p{uniform({1, 3, 20, 24}, rng, 0, 1), uniform({1, 3, 20, 24}, rng, 0, 1), "p", {}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng a(seed), b(seed);
      const ImagePair x = random_crop_pair(p, 8, a), y = random_crop_pair(p, 8, b);
      CHECK(x.augmentation.crop_top == y.augmentation.crop_top);
      CHECK(x.augmentation.crop_left == y.augmentation.crop_left);
      CHECK(bit_equal(x.sharp, crop(p.sharp, x.augmentation.crop_top, x.augmentation.crop_left, 8, 8)));
      CHECK(bit_equal(x.blurry, crop(p.blurry, x.augmentation.crop_top, x.augmentation.crop_left, 8, 8)));
    }
  }

  TEST_CASE("pairs by file name and reports unmatched files") {
    TempDir dir("pairs");
    write_images(dir.path / "sharp", {"a.png", "b.png", "c.png"}, 16, 1);
    write_images(dir.path / "blur", {"a.png", "b.png", "c.png"}, 16, 2);
    const auto entries = list_dataset(dir.path);
    REQUIRE(entries.size() == 3);
    CHECK(entries[1].id == "b.png");
    CHECK(entries[1].blurry.has_value());

    write_images(dir.path / "blur", {"d.png"}, 16, 3);
    try {
      list_dataset(dir.path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("d.png") != std::string::npos);
    }
    CHECK_THROWS_AS(list_dataset(dir.path / "nowhere"), DataError);
  }

  TEST_CASE("three pairs at batch two give one batch per epoch") {
    CHECK(batches_per_epoch(3, 2) == 1);
    CHECK(batches_per_epoch(4, 2) == 2);
    CHECK(batches_per_epoch(1, 2) == 0);
  }

  TEST_CASE("epoch orders are permutations that change between epochs") {
    bool differs = false;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto a = epoch_order(8, seed, 0), b = epoch_order(8, seed, 1);
      differs = differs || a != b;
      CHECK(epoch_order(8, seed, 0) == a);
      std::sort(a.begin(), a.end());
      std::vector<std::size_t> iota(8);
      std::iota(iota.begin(), iota.end(), 0);
      CHECK(a == iota);
    }
    CHECK(differs);
  }

  TEST_CASE("samples are a pure function of seed, epoch and index") {
    TempDir dir("samples");
    write_images(dir.path / "sharp", {"a.png", "b.png"}, 48, 4);
    const auto entries = list_dataset(dir.path);
    PipelineConfig cfg;
    cfg.crop = 16;
    cfg.noise_variance = 0.001;
    cfg.kernel_length = 7;
    cfg.seed = 3;
    const ImagePair x = load_sample(entries[0], cfg, 2, 0);
    const ImagePair y = load_sample(entries[0], cfg, 2, 0);
    CHECK(bit_equal(x.blurry, y.blurry));
    CHECK(bit_equal(x.sharp, y.sharp));
    CHECK(x.augmentation.kernel_seed.has_value());
    CHECK(x.augmentation.noise_seed != 0);
    CHECK_FALSE(bit_equal(load_sample(entries[0], cfg, 3, 0).blurry, x.blurry));

    // sharp member: downsampled original cropped at the recorded offset, no noise
    const Tensor small = downsample(load_image(entries[0].sharp), 2);
    CHECK(bit_equal(x.sharp, crop(small, x.augmentation.crop_top, x.augmentation.crop_left, 16, 16)));
  }

  TEST_CASE("noise lands on the blurry member only") {
    TempDir dir("noise");
    write_images(dir.path / "sharp", {"a.png"}, 32, 5);
    write_images(dir.path / "blur", {"a.png"}, 32, 5);
    const auto entries = list_dataset(dir.path);
    PipelineConfig cfg;
    cfg.crop = 16;
    cfg.noise_variance = 0.001;
    const ImagePair p = load_sample(entries[0], cfg, 0, 0);
    CHECK_FALSE(bit_equal(p.blurry, p.sharp));
    cfg.noise_variance = 0;
    const ImagePair q = load_sample(entries[0], cfg, 0, 0);
    CHECK(bit_equal(q.blurry, q.sharp));
    CHECK(bit_equal(q.sharp, p.sharp));
  }

  TEST_CASE("synthetic scenes are in range and have dark pixels") {
    Rng rng(6);
    const Tensor img = synthetic_sharp_image(40, 56, rng);
    CHECK(img.shape() == Shape{1, 3, 40, 56});
    Real lo = 1;
    for (Real v : img.data()) {
      CHECK((v >= 0 && v <= 1));
      lo = std::min(lo, v);
    }
    CHECK(lo == 0);
  }
}
