#include "deblur/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "deblur/error.hpp"
#include "deblur/image.hpp"
#include "deblur/image_io.hpp"

namespace deblur {

namespace {

enum StreamTag : std::uint64_t { kShuffle = 1, kKernel, kCrop, kNoise };

std::map<std::string, std::filesystem::path> image_files(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) files.emplace(e.path().filename().string(), e.path());
  return files;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out.empty() ? "(none)" : out;
}

}  // namespace

ImagePair random_crop_pair(const ImagePair& pair, std::size_t size, Rng& rng) {
  if (pair.blurry.shape() != pair.sharp.shape())
    throw DataError("pair '" + pair.id + "': blurry " + shape_to_string(pair.blurry.shape()) + " and sharp " +
                    shape_to_string(pair.sharp.shape()) + " differ");
  const std::size_t h = pair.sharp.dim(2), w = pair.sharp.dim(3);
  if (h < size || w < size)
    throw DataError("pair '" + pair.id + "': " + std::to_string(h) + "x" + std::to_string(w) +
                    " is smaller than crop " + std::to_string(size));
  std::uniform_int_distribution<std::size_t> top(0, h - size), left(0, w - size);
  ImagePair out = pair;
  out.augmentation.crop_top = top(rng);
  out.augmentation.crop_left = left(rng);
  out.blurry = crop(pair.blurry, out.augmentation.crop_top, out.augmentation.crop_left, size, size);
  out.sharp = crop(pair.sharp, out.augmentation.crop_top, out.augmentation.crop_left, size, size);
  return out;
}

std::vector<DatasetEntry> list_dataset(const std::filesystem::path& root) {
  const auto sharp_dir = root / "sharp";
  const auto blur_dir = root / "blur";
  if (!std::filesystem::is_directory(sharp_dir)) throw DataError("missing directory " + sharp_dir.string());
  const auto sharp = image_files(sharp_dir);
  std::vector<DatasetEntry> entries;
  if (!std::filesystem::is_directory(blur_dir)) {
    for (const auto& [name, path] : sharp) entries.push_back({name, path, std::nullopt});
    return entries;
  }
  const auto blur = image_files(blur_dir);
  std::vector<std::string> only_sharp, only_blur;
  for (const auto& [name, path] : sharp)
    if (!blur.contains(name)) only_sharp.push_back(name);
  for (const auto& [name, path] : blur)
    if (!sharp.contains(name)) only_blur.push_back(name);
  if (!only_sharp.empty() || !only_blur.empty())
    throw DataError("unmatched file names under " + root.string() + ": sharp only [" + join_names(only_sharp) +
                    "], blur only [" + join_names(only_blur) + "]");
  for (const auto& [name, path] : sharp) entries.push_back({name, path, blur.at(name)});
  return entries;
}

Tensor downsample(const Tensor& image, std::size_t factor) {
  if (factor == 0 || (factor & (factor - 1)) != 0)
    throw ConfigError("downsample factor must be a power of two, got " + std::to_string(factor));
  Tensor out = image;
  for (std::size_t f = factor; f > 1; f /= 2) out = downsample2(out);
  return out;
}

ImagePair load_sample(const DatasetEntry& entry, const PipelineConfig& config, std::uint64_t epoch,
                      std::size_t index) {
  ImagePair pair;
  pair.id = entry.id;
  pair.sharp = load_image(entry.sharp);
  if (entry.blurry) {
    pair.blurry = load_image(*entry.blurry);
    if (pair.blurry.shape() != pair.sharp.shape())
      throw DataError("pair '" + entry.id + "': blurry " + shape_to_string(pair.blurry.shape()) + " and sharp " +
                      shape_to_string(pair.sharp.shape()) + " differ");
  } else {
    const std::uint64_t kernel_seed = derive_seed(config.seed, {kKernel, epoch, index});
    Rng rng(kernel_seed);
    pair.blurry = apply_blur(pair.sharp, random_motion_kernel(config.kernel_length, rng));
    pair.augmentation.kernel_seed = kernel_seed;
  }
  pair.sharp = downsample(pair.sharp, config.downsample_factor);
  pair.blurry = downsample(pair.blurry, config.downsample_factor);
  Rng crop_rng = make_rng(config.seed, {kCrop, epoch, index});
  pair = random_crop_pair(pair, config.crop, crop_rng);
  if (config.noise_variance > 0) {
    pair.augmentation.noise_seed = derive_seed(config.seed, {kNoise, epoch, index});
    Rng noise_rng(pair.augmentation.noise_seed);
    pair.blurry = add_gaussian_noise(pair.blurry, config.noise_variance, noise_rng);
  }
  return pair;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed ^ epoch, {kShuffle});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::size_t batches_per_epoch(std::size_t dataset_size, std::size_t batch) {
  if (batch == 0) throw ConfigError("batch must be >= 1");
  return dataset_size / batch;
}

Tensor synthetic_sharp_image(std::size_t height, std::size_t width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t plane = height * width;
  std::vector<Real> img(3 * plane);

  // Bright smooth background: every channel stays well above zero.
  double base[3], slope_y[3], slope_x[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.45 + 0.35 * u(rng);
    slope_y[c] = 0.2 * (u(rng) - 0.5);
    slope_x[c] = 0.2 * (u(rng) - 0.5);
  }
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double fy = static_cast<double>(y) / static_cast<double>(height);
      const double fx = static_cast<double>(x) / static_cast<double>(width);
      for (int c = 0; c < 3; ++c)
        img[c * plane + y * width + x] = static_cast<Real>(std::clamp(base[c] + slope_y[c] * fy + slope_x[c] * fx, 0.0, 1.0));
    }

  // Saturated shapes: one channel at zero, like colorful or shadowed objects.
  const int shapes = 4 + static_cast<int>(u(rng) * 6);
  const double scale = static_cast<double>(std::min(height, width));
  for (int s = 0; s < shapes; ++s) {
    double color[3];
    const int dark = static_cast<int>(u(rng) * 3);
    for (int c = 0; c < 3; ++c) color[c] = c == dark ? 0.0 : (u(rng) < 0.5 ? 0.1 * u(rng) : 0.6 + 0.4 * u(rng));
    const double cy = u(rng) * static_cast<double>(height), cx = u(rng) * static_cast<double>(width);
    const double ry = scale * (0.05 + 0.15 * u(rng)), rx = scale * (0.05 + 0.15 * u(rng));
    const bool disk = u(rng) < 0.5;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
        const bool inside = disk ? dy * dy + dx * dx <= 1 : std::abs(dy) <= 1 && std::abs(dx) <= 1;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img[c * plane + y * width + x] = static_cast<Real>(color[c]);
      }
  }
  return Tensor({1, 3, height, width}, std::move(img));
}

}  // namespace deblur
