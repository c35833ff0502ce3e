#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deblur/blur.hpp"
#include "deblur/rng.hpp"
#include "deblur/tensor.hpp"

namespace deblur {

struct AugmentationRecord {
  std::size_t crop_top = 0;
  std::size_t crop_left = 0;
  std::uint64_t noise_seed = 0;    // 0 when no noise was added
  std::optional<std::uint64_t> kernel_seed;  // set when the blur was synthesized
};

/// Aligned (1, 3, H, W) images in [0, 1].
struct ImagePair {
  Tensor blurry;
  Tensor sharp;
  std::string id;
  AugmentationRecord augmentation;
};

/// Crops both members at one shared random offset, recorded in the result.
/// Throws DataError naming the pair if either side is smaller than `size`.
ImagePair random_crop_pair(const ImagePair& pair, std::size_t size, Rng& rng);

struct DatasetEntry {
  std::string id;  // file name shared by blur/ and sharp/
  std::filesystem::path sharp;
  std::optional<std::filesystem::path> blurry;  // absent: blur is synthesized
};

/// Pairs `<root>/blur/*` with `<root>/sharp/*` by file name, sorted by name.
/// Without a blur/ directory every sharp image gets a synthetic blur.
/// Throws DataError listing both unmatched sets when names disagree.
std::vector<DatasetEntry> list_dataset(const std::filesystem::path& root);

struct PipelineConfig {
  std::size_t crop = 64;
  /// Power of two; 1 keeps the native resolution.
  std::size_t downsample_factor = 2;
  double noise_variance = 0;
  /// Arc length of synthesized motion kernels, in px of the full-resolution image.
  double kernel_length = 15;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
};

/// Full per-sample augmentation: load, optional synthetic blur, downsample,
/// crop, optional noise on the blurry member. A pure function of
/// (config.seed, epoch, index).
ImagePair load_sample(const DatasetEntry& entry, const PipelineConfig& config, std::uint64_t epoch,
                      std::size_t index);

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Number of full batches per epoch (the ragged tail is dropped).
std::size_t batches_per_epoch(std::size_t dataset_size, std::size_t batch);

/// Downsamples by a power-of-two factor with repeated 2x2 box averaging.
Tensor downsample(const Tensor& image, std::size_t factor);

/// Procedural sharp test image: colored shapes with hard edges over a smooth
/// background, (1, 3, height, width) in [0, 1].
Tensor synthetic_sharp_image(std::size_t height, std::size_t width, Rng& rng);

}  // namespace deblur
