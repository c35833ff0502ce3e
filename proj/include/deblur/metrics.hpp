#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deblur/dataset.hpp"
#include "deblur/networks.hpp"

namespace deblur {

/// Reported for identical inputs, where the ratio is unbounded.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for images in [0, 1]. Throws DimensionError on shape mismatch.
double psnr(const Tensor& a, const Tensor& b);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
/// dynamic range 1, population statistics, averaged over valid window
/// positions of each channel and then over channels and batch items.
/// Throws DimensionError for mismatched shapes or images smaller than 11 px.
double ssim(const Tensor& a, const Tensor& b);

struct ImageScore {
  std::string id;
  double psnr = 0;
  double ssim = 0;
  std::string error;  // non-empty: the image failed and is excluded from the means
};

struct EvalReport {
  std::string checkpoint;
  std::string dataset;
  double noise_variance = 0;
  std::uint64_t seed = 0;
  std::vector<ImageScore> per_image;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::size_t failures = 0;
};

struct EvalConfig {
  std::size_t downsample_factor = 2;
  double noise_variance = 0;
  /// Kernel arc length for sharp-only datasets.
  double kernel_length = 15;
  std::uint64_t seed = 0;
};

/// Restores every pair with `generator` in infer mode and scores it against
/// the sharp image. Per-image failures are recorded, not fatal; an empty
/// dataset or one where every image failed throws DataError.
EvalReport evaluate(Network& generator, const std::vector<DatasetEntry>& entries, const EvalConfig& config);

/// Same protocol with an arbitrary restoration function on [0, 1] images.
using Restorer = std::function<Tensor(const Tensor&)>;
EvalReport evaluate(const Restorer& restore, const std::vector<DatasetEntry>& entries, const EvalConfig& config);

/// The pair as evaluated: downsampled, blur synthesized if needed, noise on the blurry member.
ImagePair evaluation_pair(const DatasetEntry& entry, const EvalConfig& config, std::size_t index);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// One column per labelled model, rows {Original, Noisy} x {PSNR, SSIM}:
///
///   Dataset   Metrics  dc0     dc250
///   Original  PSNR     ...
///
/// `original[i]` and `noisy[i]` are the noise-free and noisy reports for `labels[i]`.
std::string render_table(const std::vector<std::string>& labels, const std::vector<EvalReport>& original,
                         const std::vector<EvalReport>& noisy);

}  // namespace deblur
