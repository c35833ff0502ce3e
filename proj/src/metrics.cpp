#include "deblur/metrics.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "deblur/error.hpp"
#include "deblur/image_io.hpp"

namespace deblur {

namespace {

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

enum StreamTag : std::uint64_t { kEvalKernel = 11, kEvalNoise };

std::array<double, 2 * kSsimRadius + 1> gaussian_taps() {
  std::array<double, 2 * kSsimRadius + 1> g{};
  double total = 0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    g[i + kSsimRadius] = std::exp(-(i * i) / (2 * kSsimSigma * kSsimSigma));
    total += g[i + kSsimRadius];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-position separable Gaussian filter of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w) {
  static const auto g = gaussian_taps();
  const std::size_t k = g.size(), ow = w - k + 1, oh = h - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += g[t] * plane[y * w + x + t];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t t = 0; t < k; ++t) acc += g[t] * rows[(y + t) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

double ssim_plane(const Real* a, const Real* b, std::size_t h, std::size_t w) {
  const std::size_t n = h * w;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(a[i]);
    y[i] = static_cast<double>(b[i]);
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w), my = filter_valid(y, h, w);
  const auto mxx = filter_valid(xx, h, w), myy = filter_valid(yy, h, w), mxy = filter_valid(xy, h, w);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cxy = mxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + kC1) * (2 * cxy + kC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
  }
  return total / static_cast<double>(mx.size());
}

void finish_means(EvalReport& report) {
  double p = 0, s = 0;
  std::size_t ok = 0;
  report.failures = 0;
  for (const ImageScore& row : report.per_image) {
    if (!row.error.empty()) {
      ++report.failures;
      continue;
    }
    p += row.psnr;
    s += row.ssim;
    ++ok;
  }
  if (ok == 0) throw DataError("evaluation: every image failed");
  report.mean_psnr = p / static_cast<double>(ok);
  report.mean_ssim = s / static_cast<double>(ok);
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("psnr: shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  double sum = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.numel());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10 * std::log10(1 / mse));
}

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("ssim: shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  if (a.rank() != 4) throw DimensionError("ssim: expected an NCHW image");
  const std::size_t h = a.dim(2), w = a.dim(3);
  constexpr std::size_t kWindow = 2 * kSsimRadius + 1;
  if (h < kWindow || w < kWindow)
    throw DimensionError("ssim: images must be at least 11x11, got " + std::to_string(h) + "x" + std::to_string(w));
  const std::size_t planes = a.dim(0) * a.dim(1);
  double total = 0;
  for (std::size_t p = 0; p < planes; ++p)
    total += ssim_plane(a.data().data() + p * h * w, b.data().data() + p * h * w, h, w);
  return total / static_cast<double>(planes);
}

ImagePair evaluation_pair(const DatasetEntry& entry, const EvalConfig& config, std::size_t index) {
  ImagePair pair;
  pair.id = entry.id;
  pair.sharp = load_image(entry.sharp);
  if (entry.blurry) {
    pair.blurry = load_image(*entry.blurry);
  } else {
    const std::uint64_t seed = derive_seed(config.seed, {kEvalKernel, index});
    Rng rng(seed);
    pair.blurry = apply_blur(pair.sharp, random_motion_kernel(config.kernel_length, rng));
    pair.augmentation.kernel_seed = seed;
  }
  if (pair.blurry.shape() != pair.sharp.shape())
    throw DataError("pair '" + entry.id + "': blurry and sharp sizes differ");
  pair.sharp = downsample(pair.sharp, config.downsample_factor);
  pair.blurry = downsample(pair.blurry, config.downsample_factor);
  if (config.noise_variance > 0) {
    pair.augmentation.noise_seed = derive_seed(config.seed, {kEvalNoise, index});
    Rng rng(pair.augmentation.noise_seed);
    pair.blurry = add_gaussian_noise(pair.blurry, config.noise_variance, rng);
  }
  return pair;
}

EvalReport evaluate(const Restorer& restore, const std::vector<DatasetEntry>& entries, const EvalConfig& config) {
  if (entries.empty()) throw DataError("evaluation: empty dataset");
  EvalReport report;
  report.noise_variance = config.noise_variance;
  report.seed = config.seed;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ImageScore row;
    row.id = entries[i].id;
    try {
      const ImagePair pair = evaluation_pair(entries[i], config, i);
      const Tensor restored = restore(pair.blurry);
      row.psnr = psnr(restored, pair.sharp);
      row.ssim = ssim(restored, pair.sharp);
    } catch (const Error& e) {
      row.error = e.what();
    }
    report.per_image.push_back(std::move(row));
  }
  finish_means(report);
  return report;
}

EvalReport evaluate(Network& generator, const std::vector<DatasetEntry>& entries, const EvalConfig& config) {
  return evaluate([&](const Tensor& blurry) { return deblur_image(generator, blurry); }, entries, config);
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["checkpoint"] = report.checkpoint;
  j["dataset"] = report.dataset;
  j["noise_variance"] = report.noise_variance;
  j["seed"] = report.seed;
  j["mean_psnr"] = report.mean_psnr;
  j["mean_ssim"] = report.mean_ssim;
  j["failures"] = report.failures;
  auto& rows = j["per_image"] = nlohmann::ordered_json::array();
  for (const ImageScore& r : report.per_image) {
    nlohmann::ordered_json row{{"id", r.id}};
    if (r.error.empty()) {
      row["psnr"] = r.psnr;
      row["ssim"] = r.ssim;
    } else {
      row["error"] = r.error;
    }
    rows.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.noise_variance = j.at("noise_variance").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.mean_psnr = j.at("mean_psnr").get<double>();
    r.mean_ssim = j.at("mean_ssim").get<double>();
    r.failures = j.at("failures").get<std::size_t>();
    for (const auto& row : j.at("per_image")) {
      ImageScore s;
      s.id = row.at("id").get<std::string>();
      if (row.contains("error")) {
        s.error = row["error"].get<std::string>();
      } else {
        s.psnr = row.at("psnr").get<double>();
        s.ssim = row.at("ssim").get<double>();
      }
      r.per_image.push_back(std::move(s));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("evaluation report: ") + e.what());
  }
}

std::string render_table(const std::vector<std::string>& labels, const std::vector<EvalReport>& original,
                         const std::vector<EvalReport>& noisy) {
  if (original.size() != labels.size() || noisy.size() != labels.size())
    throw ConfigError("render_table: one original and one noisy report per label");
  std::ostringstream os;
  os << std::left << std::setw(10) << "Dataset" << std::setw(9) << "Metrics";
  for (const auto& l : labels) os << std::setw(10) << l;
  os << "\n";
  auto row = [&](const char* dataset, const char* metric, const std::vector<EvalReport>& reports, bool is_psnr) {
    os << std::setw(10) << dataset << std::setw(9) << metric;
    for (const EvalReport& r : reports) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(is_psnr ? 2 : 4) << (is_psnr ? r.mean_psnr : r.mean_ssim);
      os << std::setw(10) << cell.str();
    }
    os << "\n";
  };
  row("Original", "PSNR", original, true);
  row("", "SSIM", original, false);
  row("Noisy", "PSNR", noisy, true);
  row("", "SSIM", noisy, false);
  return os.str();
}

}  // namespace deblur
