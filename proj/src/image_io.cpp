#include "deblur/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "deblur/error.hpp"
#include "deblur/image.hpp"

namespace deblur {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

Tensor from_interleaved(const std::uint8_t* rgb, std::size_t h, std::size_t w) {
  std::vector<Real> out(3 * h * w);
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + i] = static_cast<Real>(rgb[3 * i + c]) / Real(255);
  return Tensor({1, 3, h, w}, std::move(out));
}

std::vector<std::uint8_t> to_interleaved(const Tensor& image) {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw DimensionError("save_image: expected (N, 3, H, W), got " + shape_to_string(image.shape()));
  const std::size_t plane = image.dim(2) * image.dim(3);
  std::vector<std::uint8_t> rgb(3 * plane);
  auto src = image.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) rgb[3 * i + c] = quantize8(static_cast<double>(src[c * plane + i]));
  return rgb;
}

Tensor decode_png(const std::vector<std::uint8_t>& bytes, const std::string& label) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  auto fail = [&](bool truncated) -> Tensor {
    const std::string msg = label + ": " + img.message;
    png_image_free(&img);
    if (truncated) throw TruncatedError(msg);
    throw FormatError(msg);
  };
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) return fail(bytes.size() < 33);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    // Header parsed, so a failure while streaming pixel data is almost always a cut-off file.
    return fail(true);
  }
  const std::size_t h = img.height, w = img.width;
  png_image_free(&img);
  return from_interleaved(rgb.data(), h, w);
}

std::vector<std::uint8_t> encode_png(const Tensor& image) {
  const std::vector<std::uint8_t> rgb = to_interleaved(image);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(3));
  img.height = static_cast<png_uint_32>(image.dim(2));
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr))
    throw FormatError(std::string("png encode: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr))
    throw FormatError(std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace

std::uint8_t quantize8(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    if (pos >= bytes.size()) throw TruncatedError(std::string("ppm: missing ") + what);
    if (!std::isdigit(bytes[pos])) throw FormatError(std::string("ppm: bad ") + what);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos++] - '0');
      if (v > (1u << 20)) throw FormatError(std::string("ppm: ") + what + " too large");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("ppm: missing P6 magic");
  pos = 2;
  const std::size_t w = read_int("width");
  const std::size_t h = read_int("height");
  const std::size_t maxval = read_int("maxval");
  if (w == 0 || h == 0) throw FormatError("ppm: zero extent");
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size()) throw TruncatedError("ppm: header ends early");
  if (!std::isspace(bytes[pos])) throw FormatError("ppm: header not terminated by whitespace");
  ++pos;
  const std::size_t need = 3 * w * h;
  if (bytes.size() - pos < need)
    throw TruncatedError("ppm: expected " + std::to_string(need) + " pixel bytes, found " +
                         std::to_string(bytes.size() - pos));
  return from_interleaved(bytes.data() + pos, h, w);
}

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  const std::vector<std::uint8_t> rgb = to_interleaved(image);
  const std::string header = "P6\n" + std::to_string(image.dim(3)) + " " + std::to_string(image.dim(2)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

Tensor load_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature), bytes.begin()))
    return decode_png(bytes, path.string());
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    try {
      return decode_ppm(bytes);
    } catch (const TruncatedError& e) {
      throw TruncatedError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  throw FormatError(path.string() + ": not a PNG or binary PPM file");
}

void save_image(const Tensor& image, const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  const Tensor first = image.dim(0) == 1 ? image : batch_item(image, 0);
  if (ext == ".png") return write_file(path, encode_png(first));
  if (ext == ".ppm") return write_file(path, encode_ppm(first));
  throw FormatError("save_image: unsupported extension '" + ext + "' (use .png or .ppm)");
}

bool is_image_file(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".ppm";
}

}  // namespace deblur
