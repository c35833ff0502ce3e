#include "deblur/image.hpp"

#include <algorithm>
#include <string>

#include "deblur/error.hpp"

namespace deblur {

namespace {
void require_image(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 4) throw DimensionError(std::string(op) + ": expected an NCHW tensor");
}

// Mirror index without repeating the edge sample; period 2 * (n - 1).
std::size_t mirror(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}
}  // namespace

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  require_image(image, "crop");
  const auto& s = image.shape();
  if (top + height > s[2] || left + width > s[3])
    throw DimensionError("crop: window " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                         std::to_string(top) + ", " + std::to_string(left) + ") exceeds " + shape_to_string(s));
  std::vector<Real> out(s[0] * s[1] * height * width);
  auto src = image.data();
  std::size_t o = 0;
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t c = 0; c < s[1]; ++c)
      for (std::size_t y = 0; y < height; ++y) {
        const Real* row = src.data() + nchw_index(s, n, c, top + y, left);
        std::copy_n(row, width, out.data() + o);
        o += width;
      }
  return Tensor({s[0], s[1], height, width}, std::move(out));
}

Tensor reflect_pad(const Tensor& image, std::size_t bottom, std::size_t right) {
  require_image(image, "reflect_pad");
  const auto& s = image.shape();
  const std::size_t h = s[2] + bottom, w = s[3] + right;
  std::vector<Real> out(s[0] * s[1] * h * w);
  auto src = image.data();
  std::size_t o = 0;
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t c = 0; c < s[1]; ++c)
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = mirror(static_cast<long>(y), s[2]);
        for (std::size_t x = 0; x < w; ++x) out[o++] = src[nchw_index(s, n, c, sy, mirror(static_cast<long>(x), s[3]))];
      }
  return Tensor({s[0], s[1], h, w}, std::move(out));
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw DimensionError("stack_batch: no tensors");
  const Shape& first = items.front().shape();
  std::vector<Real> out;
  out.reserve(items.size() * items.front().numel());
  std::size_t batch = 0;
  for (const Tensor& t : items) {
    if (t.rank() != 4 || t.dim(1) != first[1] || t.dim(2) != first[2] || t.dim(3) != first[3])
      throw DimensionError("stack_batch: shape mismatch " + shape_to_string(t.shape()) + " vs " +
                           shape_to_string(first));
    out.insert(out.end(), t.data().begin(), t.data().end());
    batch += t.dim(0);
  }
  return Tensor({batch, first[1], first[2], first[3]}, std::move(out));
}

Tensor batch_item(const Tensor& batch, std::size_t n) {
  require_image(batch, "batch_item");
  if (n >= batch.dim(0)) throw DimensionError("batch_item: index out of range");
  const std::size_t per = batch.numel() / batch.dim(0);
  std::vector<Real> out(batch.data().begin() + static_cast<long>(n * per),
                        batch.data().begin() + static_cast<long>((n + 1) * per));
  return Tensor({1, batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(out));
}

Tensor to_network_range(const Tensor& image01) {
  std::vector<Real> out(image01.data().begin(), image01.data().end());
  for (Real& v : out) v = v * 2 - 1;
  return Tensor(image01.shape(), std::move(out));
}

Tensor from_network_range(const Tensor& image) {
  std::vector<Real> out(image.data().begin(), image.data().end());
  for (Real& v : out) v = std::clamp((v + 1) / 2, Real(0), Real(1));
  return Tensor(image.shape(), std::move(out));
}

}  // namespace deblur
