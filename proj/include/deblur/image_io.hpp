#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deblur/tensor.hpp"

namespace deblur {

/// Reads an RGB image as a (1, 3, H, W) tensor in [0, 1]. The format (PNG or
/// binary PPM) is detected from the file's leading bytes.
/// Throws FormatError for anything else and TruncatedError for short files.
Tensor load_image(const std::filesystem::path& path);

/// Writes batch item 0 of a 3-channel image; the extension picks the format
/// (.png or .ppm). Values are clamped to [0, 1] and quantized round-half-up.
void save_image(const Tensor& image, const std::filesystem::path& path);

/// Round-half-up 8-bit quantization of a [0, 1] value.
std::uint8_t quantize8(double v);

/// In-memory PPM (P6, maxval 255) codec, also used for fixtures.
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Tensor& image);

bool is_image_file(const std::filesystem::path& path);

}  // namespace deblur
