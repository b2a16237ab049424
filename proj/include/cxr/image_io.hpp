#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cxr/tensor.hpp"

namespace cxr {

/// 8-bit interleaved RGB, row-major (height, width, 3).
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Decodes PNG/JPEG and forces three channels: grey is replicated, alpha
/// dropped, 16-bit samples reduced to 8 bits. Throws kDecode.
RgbImage decode_rgb(const std::filesystem::path& path);

/// PNG writers; throw kIo on failure.
void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_grey_png(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& grey);

/// [3, H, W] float tensor holding raw 0..255 values.
Tensor to_chw(const RgbImage& image);

}  // namespace cxr
