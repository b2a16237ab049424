#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cxr {

/// Procedural grey textures, one family per class:
///   0 (covid)     horizontal sinusoidal stripes
///   1 (normal)    vertical sinusoidal stripes
///   2 (infection) diagonal sinusoidal stripes
/// with random period, phase, contrast and uniform pixel noise.
std::vector<std::uint8_t> synthetic_texture(std::size_t label, std::size_t width, std::size_t height, std::uint64_t seed);

struct SyntheticCorpus {
  std::array<std::size_t, 3> counts{175, 100, 100};
  std::size_t min_size = 96;
  std::size_t max_size = 160;
  std::uint64_t seed = 0;
};

/// Writes <root>/{covid,normal,infection}/img_NNNN.png. Deterministic in seed.
void write_synthetic_corpus(const std::filesystem::path& root, const SyntheticCorpus& corpus);

}  // namespace cxr
