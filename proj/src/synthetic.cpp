#include "cxr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cxr/data.hpp"
#include "cxr/error.hpp"
#include "cxr/image_io.hpp"
#include "cxr/random.hpp"

namespace cxr {

std::vector<std::uint8_t> synthetic_texture(std::size_t label, std::size_t width, std::size_t height, std::uint64_t seed) {
  if (label > 2) throw Error(ErrorCode::kInvalidArgument, "synthetic textures exist for labels 0..2");
  Rng rng(seed);
  const double two_pi = 2.0 * std::numbers::pi;
  const double period = rng.uniform(8.0, 20.0);
  const double phase_x = rng.uniform(0.0, two_pi);
  const double phase_y = rng.uniform(0.0, two_pi);
  const double contrast = rng.uniform(50.0, 90.0);
  const double base = rng.uniform(100.0, 150.0);

  std::vector<std::uint8_t> pixels(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      const double pattern = label == 0   ? std::sin(two_pi * fy / period + phase_y)
                             : label == 1 ? std::sin(two_pi * fx / period + phase_x)
                                          : std::sin(two_pi * (fx + fy) / (period * std::numbers::sqrt2) + phase_x);
      const double value = base + contrast * pattern + rng.uniform(-20.0, 20.0);
      pixels[y * width + x] = static_cast<std::uint8_t>(std::clamp(std::round(value), 0.0, 255.0));
    }
  }
  return pixels;
}

void write_synthetic_corpus(const std::filesystem::path& root, const SyntheticCorpus& corpus) {
  if (corpus.min_size < 2 || corpus.max_size < corpus.min_size) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic image size range is invalid");
  }
  std::uint64_t stream = 0;
  for (std::size_t label = 0; label < 3; ++label) {
    const std::filesystem::path dir = root / kClassDirs[label];
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < corpus.counts[label]; ++i) {
      Rng rng(derive_seed(corpus.seed, stream++));
      const std::size_t span = corpus.max_size - corpus.min_size + 1;
      const std::size_t w = corpus.min_size + rng.index(span);
      const std::size_t h = corpus.min_size + rng.index(span);
      char name[32];
      std::snprintf(name, sizeof name, "img_%04zu.png", i);
      write_grey_png(dir / name, w, h, synthetic_texture(label, w, h, rng.next()));
    }
  }
}

}  // namespace cxr
