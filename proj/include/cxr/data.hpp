#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cxr/image_io.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

/// Class directories in label order: 0 = COVID, 1 = NORMAL, 2 = INFECTION.
inline const std::array<std::string, 3> kClassDirs = {"covid", "normal", "infection"};

struct Sample {
  /// Relative to the dataset root, '/'-separated (e.g. "covid/a.png").
  std::string path;
  std::size_t label = 0;
  /// Origin tag: the sub-directory under the class directory, or the class
  /// directory itself for flat layouts.
  std::string source;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<Sample> samples;
  std::array<std::size_t, 3> counts{};
  std::vector<std::string> warnings;
};

/// Scans <root>/{covid,normal,infection} recursively for .png/.jpg/.jpeg.
/// Undecodable files become warnings; an empty class directory is an error.
DatasetIndex ingest(const std::filesystem::path& root);

/// Builds the sample for a relative path, taking the label from its first component.
Sample sample_from_path(const std::string& relative_path);

struct Normalization {
  std::array<float, 3> mean;
  std::array<float, 3> stddev;

  static Normalization imagenet() { return {{0.485f, 0.456f, 0.406f}, {0.229f, 0.224f, 0.225f}}; }
  /// Plain scaling to [0, 1].
  static Normalization unit() { return {{0.0f, 0.0f, 0.0f}, {1.0f, 1.0f, 1.0f}}; }
};

inline constexpr std::size_t kInputSize = 237;

/// Decode -> RGB -> bilinear resize -> /255 -> (x - mean) / std.
Tensor preprocess(const std::filesystem::path& image_file, Normalization norm = Normalization::imagenet(),
                  std::size_t size = kInputSize);
Tensor preprocess(const RgbImage& image, Normalization norm = Normalization::imagenet(), std::size_t size = kInputSize);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

SplitRatios parse_ratios(const std::string& text);

struct SplitAssignment {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// Per class, in label order and one generator seeded with `seed`: shuffle
/// the path-sorted samples (Rng::shuffle), take floor(n * val) for val, the
/// next floor(n * test) for test, the rest for train. Each subset is then
/// sorted by path.
SplitAssignment split(const DatasetIndex& index, SplitRatios ratios = {}, std::uint64_t seed = 0);

/// JSON: {"seed", "ratios": [train, val, test], "train": [...], "val": [...], "test": [...]}.
std::string split_to_json(const SplitAssignment& split);
SplitAssignment split_from_json(const std::string& text);
void save_split(const SplitAssignment& split, const std::filesystem::path& file);
SplitAssignment load_split(const std::filesystem::path& file);

/// Shuffled index batches for one epoch; the final partial batch is kept.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t count, std::size_t batch_size, std::uint64_t epoch_seed);

struct Batch {
  Tensor images;  // [B, 3, H, W]
  Tensor onehot;  // [B, classes]
  std::vector<std::size_t> indices;
};

using ImageLoader = std::function<Tensor(const Sample&)>;

/// Loads `<root>/<path>` through preprocess() with the given normalization.
ImageLoader file_loader(std::filesystem::path root, Normalization norm = Normalization::imagenet());

Tensor one_hot(std::size_t label, std::size_t classes);

std::vector<Batch> batches(const std::vector<Sample>& samples, const ImageLoader& loader, std::size_t batch_size = 15,
                           std::uint64_t epoch_seed = 0, std::size_t classes = 3);

}  // namespace cxr
