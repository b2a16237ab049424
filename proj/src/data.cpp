#include "cxr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace cxr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image_file(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::size_t floor_share(std::size_t n, double ratio) {
  // The epsilon absorbs products such as 0.7 * 10 = 6.999...
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

std::vector<std::string> paths_of(const std::vector<Sample>& samples) {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.path);
  return out;
}

void sort_by_path(std::vector<Sample>& samples) {
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.path < b.path; });
}

}  // namespace

Sample sample_from_path(const std::string& relative_path) {
  const fs::path rel(relative_path);
  auto it = rel.begin();
  if (it == rel.end()) throw Error(ErrorCode::kInvalidArgument, "empty sample path");
  const std::string class_dir = it->string();
  const auto found = std::find(kClassDirs.begin(), kClassDirs.end(), class_dir);
  if (found == kClassDirs.end()) {
    throw Error(ErrorCode::kInvalidArgument, "sample '" + relative_path + "' is not under a class directory");
  }
  Sample sample;
  sample.path = rel.generic_string();
  sample.label = static_cast<std::size_t>(found - kClassDirs.begin());
  ++it;
  const bool nested = it != rel.end() && std::next(it) != rel.end();
  sample.source = nested ? it->string() : class_dir;
  return sample;
}

DatasetIndex ingest(const fs::path& root) {
  DatasetIndex index;
  index.root = root;
  for (std::size_t label = 0; label < kClassDirs.size(); ++label) {
    const fs::path class_dir = root / kClassDirs[label];
    if (!fs::is_directory(class_dir)) {
      throw Error(ErrorCode::kEmptyClass, "class directory " + class_dir.string() + " does not exist");
    }
    std::vector<Sample> found;
    for (const auto& entry : fs::recursive_directory_iterator(class_dir)) {
      if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
      const std::string rel = fs::relative(entry.path(), root).generic_string();
      try {
        decode_rgb(entry.path());
      } catch (const Error& e) {
        index.warnings.push_back("skipped " + rel + ": " + e.what());
        continue;
      }
      found.push_back(sample_from_path(rel));
    }
    if (found.empty()) {
      throw Error(ErrorCode::kEmptyClass, "class " + kClassDirs[label] + " has no decodable images in " + class_dir.string());
    }
    index.counts[label] = found.size();
    index.samples.insert(index.samples.end(), found.begin(), found.end());
  }
  sort_by_path(index.samples);
  return index;
}

Tensor preprocess(const RgbImage& image, Normalization norm, std::size_t size) {
  Tensor resized = bilinear_resize(to_chw(image), size, size);
  const std::size_t plane = size * size;
  for (std::size_t c = 0; c < 3; ++c) {
    float* p = resized.data().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] / 255.0f - norm.mean[c]) / norm.stddev[c];
  }
  return resized;
}

Tensor preprocess(const fs::path& image_file, Normalization norm, std::size_t size) {
  return preprocess(decode_rgb(image_file), norm, size);
}

SplitRatios parse_ratios(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "cannot parse ratio '" + item + "'");
    }
  }
  if (values.size() != 3) throw Error(ErrorCode::kInvalidArgument, "expected three ratios train,val,test; got '" + text + "'");
  return {values[0], values[1], values[2]};
}

SplitAssignment split(const DatasetIndex& index, SplitRatios ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.val + ratios.test;
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "split ratios must be non-negative and sum to 1");
  }

  SplitAssignment out;
  out.seed = seed;
  out.ratios = ratios;
  Rng rng(seed);
  for (std::size_t label = 0; label < kClassDirs.size(); ++label) {
    std::vector<Sample> members;
    for (const Sample& s : index.samples) {
      if (s.label == label) members.push_back(s);
    }
    if (members.size() < 3) {
      throw Error(ErrorCode::kEmptyClass, "class " + kClassDirs[label] + " needs at least 3 samples to split, has " +
                                              std::to_string(members.size()));
    }
    sort_by_path(members);
    rng.shuffle(members);
    const std::size_t n_val = floor_share(members.size(), ratios.val);
    const std::size_t n_test = floor_share(members.size(), ratios.test);
    for (std::size_t i = 0; i < members.size(); ++i) {
      auto& bucket = i < n_val ? out.val : (i < n_val + n_test ? out.test : out.train);
      bucket.push_back(members[i]);
    }
  }
  sort_by_path(out.train);
  sort_by_path(out.val);
  sort_by_path(out.test);
  return out;
}

std::string split_to_json(const SplitAssignment& split) {
  json doc;
  doc["seed"] = split.seed;
  doc["ratios"] = {split.ratios.train, split.ratios.val, split.ratios.test};
  doc["train"] = paths_of(split.train);
  doc["val"] = paths_of(split.val);
  doc["test"] = paths_of(split.test);
  return doc.dump(2) + "\n";
}

SplitAssignment split_from_json(const std::string& text) {
  SplitAssignment out;
  try {
    const json doc = json::parse(text);
    out.seed = doc.at("seed").get<std::uint64_t>();
    const auto r = doc.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw Error(ErrorCode::kInvalidArgument, "split manifest needs three ratios");
    out.ratios = {r[0], r[1], r[2]};
    for (const std::string& p : doc.at("train").get<std::vector<std::string>>()) out.train.push_back(sample_from_path(p));
    for (const std::string& p : doc.at("val").get<std::vector<std::string>>()) out.val.push_back(sample_from_path(p));
    for (const std::string& p : doc.at("test").get<std::vector<std::string>>()) out.test.push_back(sample_from_path(p));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed split manifest: ") + e.what());
  }
  return out;
}

void save_split(const SplitAssignment& split, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  out << split_to_json(split);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
}

SplitAssignment load_split(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read split manifest " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return split_from_json(buffer.str());
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t count, std::size_t batch_size, std::uint64_t epoch_seed) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be at least 1");
  if (count == 0) throw Error(ErrorCode::kEmptyDataset, "cannot batch an empty sample list");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(epoch_seed);
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

ImageLoader file_loader(fs::path root, Normalization norm) {
  return [root = std::move(root), norm](const Sample& s) { return preprocess(root / s.path, norm); };
}

Tensor one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw Error(ErrorCode::kInvalidArgument, "label " + std::to_string(label) + " outside " + std::to_string(classes) + " classes");
  }
  Tensor out({classes});
  out[label] = 1.0f;
  return out;
}

std::vector<Batch> batches(const std::vector<Sample>& samples, const ImageLoader& loader, std::size_t batch_size,
                           std::uint64_t epoch_seed, std::size_t classes) {
  std::vector<Batch> out;
  for (const auto& indices : batch_plan(samples.size(), batch_size, epoch_seed)) {
    std::vector<float> pixels;
    std::vector<float> labels;
    Shape image_shape;
    for (std::size_t i : indices) {
      const Tensor image = loader(samples[i]);
      if (image_shape.empty()) image_shape = image.shape();
      if (image.shape() != image_shape || image.rank() != 3) {
        throw Error(ErrorCode::kShapeMismatch, "batch image " + samples[i].path + " has shape " + shape_string(image.shape()));
      }
      pixels.insert(pixels.end(), image.values().begin(), image.values().end());
      const Tensor y = one_hot(samples[i].label, classes);
      labels.insert(labels.end(), y.values().begin(), y.values().end());
    }
    const std::size_t b = indices.size();
    out.push_back({Tensor({b, image_shape[0], image_shape[1], image_shape[2]}, std::move(pixels)),
                   Tensor({b, classes}, std::move(labels)), indices});
  }
  return out;
}

}  // namespace cxr
