#include "cxr/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "cxr/error.hpp"

namespace cxr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kBlobFile = "tensors.bin";

std::uint32_t to_little_endian(std::uint32_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
  }
  return bits;
}

WeightManifest parse_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kMissingManifest, "no " + std::string(kManifestFile) + " in " + manifest_path.parent_path().string());

  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, manifest_path.string() + ": " + e.what());
  }

  WeightManifest manifest;
  try {
    manifest.format_version = doc.at("format_version").get<int>();
    if (manifest.format_version != kContainerFormatVersion) {
      throw Error(ErrorCode::kUnknownFormatVersion, manifest_path.string() + " declares format_version " +
                                                        std::to_string(manifest.format_version));
    }
    if (doc.contains("metadata")) manifest.metadata = doc.at("metadata").get<std::map<std::string, std::string>>();
    std::set<std::string> seen;
    for (const json& r : doc.at("records")) {
      TensorRecord record;
      record.name = r.at("name").get<std::string>();
      record.shape = r.at("shape").get<Shape>();
      record.dtype = r.at("dtype").get<std::string>();
      record.file = r.at("file").get<std::string>();
      record.byte_offset = r.at("byte_offset").get<std::uint64_t>();
      if (record.dtype != "f32") {
        throw Error(ErrorCode::kMalformedManifest, "record '" + record.name + "' has dtype " + record.dtype);
      }
      if (!seen.insert(record.name).second) {
        throw Error(ErrorCode::kMalformedManifest, "duplicate record '" + record.name + "'");
      }
      if (fs::path(record.file).is_absolute() || record.file.find("..") != std::string::npos) {
        throw Error(ErrorCode::kMalformedManifest, "record '" + record.name + "' points outside the container");
      }
      manifest.records.push_back(std::move(record));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedManifest, manifest_path.string() + ": " + e.what());
  }
  return manifest;
}

json manifest_json(const WeightManifest& manifest) {
  json records = json::array();
  for (const TensorRecord& r : manifest.records) {
    records.push_back(
        {{"name", r.name}, {"shape", r.shape}, {"dtype", r.dtype}, {"file", r.file}, {"byte_offset", r.byte_offset}});
  }
  return {{"format_version", manifest.format_version}, {"metadata", manifest.metadata}, {"records", records}};
}

}  // namespace

const Tensor& WeightSet::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(ErrorCode::kValidation, "weight set has no tensor '" + name + "'");
  return it->second;
}

void WeightSet::merge(const WeightSet& other) {
  for (const auto& [name, tensor] : other.tensors) {
    if (!tensors.emplace(name, tensor).second) {
      throw Error(ErrorCode::kInvalidArgument, "tensor '" + name + "' present in both weight sets");
    }
  }
  for (const auto& [key, value] : other.metadata) metadata.emplace(key, value);
}

WeightSet load_container(const fs::path& dir) {
  const WeightManifest manifest = parse_manifest(dir / kManifestFile);

  WeightSet set;
  set.metadata = manifest.metadata;
  for (const TensorRecord& record : manifest.records) {
    const fs::path blob = dir / record.file;
    std::ifstream in(blob, std::ios::binary);
    if (!in) throw Error(ErrorCode::kMissingBlob, "record '" + record.name + "' references missing " + blob.string());

    Tensor tensor;
    try {
      tensor = Tensor(record.shape);
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedManifest, "record '" + record.name + "': " + e.what());
    }
    const std::uint64_t needed = record.byte_offset + 4ull * tensor.size();
    const std::uint64_t available = fs::file_size(blob);
    if (available < needed) {
      throw Error(ErrorCode::kTruncatedBlob, "record '" + record.name + "' needs bytes up to " + std::to_string(needed) +
                                                 " but " + blob.string() + " has " + std::to_string(available));
    }

    std::vector<std::uint32_t> raw(tensor.size());
    in.seekg(static_cast<std::streamoff>(record.byte_offset));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (!in) throw Error(ErrorCode::kIo, "failed reading " + blob.string());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const float value = std::bit_cast<float>(to_little_endian(raw[i]));
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::kNonFiniteValue, "record '" + record.name + "' element " + std::to_string(i) + " is not finite");
      }
      tensor[i] = value;
    }
    set.tensors.emplace(record.name, std::move(tensor));
  }
  return set;
}

WeightManifest save_container(const WeightSet& set, const fs::path& dir) {
  const fs::path target = fs::absolute(dir).lexically_normal();
  const fs::path parent = target.parent_path();
  const fs::path staging = parent / (target.filename().string() + ".staging");
  const fs::path retired = parent / (target.filename().string() + ".retired");

  WeightManifest manifest;
  manifest.metadata = set.metadata;
  try {
    fs::create_directories(parent);
    fs::remove_all(staging);
    fs::create_directories(staging);

    std::ofstream blob(staging / kBlobFile, std::ios::binary);
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : set.tensors) {
      manifest.records.push_back({name, tensor.shape(), "f32", kBlobFile, offset});
      for (float v : tensor.data()) {
        const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(v));
        blob.write(reinterpret_cast<const char*>(&bits), 4);
      }
      offset += 4ull * tensor.size();
    }
    blob.close();
    if (!blob) throw Error(ErrorCode::kIo, "failed writing " + (staging / kBlobFile).string());

    std::ofstream out(staging / kManifestFile);
    out << manifest_json(manifest).dump(2) << '\n';
    out.close();
    if (!out) throw Error(ErrorCode::kIo, "failed writing " + (staging / kManifestFile).string());

    fs::remove_all(retired);
    if (fs::exists(target)) fs::rename(target, retired);
    fs::rename(staging, target);
    fs::remove_all(retired);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::kIo, "saving container " + target.string() + ": " + e.what());
  }
  return manifest;
}

bool ValidationReport::passed() const {
  for (const ValidationEntry& e : entries) {
    if (!e.ok()) return false;
  }
  return true;
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const ValidationEntry& e : entries) {
    if (e.ok()) continue;
    out += e.present ? "shape mismatch for '" + e.tensor + "': expected " + shape_string(e.expected) + ", got " +
                           shape_string(e.actual)
                     : "missing tensor '" + e.tensor + "' (" + shape_string(e.expected) + ") for layer " + e.layer;
    out += '\n';
  }
  for (const std::string& w : warnings) out += "warning: " + w + '\n';
  return out;
}

ValidationReport validate_against(const ModelSpec& spec, const WeightSet& set, TensorScope scope) {
  ValidationReport report;
  for (const TensorRequirement& req : spec.required_tensors(scope)) {
    ValidationEntry entry{req.layer, req.name, req.shape, false, {}};
    if (auto it = set.tensors.find(req.name); it != set.tensors.end()) {
      entry.present = true;
      entry.actual = it->second.shape();
    }
    report.entries.push_back(std::move(entry));
  }
  std::set<std::string> known;
  for (const TensorRequirement& req : spec.required_tensors(TensorScope::kAll)) known.insert(req.name);
  for (const auto& [name, tensor] : set.tensors) {
    if (!known.count(name)) report.warnings.push_back("surplus tensor '" + name + "' " + shape_string(tensor.shape()));
  }
  return report;
}

void require_valid(const ModelSpec& spec, const WeightSet& set, TensorScope scope) {
  const ValidationReport report = validate_against(spec, set, scope);
  if (!report.passed()) throw Error(ErrorCode::kValidation, "weights do not match " + spec.arch() + ":\n" + report.summary());
}

}  // namespace cxr
