#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cxr/model_spec.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

inline constexpr int kContainerFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";

struct TensorRecord {
  std::string name;
  Shape shape;
  std::string dtype = "f32";
  std::string file;
  std::uint64_t byte_offset = 0;
};

struct WeightManifest {
  int format_version = kContainerFormatVersion;
  std::vector<TensorRecord> records;
  std::map<std::string, std::string> metadata;
};

/// Named tensors plus free-form string metadata (architecture, provenance).
struct WeightSet {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  const Tensor& get(const std::string& name) const;

  /// Adds every tensor of `other`; names must not collide.
  void merge(const WeightSet& other);
};

WeightSet load_container(const std::filesystem::path& dir);

/// Writes into a sibling staging directory, then renames it over `dir`.
WeightManifest save_container(const WeightSet& set, const std::filesystem::path& dir);

struct ValidationEntry {
  std::string layer;
  std::string tensor;
  Shape expected;
  bool present = false;
  Shape actual;

  bool ok() const { return present && expected == actual; }
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;
  std::vector<std::string> warnings;

  bool passed() const;
  /// One line per failing entry followed by warnings.
  std::string summary() const;
};

ValidationReport validate_against(const ModelSpec& spec, const WeightSet& set, TensorScope scope = TensorScope::kAll);

/// Throws kValidation with the report summary unless the set passes.
void require_valid(const ModelSpec& spec, const WeightSet& set, TensorScope scope = TensorScope::kAll);

}  // namespace cxr
