#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "cxr/error.hpp"
#include "cxr/model_spec.hpp"
#include "cxr/weights.hpp"
#include "test_util.hpp"

namespace cxr {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

void write_bytes(const fs::path& file, const std::vector<float>& values) {
  std::ofstream out(file, std::ios::binary);
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>(bits >> 24)};
    out.write(bytes, 4);
  }
}

void write_manifest(const fs::path& dir, const std::string& records, int version = 1) {
  std::ofstream(dir / "manifest.json") << R"({"format_version": )" << version
                                       << R"(, "metadata": {"source": "hand"}, "records": [)" << records << "]}";
}

ErrorCode load_error(const fs::path& dir) {
  try {
    load_container(dir);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "load_container succeeded unexpectedly";
  return ErrorCode::kInvalidArgument;
}

TEST(ContainerTest, LoadsHandBuiltContainer) {
  TempDir dir("weights_hand");
  write_bytes(dir / "a.bin", {1.0f, 2.0f});
  write_manifest(dir.path(), R"({"name": "t", "shape": [2], "dtype": "f32", "file": "a.bin", "byte_offset": 0})");
  const WeightSet set = load_container(dir.path());
  ASSERT_EQ(set.tensors.size(), 1u);
  EXPECT_EQ(set.get("t").values(), (std::vector<float>{1.0f, 2.0f}));
  EXPECT_EQ(set.metadata.at("source"), "hand");
}

TEST(ContainerTest, HonoursByteOffsets) {
  TempDir dir("weights_offset");
  write_bytes(dir / "a.bin", {9.0f, 1.0f, 2.0f, 3.0f});
  write_manifest(dir.path(), R"({"name": "t", "shape": [1, 3], "dtype": "f32", "file": "a.bin", "byte_offset": 4})");
  EXPECT_EQ(load_container(dir.path()).get("t").values(), (std::vector<float>{1, 2, 3}));
}

TEST(ContainerTest, DistinctErrors) {
  {
    TempDir dir("weights_nomanifest");
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kMissingManifest);
  }
  {
    TempDir dir("weights_version");
    write_manifest(dir.path(), "", 2);
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kUnknownFormatVersion);
  }
  {
    TempDir dir("weights_missing");
    write_manifest(dir.path(), R"({"name": "t", "shape": [2], "dtype": "f32", "file": "gone.bin", "byte_offset": 0})");
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kMissingBlob);
  }
  {
    TempDir dir("weights_truncated");
    write_bytes(dir / "a.bin", {1.0f});
    write_manifest(dir.path(), R"({"name": "t", "shape": [2], "dtype": "f32", "file": "a.bin", "byte_offset": 0})");
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kTruncatedBlob);
  }
  {
    TempDir dir("weights_nan");
    write_bytes(dir / "a.bin", {1.0f, std::numeric_limits<float>::quiet_NaN()});
    write_manifest(dir.path(), R"({"name": "t", "shape": [2], "dtype": "f32", "file": "a.bin", "byte_offset": 0})");
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kNonFiniteValue);
  }
  {
    TempDir dir("weights_inf");
    write_bytes(dir / "a.bin", {std::numeric_limits<float>::infinity()});
    write_manifest(dir.path(), R"({"name": "t", "shape": [1], "dtype": "f32", "file": "a.bin", "byte_offset": 0})");
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kNonFiniteValue);
  }
  {
    TempDir dir("weights_dup");
    write_bytes(dir / "a.bin", {1.0f});
    write_manifest(dir.path(), R"({"name": "t", "shape": [1], "dtype": "f32", "file": "a.bin", "byte_offset": 0},
                                  {"name": "t", "shape": [1], "dtype": "f32", "file": "a.bin", "byte_offset": 0})");
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kMalformedManifest);
  }
  {
    TempDir dir("weights_garbage");
    std::ofstream(dir / "manifest.json") << "{not json";
    EXPECT_EQ(load_error(dir.path()), ErrorCode::kMalformedManifest);
  }
}

TEST(ContainerTest, RoundTripIsBitExact) {
  std::mt19937 gen(21);
  for (int trial = 0; trial < 10; ++trial) {
    WeightSet set;
    std::uniform_int_distribution<std::size_t> extent(1, 5);
    const int count = 1 + trial % 4;
    for (int i = 0; i < count; ++i) {
      Shape shape;
      for (std::size_t r = 0, rank = 1 + extent(gen) % 4; r < rank; ++r) shape.push_back(extent(gen));
      Tensor t = testing::random_tensor(shape, gen, -1e6f, 1e6f);
      t[0] = -0.0f;  // sign of zero must survive too
      set.tensors.emplace("layer" + std::to_string(i) + ".weight", std::move(t));
    }
    set.metadata["trial"] = std::to_string(trial);

    TempDir dir("weights_roundtrip");
    save_container(set, dir / "c");
    const WeightSet back = load_container(dir / "c");
    ASSERT_EQ(back.tensors.size(), set.tensors.size());
    for (const auto& [name, tensor] : set.tensors) {
      const Tensor& other = back.get(name);
      ASSERT_EQ(other.shape(), tensor.shape());
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        ASSERT_EQ(std::bit_cast<std::uint32_t>(other[i]), std::bit_cast<std::uint32_t>(tensor[i]));
      }
    }
    EXPECT_EQ(back.metadata, set.metadata);
  }
}

TEST(ContainerTest, EmptySetAndOverwrite) {
  TempDir dir("weights_empty");
  const WeightManifest manifest = save_container(WeightSet{}, dir / "c");
  EXPECT_TRUE(manifest.records.empty());
  EXPECT_TRUE(load_container(dir / "c").tensors.empty());

  WeightSet one;
  one.tensors.emplace("x", Tensor::vector({4, 5}));
  std::ofstream(dir / "c" / "stale.bin") << "old";
  save_container(one, dir / "c");
  EXPECT_EQ(load_container(dir / "c").get("x").values(), (std::vector<float>{4, 5}));
  EXPECT_FALSE(fs::exists(dir / "c" / "stale.bin"));
  EXPECT_FALSE(fs::exists(dir / "c.staging"));
  EXPECT_FALSE(fs::exists(dir / "c.retired"));
}

WeightSet complete_set(const ModelSpec& spec) {
  WeightSet set;
  for (const TensorRequirement& req : spec.required_tensors()) set.tensors.emplace(req.name, Tensor(req.shape));
  return set;
}

TEST(ValidateTest, CompleteVgg16Passes) {
  const ModelSpec spec = build_vgg16(3);
  const ValidationReport report = validate_against(spec, complete_set(spec));
  EXPECT_TRUE(report.passed());
  EXPECT_TRUE(report.warnings.empty());
  EXPECT_EQ(report.entries.front().tensor, "block1.conv1.weight");
  EXPECT_EQ(report.entries.front().expected, (Shape{64, 3, 3, 3}));
  EXPECT_EQ(report.entries.size(), 2u * (13 + 2));
}

TEST(ValidateTest, MissingBiasFailsByName) {
  const ModelSpec spec = build_vgg16(3);
  WeightSet set = complete_set(spec);
  set.tensors.erase("block3.conv2.bias");
  const ValidationReport report = validate_against(spec, set);
  EXPECT_FALSE(report.passed());
  EXPECT_NE(report.summary().find("block3.conv2.bias"), std::string::npos);
  EXPECT_THROW(require_valid(spec, set), Error);
}

TEST(ValidateTest, WrongShapeFails) {
  const ModelSpec spec = build_vgg16_small(3);
  WeightSet set = complete_set(spec);
  set.tensors["head.dense2.weight"] = Tensor({4, 32});
  const ValidationReport report = validate_against(spec, set);
  EXPECT_FALSE(report.passed());
  EXPECT_NE(report.summary().find("head.dense2.weight"), std::string::npos);
}

TEST(ValidateTest, SurplusTensorIsAWarning) {
  const ModelSpec spec = build_vgg16_small(3);
  WeightSet set = complete_set(spec);
  set.tensors.emplace("unused", Tensor({1}));
  const ValidationReport report = validate_against(spec, set);
  EXPECT_TRUE(report.passed());
  ASSERT_EQ(report.warnings.size(), 1u);
  EXPECT_NE(report.warnings[0].find("unused"), std::string::npos);
}

TEST(ValidateTest, ScopesSelectBackboneOrHead) {
  const ModelSpec spec = build_vgg16_small(3);
  WeightSet set;
  for (const TensorRequirement& req : spec.required_tensors(TensorScope::kBackbone)) {
    set.tensors.emplace(req.name, Tensor(req.shape));
  }
  EXPECT_TRUE(validate_against(spec, set, TensorScope::kBackbone).passed());
  EXPECT_FALSE(validate_against(spec, set, TensorScope::kHead).passed());
  EXPECT_FALSE(validate_against(spec, set).passed());
}

}  // namespace
}  // namespace cxr
