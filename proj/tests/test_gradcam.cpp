#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cxr/data.hpp"
#include "cxr/error.hpp"
#include "cxr/gradcam.hpp"
#include "cxr/image_io.hpp"
#include "test_util.hpp"

namespace cxr {
namespace {

using testing::rel_error;

ModelSpec cam_spec(std::vector<std::vector<std::size_t>> blocks = {{4}, {6}}) {
  VggConfig config;
  config.arch = "cam";
  config.input_size = 16;
  config.blocks = std::move(blocks);
  config.hidden_units = 8;
  config.class_names = default_class_names(3);
  return build_vgg(config);
}

WeightSet random_weights(const ModelSpec& spec, std::uint64_t seed) {
  WeightSet w = init_backbone(spec, seed);
  w.merge(init_head(spec, seed + 1));
  std::mt19937 gen(static_cast<unsigned>(seed));
  std::uniform_real_distribution<float> bias(-0.1f, 0.1f);
  for (auto& [name, t] : w.tensors) {
    if (name.ends_with(".bias")) {
      for (float& v : t.data()) v = bias(gen);
    }
  }
  return w;
}

/// Trace built directly from a chosen last-conv activation.
ForwardTrace trace_from_activation(const ModelSpec& spec, const WeightSet& w, const Tensor& activation) {
  ForwardTrace trace;
  trace.last_conv_activation = activation;
  auto [pooled, indices] = maxpool2d(activation);
  trace.backbone_features = pooled;
  trace.pool_indices = indices;
  const HeadOutput out = head_forward(spec, w, pooled);
  trace.logits = out.logits;
  trace.probs = out.probs;
  return trace;
}

Tensor random_image(std::mt19937& gen) { return testing::random_tensor({3, 16, 16}, gen, -2.0f, 2.0f); }

void scale_row(WeightSet& w, std::size_t row, float c) {
  Tensor& w2 = w.tensors.at("head.dense2.weight");
  const std::size_t width = w2.dim(1);
  for (std::size_t j = 0; j < width; ++j) w2[row * width + j] *= c;
  w.tensors.at("head.dense2.bias")[row] *= c;
}

TEST(GradCamTest, ZeroTargetRowGivesZeroMap) {
  const ModelSpec spec = cam_spec();
  WeightSet w = random_weights(spec, 3);
  scale_row(w, 1, 0.0f);
  std::mt19937 gen(1);
  const CamResult cam = grad_cam(spec, w, random_image(gen), 1);
  EXPECT_EQ(cam.class_index, 1u);
  for (float a : cam.alpha.values()) EXPECT_EQ(a, 0.0f);
  for (float v : cam.raw_map.values()) EXPECT_EQ(v, 0.0f);
  ASSERT_EQ(cam.heatmap.shape(), (Shape{16, 16}));
  for (float v : cam.heatmap.values()) EXPECT_EQ(v, 0.0f);
}

TEST(GradCamTest, PowerOfTwoRescaleIsBitIdentical) {
  const ModelSpec spec = cam_spec();
  std::mt19937 gen(2);
  for (int trial = 0; trial < 10; ++trial) {
    const WeightSet w = random_weights(spec, 10 + trial);
    const Tensor image = random_image(gen);
    const std::size_t target = trial % 3;
    const CamResult base = grad_cam(spec, w, image, target);
    for (float c : {2.0f, 0.5f, 8.0f, 0.125f}) {
      WeightSet scaled = w;
      scale_row(scaled, target, c);
      const CamResult cam = grad_cam(spec, scaled, image, target);
      EXPECT_EQ(cam.heatmap, base.heatmap) << "c = " << c;
      for (std::size_t k = 0; k < base.alpha.size(); ++k) EXPECT_EQ(cam.alpha[k], c * base.alpha[k]);
    }
  }
}

TEST(GradCamTest, GeneralRescaleAgreesClosely) {
  const ModelSpec spec = cam_spec();
  std::mt19937 gen(4);
  for (int trial = 0; trial < 10; ++trial) {
    const WeightSet w = random_weights(spec, 40 + trial);
    const Tensor image = random_image(gen);
    const CamResult base = grad_cam(spec, w, image, 0);
    for (float c : {3.0f, 0.3f, 17.5f}) {
      WeightSet scaled = w;
      scale_row(scaled, 0, c);
      const CamResult cam = grad_cam(spec, scaled, image, 0);
      for (std::size_t i = 0; i < base.heatmap.size(); ++i) ASSERT_NEAR(cam.heatmap[i], base.heatmap[i], 1e-5);
    }
  }
}

TEST(GradCamTest, DefaultTargetIsArgmax) {
  const ModelSpec spec = cam_spec();
  std::mt19937 gen(5);
  for (int trial = 0; trial < 5; ++trial) {
    const WeightSet w = random_weights(spec, 60 + trial);
    const Tensor image = random_image(gen);
    const CamResult implicit = grad_cam(spec, w, image);
    const std::size_t top = argmax(forward(spec, w, image, false).probs.data());
    EXPECT_EQ(implicit.class_index, top);
    const CamResult explicit_cam = grad_cam(spec, w, image, top);
    EXPECT_EQ(implicit.heatmap, explicit_cam.heatmap);
    EXPECT_EQ(implicit.alpha, explicit_cam.alpha);
  }
}

TEST(GradCamTest, AlphaMatchesChannelFiniteDifferences) {
  const ModelSpec spec = cam_spec();
  const Shape a_shape = spec.last_conv_shape();
  const std::size_t channels = a_shape[0], h = a_shape[1], w = a_shape[2], plane = h * w;
  std::mt19937 gen(6);
  int checked = 0;
  for (int trial = 0; checked < 50 && trial < 500; ++trial) {
    const WeightSet weights = random_weights(spec, 100 + trial);
    const testing::RefHead ref = testing::RefHead::from(weights);
    const Tensor activation = testing::random_tensor(a_shape, gen, 0.0f, 2.0f);
    std::vector<double> a = testing::to_double(activation);

    // Skip cases where a 1e-3 shift could flip a hidden ReLU.
    const std::vector<double> z = ref.hidden_pre(testing::reference_pool(a, channels, h, w));
    if (std::any_of(z.begin(), z.end(), [](double v) { return std::abs(v) < 0.05; })) continue;
    ++checked;

    const std::size_t target = trial % 3;
    const CamResult cam = grad_cam_from_trace(spec, weights, trace_from_activation(spec, weights, activation), target);
    for (std::size_t k = 0; k < channels; ++k) {
      auto score = [&](double shift) {
        std::vector<double> moved = a;
        for (std::size_t i = 0; i < plane; ++i) moved[k * plane + i] += shift;
        return ref.logits(testing::reference_pool(moved, channels, h, w))[target];
      };
      const double eps = 1e-3;
      const double fd = (score(eps) - score(-eps)) / (2 * eps) / static_cast<double>(plane);
      EXPECT_LT(rel_error(cam.alpha[k], fd, 1e-5), 1e-2) << "trial " << trial << " channel " << k;
    }
  }
  EXPECT_EQ(checked, 50);
}

TEST(GradCamTest, HeatmapRangeOnRandomInputs) {
  const ModelSpec spec = cam_spec();
  std::mt19937 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const WeightSet w = random_weights(spec, 200 + trial);
    const CamResult cam = grad_cam(spec, w, random_image(gen), trial % 3);
    float peak = 0.0f;
    for (float v : cam.raw_map.values()) EXPECT_GE(v, 0.0f);
    for (float v : cam.heatmap.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
      peak = std::max(peak, v);
    }
    EXPECT_TRUE(peak == 0.0f || peak == 1.0f);
    EXPECT_EQ(cam.raw_map.shape(), (Shape{8, 8}));
  }
}

TEST(GradCamTest, SingleChannelFollowsActivation) {
  const ModelSpec spec = cam_spec({{1}});
  WeightSet w = init_backbone(spec, 1);
  w.merge(init_head(spec, 2));
  for (const char* name : {"head.dense1.weight", "head.dense1.bias", "head.dense2.weight"}) {
    for (float& v : w.tensors.at(name).data()) v = std::abs(v) + 0.01f;
  }
  Tensor activation({1, 16, 16});
  for (std::size_t y = 0; y < 16; ++y) {
    for (std::size_t x = 0; x < 16; ++x) activation[y * 16 + x] = std::exp(-0.05f * ((y - 5.0f) * (y - 5.0f) + (x - 10.0f) * (x - 10.0f)));
  }
  const CamResult cam = grad_cam_from_trace(spec, w, trace_from_activation(spec, w, activation), 2);
  ASSERT_GT(cam.alpha[0], 0.0f);

  const Tensor& expected = activation;  // 16x16 map, already at input size
  const float peak = *std::max_element(expected.values().begin(), expected.values().end());
  for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(cam.heatmap[i], expected[i] / peak, 1e-6);
}

TEST(GradCamTest, Errors) {
  const ModelSpec spec = cam_spec();
  const WeightSet w = random_weights(spec, 1);
  std::mt19937 gen(8);
  const Tensor image = random_image(gen);
  EXPECT_THROW(grad_cam_from_trace(spec, w, forward(spec, w, image, false)), Error);
  EXPECT_THROW(grad_cam(spec, w, image, 3), Error);
  WeightSet partial = w;
  partial.tensors.erase("head.dense1.bias");
  EXPECT_THROW(grad_cam(spec, partial, image), Error);
}

TEST(OverlayTest, ColormapAnchors) {
  using C = std::array<float, 3>;
  EXPECT_EQ(heat_color(0.0f), (C{0, 0, 64}));
  EXPECT_EQ(heat_color(0.25f), (C{0, 0, 255}));
  EXPECT_EQ(heat_color(0.5f), (C{0, 255, 0}));
  EXPECT_EQ(heat_color(0.75f), (C{255, 255, 0}));
  EXPECT_EQ(heat_color(1.0f), (C{255, 0, 0}));
  EXPECT_EQ(heat_color(0.125f), (C{0, 0, 159.5f}));
  EXPECT_EQ(heat_color(-3.0f), heat_color(0.0f));
  EXPECT_EQ(heat_color(7.0f), heat_color(1.0f));
}

RgbImage random_rgb(std::size_t w, std::size_t h, std::mt19937& gen) {
  RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(gen() & 0xff);
  return img;
}

TEST(OverlayTest, ZeroHeatmapBlendsDarkBlue) {
  std::mt19937 gen(9);
  const RgbImage original = random_rgb(20, 12, gen);
  const RgbImage out = overlay_pixels(Tensor({12, 20}), original);
  const double blue[3] = {0, 0, 64};
  for (std::size_t y = 0; y < 12; ++y) {
    for (std::size_t x = 0; x < 20; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        ASSERT_EQ(out.at(y, x, c), std::lround(0.6 * original.at(y, x, c) + 0.4 * blue[c]));
      }
    }
  }
}

TEST(OverlayTest, PngRoundTripIsExact) {
  std::mt19937 gen(10);
  const RgbImage original = random_rgb(31, 23, gen);
  Tensor heat = testing::random_tensor({16, 16}, gen, 0.0f, 1.0f);
  testing::TempDir dir("overlay");
  render_overlay(heat, original, dir / "o.png");
  const RgbImage back = decode_rgb(dir / "o.png");
  EXPECT_EQ(back, overlay_pixels(heat, original));
  EXPECT_EQ(back.width, 16u);
}

}  // namespace
}  // namespace cxr
