#include "cxr/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/data.hpp"
#include "cxr/error.hpp"

namespace cxr {

CamResult grad_cam_from_trace(const ModelSpec& spec, const WeightSet& weights, const ForwardTrace& trace,
                              std::optional<std::size_t> target_class) {
  if (trace.last_conv_activation.empty() || trace.pool_indices.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "grad_cam needs a forward trace with captured activations");
  }
  const std::size_t k = spec.num_classes();
  const std::size_t target = target_class.value_or(argmax(trace.probs.data()));
  if (target >= k) {
    throw Error(ErrorCode::kInvalidArgument, "target class " + std::to_string(target) + " outside " + std::to_string(k));
  }

  const Tensor& activation = trace.last_conv_activation;
  const HeadGradients head = head_backward(spec, weights, trace.backbone_features, one_hot(target, k));
  const Tensor grad_activation = maxpool2d_backward(head.features, trace.pool_indices, activation.shape());

  const std::size_t channels = activation.dim(0);
  const std::size_t h = activation.dim(1);
  const std::size_t w = activation.dim(2);
  const std::size_t plane = h * w;

  CamResult cam;
  cam.class_index = target;
  cam.predicted_probs = trace.probs;
  cam.alpha = Tensor({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0;
    for (std::size_t i = 0; i < plane; ++i) sum += grad_activation[c * plane + i];
    cam.alpha[c] = static_cast<float>(sum / static_cast<double>(plane));
  }

  Tensor weighted({1, h, w});
  for (std::size_t i = 0; i < plane; ++i) {
    double sum = 0;
    for (std::size_t c = 0; c < channels; ++c) sum += static_cast<double>(cam.alpha[c]) * activation[c * plane + i];
    weighted[i] = static_cast<float>(sum);
  }
  cam.raw_map = relu(weighted).reshaped({h, w});

  const Shape& input = spec.input_shape();
  Tensor up = bilinear_resize(cam.raw_map.reshaped({1, h, w}), input[1], input[2]);
  const float peak = *std::max_element(up.values().begin(), up.values().end());
  if (peak > 0.0f) {
    for (float& v : up.data()) v = std::clamp(v / peak, 0.0f, 1.0f);
  }
  cam.heatmap = std::move(up).reshaped({input[1], input[2]});
  return cam;
}

CamResult grad_cam(const ModelSpec& spec, const WeightSet& weights, const Tensor& image,
                   std::optional<std::size_t> target_class) {
  return grad_cam_from_trace(spec, weights, forward(spec, weights, image, true), target_class);
}

std::array<float, 3> heat_color(float value) {
  static constexpr std::array<std::array<float, 3>, 5> kAnchors = {{
      {0, 0, 64},
      {0, 0, 255},
      {0, 255, 0},
      {255, 255, 0},
      {255, 0, 0},
  }};
  const float v = std::clamp(std::isfinite(value) ? value : 0.0f, 0.0f, 1.0f);
  const float scaled = v * 4.0f;
  const auto lo = std::min<std::size_t>(static_cast<std::size_t>(scaled), 3);
  const float t = scaled - static_cast<float>(lo);
  std::array<float, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) rgb[c] = kAnchors[lo][c] + t * (kAnchors[lo + 1][c] - kAnchors[lo][c]);
  return rgb;
}

RgbImage overlay_pixels(const Tensor& heatmap, const RgbImage& original) {
  if (heatmap.rank() != 2) throw Error(ErrorCode::kShapeMismatch, "heatmap must be [H, W]");
  const std::size_t h = heatmap.dim(0);
  const std::size_t w = heatmap.dim(1);
  const Tensor base = bilinear_resize(to_chw(original), h, w);

  RgbImage out{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::array<float, 3> color = heat_color(heatmap[y * w + x]);
      for (std::size_t c = 0; c < 3; ++c) {
        const float blended = (1.0f - kOverlayAlpha) * base.at(c, y, x) + kOverlayAlpha * color[c];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(blended), 0.0f, 255.0f));
      }
    }
  }
  return out;
}

void render_overlay(const Tensor& heatmap, const RgbImage& original, const std::filesystem::path& png_file) {
  write_png(png_file, overlay_pixels(heatmap, original));
}

}  // namespace cxr
