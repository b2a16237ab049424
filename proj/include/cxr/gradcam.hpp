#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "cxr/image_io.hpp"
#include "cxr/model.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

struct CamResult {
  std::size_t class_index = 0;
  /// Per-channel weights: spatial mean of d(score)/d(activation).
  Tensor alpha;
  /// ReLU(sum_k alpha_k * A_k) at last-conv resolution, [h, w].
  Tensor raw_map;
  /// raw_map upsampled to the input size and divided by its max, [H, W].
  Tensor heatmap;
  Tensor predicted_probs;
};

/// The score is the target's pre-softmax logit; the target defaults to the
/// arg-max class.
CamResult grad_cam(const ModelSpec& spec, const WeightSet& weights, const Tensor& image,
                   std::optional<std::size_t> target_class = {});

/// Grad-CAM from an already captured forward pass (skips the backbone).
CamResult grad_cam_from_trace(const ModelSpec& spec, const WeightSet& weights, const ForwardTrace& trace,
                              std::optional<std::size_t> target_class = {});

/// Piecewise-linear colormap through (0,0,64) (0,0,255) (0,255,0)
/// (255,255,0) (255,0,0) at 0, .25, .5, .75, 1. Values are clamped to [0,1].
std::array<float, 3> heat_color(float value);

inline constexpr float kOverlayAlpha = 0.4f;

/// Resizes `original` to the heatmap grid and blends
/// (1 - alpha) * original + alpha * color, rounded half away from zero.
RgbImage overlay_pixels(const Tensor& heatmap, const RgbImage& original);

void render_overlay(const Tensor& heatmap, const RgbImage& original, const std::filesystem::path& png_file);

}  // namespace cxr
