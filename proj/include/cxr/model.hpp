#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cxr/model_spec.hpp"
#include "cxr/tensor.hpp"
#include "cxr/weights.hpp"

namespace cxr {

struct ForwardTrace {
  Tensor logits;
  Tensor probs;
  /// Post-ReLU output of the last conv, input of the final pool. Empty unless captured.
  Tensor last_conv_activation;
  /// Output of the final pool; always filled.
  Tensor backbone_features;
  /// Routing of the final pool. Empty unless captured.
  PoolIndices pool_indices;
};

struct BackboneOutput {
  Tensor features;
  Tensor last_conv_activation;
  PoolIndices pool_indices;
};

struct HeadOutput {
  Tensor logits;
  Tensor probs;
  /// Post-ReLU output of the first head dense layer.
  Tensor hidden;
};

/// Runs the frozen layers only. Requires backbone tensors in `weights`.
BackboneOutput backbone_forward(const ModelSpec& spec, const WeightSet& weights, const Tensor& image, bool capture);

HeadOutput head_forward(const ModelSpec& spec, const WeightSet& head_weights, const Tensor& features);

ForwardTrace forward(const ModelSpec& spec, const WeightSet& weights, const Tensor& image, bool capture);

/// Gradients of a scalar through the head, given d(scalar)/d(logits).
struct HeadGradients {
  std::map<std::string, Tensor> params;
  /// Same shape as the features passed in.
  Tensor features;
};

HeadGradients head_backward(const ModelSpec& spec, const WeightSet& head_weights, const Tensor& features,
                            const Tensor& grad_logits);

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases, for every
/// dense layer. Deterministic in `seed`.
WeightSet init_head(const ModelSpec& spec, std::uint64_t seed);

/// He-uniform (+-sqrt(6 / fan_in)) conv kernels, zero biases. Used for the
/// random-weight backbone in synthetic runs; not a substitute for
/// pretrained weights.
WeightSet init_backbone(const ModelSpec& spec, std::uint64_t seed);

}  // namespace cxr
