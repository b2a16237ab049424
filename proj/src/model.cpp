#include "cxr/model.hpp"

#include <cmath>

#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace cxr {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

void require_features(const ModelSpec& spec, const Tensor& features) {
  if (features.shape() != spec.feature_shape()) {
    throw Error(ErrorCode::kShapeMismatch, "head expects features " + shape_string(spec.feature_shape()) + ", got " +
                                               shape_string(features.shape()));
  }
}

// Layer inputs recorded during a head pass, indexed from backbone_end + 1.
struct HeadPass {
  std::vector<Tensor> inputs;
  HeadOutput output;
};

HeadPass run_head(const ModelSpec& spec, const WeightSet& weights, const Tensor& features) {
  require_features(spec, features);
  HeadPass pass;
  Tensor x = features;
  bool hidden_taken = false;
  bool after_dense = false;
  const auto& layers = spec.layers();
  for (std::size_t i = spec.backbone_end() + 1; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    pass.inputs.push_back(x);
    switch (layer.kind) {
      case LayerKind::kFlatten:
        x = std::move(x).reshaped({x.size()});
        break;
      case LayerKind::kDense:
        x = dense(x, weights.get(layer.weight_name()), weights.get(layer.bias_name()));
        after_dense = true;
        break;
      case LayerKind::kRelu:
        x = relu(x);
        if (after_dense && !hidden_taken) {
          pass.output.hidden = x;
          hidden_taken = true;
        }
        break;
      case LayerKind::kSoftmax:
        pass.output.logits = x;
        x = softmax(x);
        break;
      default:
        throw Error(ErrorCode::kInvalidArgument, "layer '" + layer.name + "' cannot run in the head");
    }
  }
  pass.output.probs = std::move(x);
  return pass;
}

}  // namespace

BackboneOutput backbone_forward(const ModelSpec& spec, const WeightSet& weights, const Tensor& image, bool capture) {
  if (image.shape() != spec.input_shape()) {
    throw Error(ErrorCode::kShapeMismatch,
                "model expects input " + shape_string(spec.input_shape()) + ", got " + shape_string(image.shape()));
  }
  BackboneOutput out;
  Tensor x = image;
  const auto& layers = spec.layers();
  for (std::size_t i = 0; i <= spec.backbone_end(); ++i) {
    const LayerSpec& layer = layers[i];
    switch (layer.kind) {
      case LayerKind::kConv3x3:
        x = conv2d(x, weights.get(layer.weight_name()), weights.get(layer.bias_name()), 1, 1);
        break;
      case LayerKind::kRelu:
        x = relu(x);
        break;
      case LayerKind::kMaxPool2: {
        auto [pooled, indices] = maxpool2d(x, 2, 2);
        if (i == spec.backbone_end() && capture) {
          out.last_conv_activation = std::move(x);
          out.pool_indices = std::move(indices);
        }
        x = std::move(pooled);
        break;
      }
      default:
        throw Error(ErrorCode::kInvalidArgument, "layer '" + layer.name + "' cannot run in the backbone");
    }
  }
  out.features = std::move(x);
  return out;
}

HeadOutput head_forward(const ModelSpec& spec, const WeightSet& head_weights, const Tensor& features) {
  return run_head(spec, head_weights, features).output;
}

ForwardTrace forward(const ModelSpec& spec, const WeightSet& weights, const Tensor& image, bool capture) {
  require_valid(spec, weights);
  if (!image.all_finite()) throw Error(ErrorCode::kInvalidArgument, "input image contains non-finite values");

  BackboneOutput backbone = backbone_forward(spec, weights, image, capture);
  HeadOutput head = head_forward(spec, weights, backbone.features);
  return {std::move(head.logits), std::move(head.probs), std::move(backbone.last_conv_activation),
          std::move(backbone.features), std::move(backbone.pool_indices)};
}

HeadGradients head_backward(const ModelSpec& spec, const WeightSet& head_weights, const Tensor& features,
                            const Tensor& grad_logits) {
  HeadPass pass = run_head(spec, head_weights, features);
  if (grad_logits.size() != pass.output.logits.size()) {
    throw Error(ErrorCode::kShapeMismatch, "logit gradient has " + std::to_string(grad_logits.size()) +
                                               " entries, model has " + std::to_string(pass.output.logits.size()));
  }

  HeadGradients grads;
  Tensor grad = grad_logits.reshaped({grad_logits.size()});
  const auto& layers = spec.layers();
  const std::size_t first = spec.backbone_end() + 1;
  for (std::size_t i = layers.size(); i-- > first;) {
    const LayerSpec& layer = layers[i];
    const Tensor& input = pass.inputs[i - first];
    switch (layer.kind) {
      case LayerKind::kSoftmax:
        break;
      case LayerKind::kDense: {
        DenseGrads g = dense_vjp(input, head_weights.get(layer.weight_name()), grad);
        grads.params[layer.weight_name()] = std::move(g.weight);
        grads.params[layer.bias_name()] = std::move(g.bias);
        grad = std::move(g.input);
        break;
      }
      case LayerKind::kRelu: {
        const Tensor mask = relu_mask(input);
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] *= mask[k];
        break;
      }
      case LayerKind::kFlatten:
        grad = std::move(grad).reshaped(input.shape());
        break;
      default:
        throw Error(ErrorCode::kInvalidArgument, "layer '" + layer.name + "' cannot run in the head");
    }
  }
  grads.features = std::move(grad);
  return grads;
}

WeightSet init_head(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  WeightSet set;
  for (const TensorRequirement& req : spec.required_tensors(TensorScope::kHead)) {
    if (req.shape.size() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(req.shape[0] + req.shape[1]));
      set.tensors.emplace(req.name, uniform_tensor(req.shape, bound, rng));
    } else {
      set.tensors.emplace(req.name, Tensor(req.shape));
    }
  }
  set.metadata["arch"] = spec.arch();
  set.metadata["hidden_units"] = std::to_string(spec.hidden_units());
  return set;
}

WeightSet init_backbone(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  WeightSet set;
  for (const TensorRequirement& req : spec.required_tensors(TensorScope::kBackbone)) {
    if (req.shape.size() == 4) {
      const double fan_in = static_cast<double>(req.shape[1] * req.shape[2] * req.shape[3]);
      set.tensors.emplace(req.name, uniform_tensor(req.shape, std::sqrt(6.0 / fan_in), rng));
    } else {
      set.tensors.emplace(req.name, Tensor(req.shape));
    }
  }
  set.metadata["arch"] = spec.arch();
  set.metadata["source"] = "random-init seed=" + std::to_string(seed);
  return set;
}

}  // namespace cxr
