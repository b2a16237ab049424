#include "cxr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cxr/error.hpp"
#include "cxr/random.hpp"

namespace cxr {

namespace {

using FeatureFn = std::function<Tensor(std::size_t)>;

struct FeatureSet {
  FeatureFn get;
  std::vector<std::size_t> labels;
};

struct Metrics {
  double loss = 0;
  double accuracy = 0;
};

Metrics evaluate(const ModelSpec& spec, const WeightSet& head, const FeatureSet& set) {
  double loss = 0;
  std::size_t correct = 0;
  const std::size_t k = spec.num_classes();
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    const HeadOutput out = head_forward(spec, head, set.get(i));
    loss += cross_entropy(out.probs, one_hot(set.labels[i], k));
    if (argmax(out.probs.data()) == set.labels[i]) ++correct;
  }
  const auto n = static_cast<double>(set.labels.size());
  return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train_loop(const ModelSpec& spec, const FeatureSet& train, const FeatureSet& val, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (train.labels.empty()) throw Error(ErrorCode::kEmptyDataset, "training set is empty");
  if (val.labels.empty()) throw Error(ErrorCode::kEmptyDataset, "validation set is empty");

  TrainResult result;
  result.head = init_head(spec, derive_seed(config.seed, 0));
  std::map<std::string, AdamState> states;
  for (const auto& [name, tensor] : result.head.tensors) states.emplace(name, AdamState::zeros_like(tensor));
  const AdamHyper hyper{config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon};
  const std::size_t k = spec.num_classes();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto plan = batch_plan(train.labels.size(), config.batch_size, derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto& batch = plan[b];
      const float inv = 1.0f / static_cast<float>(batch.size());
      std::map<std::string, Tensor> grads;
      double batch_loss = 0;
      for (std::size_t idx : batch) {
        const Tensor features = train.get(idx);
        const HeadOutput out = head_forward(spec, result.head, features);
        const Tensor target = one_hot(train.labels[idx], k);
        batch_loss += cross_entropy(out.probs, target);
        Tensor dlogits = ce_softmax_grad(out.probs, target);
        for (float& g : dlogits.data()) g *= inv;
        HeadGradients g = head_backward(spec, result.head, features, dlogits);
        for (auto& [name, tensor] : g.params) {
          auto [it, inserted] = grads.try_emplace(name, std::move(tensor));
          if (!inserted) {
            for (std::size_t i = 0; i < it->second.size(); ++i) it->second[i] += tensor[i];
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorCode::kNumerical,
                    "non-finite training loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1));
      }
      for (auto& [name, grad] : grads) adam_step(result.head.tensors.at(name), grad, states.at(name), hyper);
    }

    const Metrics tr = evaluate(spec, result.head, train);
    const Metrics va = evaluate(spec, result.head, val);
    if (!std::isfinite(tr.loss) || !std::isfinite(va.loss)) {
      throw Error(ErrorCode::kNumerical, "non-finite epoch loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, tr.loss, tr.accuracy, va.loss, va.accuracy});
    if (on_epoch) on_epoch(result.history.back());
  }
  return result;
}

std::vector<std::size_t> labels_of(const std::vector<Sample>& samples) {
  std::vector<std::size_t> labels;
  for (const Sample& s : samples) labels.push_back(s.label);
  return labels;
}

FeatureSet feature_set(const ModelSpec& spec, const WeightSet& backbone, const std::vector<Sample>& samples,
                       const ImageLoader& loader, bool cache) {
  auto compute = [&spec, &backbone, &samples, loader](std::size_t i) {
    return backbone_forward(spec, backbone, loader(samples[i]), false).features;
  };
  if (!cache) return {compute, labels_of(samples)};

  auto cached = std::make_shared<std::vector<Tensor>>();
  cached->reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) cached->push_back(compute(i));
  return {[cached](std::size_t i) { return (*cached)[i]; }, labels_of(samples)};
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::kInvalidArgument, "epochs must be at least 1");
  if (!(learning_rate >= 0)) throw Error(ErrorCode::kInvalidArgument, "learning rate must be non-negative");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be at least 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0)) throw Error(ErrorCode::kInvalidArgument, "Adam epsilon must be positive");
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamHyper& hyper) {
  if (grad.shape() != param.shape() || state.m.shape() != param.shape() || state.v.shape() != param.shape()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step parameter " + shape_string(param.shape()) + ", gradient " +
                                               shape_string(grad.shape()) + ", moments " + shape_string(state.m.shape()));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
    const double v = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param[i] = static_cast<float>(param[i] - hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon));
  }
}

double cross_entropy(const Tensor& probs, const Tensor& onehot) {
  if (probs.size() != onehot.size()) {
    throw Error(ErrorCode::kShapeMismatch, "cross_entropy: " + std::to_string(probs.size()) + " probabilities vs " +
                                               std::to_string(onehot.size()) + " targets");
  }
  double loss = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (onehot[i] != 0.0f) loss -= onehot[i] * std::log(std::max(static_cast<double>(probs[i]), kProbFloor));
  }
  return loss;
}

Tensor ce_softmax_grad(const Tensor& probs, const Tensor& onehot) {
  if (probs.size() != onehot.size()) {
    throw Error(ErrorCode::kShapeMismatch, "ce_softmax_grad: " + std::to_string(probs.size()) + " probabilities vs " +
                                               std::to_string(onehot.size()) + " targets");
  }
  Tensor grad(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) grad[i] = probs[i] - onehot[i];
  return grad;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const EpochRecord& r : history) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.train_loss, r.train_accuracy, r.val_loss,
                  r.val_accuracy);
    out += line;
  }
  return out;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  out << history_csv(history);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
}

TrainResult train_head(const ModelSpec& spec, const WeightSet& backbone, const SplitAssignment& split,
                       const TrainConfig& config, const ImageLoader& loader, const EpochCallback& on_epoch) {
  config.validate();
  require_valid(spec, backbone, TensorScope::kBackbone);
  if (split.train.empty()) throw Error(ErrorCode::kEmptyDataset, "split has no training samples");
  if (split.val.empty()) throw Error(ErrorCode::kEmptyDataset, "split has no validation samples");

  const FeatureSet train = feature_set(spec, backbone, split.train, loader, config.cache_features);
  const FeatureSet val = feature_set(spec, backbone, split.val, loader, config.cache_features);
  return train_loop(spec, train, val, config, on_epoch);
}

TrainResult train_head_on_features(const ModelSpec& spec, const LabeledFeatures& train, const LabeledFeatures& val,
                                   const TrainConfig& config, const EpochCallback& on_epoch) {
  auto wrap = [](const LabeledFeatures& f) {
    if (f.features.size() != f.labels.size()) {
      throw Error(ErrorCode::kShapeMismatch, "feature and label counts differ");
    }
    return FeatureSet{[&f](std::size_t i) { return f.features[i]; }, f.labels};
  };
  return train_loop(spec, wrap(train), wrap(val), config, on_epoch);
}

}  // namespace cxr
