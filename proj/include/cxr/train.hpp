#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cxr/data.hpp"
#include "cxr/model.hpp"
#include "cxr/tensor.hpp"
#include "cxr/weights.hpp"

namespace cxr {

struct TrainConfig {
  int epochs = 80;
  double learning_rate = 0.001;
  std::size_t batch_size = 15;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool cache_features = true;

  /// Throws kInvalidArgument when a field is out of range.
  void validate() const;
};

struct AdamHyper {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one parameter tensor.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const Tensor& param) { return {Tensor(param.shape()), Tensor(param.shape()), 0}; }
};

/// One bias-corrected Adam update, evaluated per element in double.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamHyper& hyper);

inline constexpr double kProbFloor = 1e-12;

/// -sum_i y_i * log(max(p_i, 1e-12)), accumulated in double.
double cross_entropy(const Tensor& probs, const Tensor& onehot);

/// d(cross_entropy(softmax(z), y)) / dz = probs - onehot.
Tensor ce_softmax_grad(const Tensor& probs, const Tensor& onehot);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

using TrainHistory = std::vector<EpochRecord>;

/// "epoch,train_loss,train_acc,val_loss,val_acc" then one row per epoch, %.9g.
std::string history_csv(const TrainHistory& history);
void write_history_csv(const TrainHistory& history, const std::filesystem::path& file);

struct TrainResult {
  WeightSet head;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains the dense head over frozen backbone features.
///
/// The head is drawn by init_head(spec, derive_seed(seed, 0)); epoch e
/// shuffles with derive_seed(seed, e). Each batch applies one Adam step on
/// the batch-mean gradient. After every epoch the loss and accuracy are
/// recomputed over the full train and validation sets.
TrainResult train_head(const ModelSpec& spec, const WeightSet& backbone, const SplitAssignment& split,
                       const TrainConfig& config, const ImageLoader& loader, const EpochCallback& on_epoch = {});

/// Same loop over precomputed features; `train`/`val` pair each feature
/// tensor with its label.
struct LabeledFeatures {
  std::vector<Tensor> features;
  std::vector<std::size_t> labels;
};

TrainResult train_head_on_features(const ModelSpec& spec, const LabeledFeatures& train, const LabeledFeatures& val,
                                   const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace cxr
