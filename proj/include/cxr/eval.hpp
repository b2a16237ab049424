#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cxr/data.hpp"
#include "cxr/model.hpp"

namespace cxr {

struct Prediction {
  std::string path;
  std::size_t true_label = 0;
  std::size_t predicted_label = 0;
  Tensor probs;
  /// Non-empty when preprocessing or inference failed for this sample.
  std::string error;

  bool failed() const { return !error.empty(); }
};

/// Arg-max over probabilities (lowest index wins ties). A sample whose
/// loader throws is reported with `error` set and does not stop the run.
std::vector<Prediction> predict(const ModelSpec& spec, const WeightSet& weights, const std::vector<Sample>& samples,
                                const ImageLoader& loader);

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 3) : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  void add(std::size_t truth, std::size_t predicted);

  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t trace() const;
  std::uint64_t total() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// (true, predicted) pairs; an out-of-range label is an error.
ConfusionMatrix confusion(const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t classes = 3);

struct EvalReport {
  std::vector<std::string> class_names;
  double accuracy = 0;
  /// Absent for classes with no evaluated samples.
  std::vector<std::optional<double>> recall;
  ConfusionMatrix matrix;
  std::uint64_t sample_count = 0;
  std::vector<std::string> misclassified;
  std::vector<std::string> failed;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Accuracy = trace / total (0 for an empty matrix) and per-class recall.
EvalReport summarize(const ConfusionMatrix& matrix, std::vector<std::string> class_names = {});

/// Full report from per-sample predictions; failures are listed, not counted.
EvalReport build_report(const std::vector<Prediction>& predictions, std::vector<std::string> class_names);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// Aligned text table of the matrix followed by accuracy and recall lines.
std::string matrix_table(const EvalReport& report);

}  // namespace cxr
