#include "cxr/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "cxr/error.hpp"

namespace cxr {

using nlohmann::json;

std::vector<Prediction> predict(const ModelSpec& spec, const WeightSet& weights, const std::vector<Sample>& samples,
                                const ImageLoader& loader) {
  require_valid(spec, weights);
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (const Sample& sample : samples) {
    Prediction p;
    p.path = sample.path;
    p.true_label = sample.label;
    try {
      const ForwardTrace trace = forward(spec, weights, loader(sample), false);
      p.probs = trace.probs;
      p.predicted_label = argmax(trace.probs.data());
    } catch (const Error& e) {
      p.error = e.what();
    }
    out.push_back(std::move(p));
  }
  return out;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) {
    throw Error(ErrorCode::kInvalidArgument, "label pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                                                 ") outside " + std::to_string(classes_) + " classes");
  }
  ++counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t sum = 0;
  for (std::size_t p = 0; p < classes_; ++p) sum += at(truth, p);
  return sum;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t sum = 0;
  for (std::size_t i = 0; i < classes_; ++i) sum += at(i, i);
  return sum;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

ConfusionMatrix confusion(const std::vector<std::pair<std::size_t, std::size_t>>& pairs, std::size_t classes) {
  ConfusionMatrix matrix(classes);
  for (const auto& [truth, predicted] : pairs) matrix.add(truth, predicted);
  return matrix;
}

EvalReport summarize(const ConfusionMatrix& matrix, std::vector<std::string> class_names) {
  if (class_names.empty()) class_names = default_class_names(matrix.classes());
  EvalReport report;
  report.class_names = std::move(class_names);
  report.matrix = matrix;
  report.sample_count = matrix.total();
  report.accuracy = report.sample_count ? static_cast<double>(matrix.trace()) / static_cast<double>(report.sample_count) : 0.0;
  for (std::size_t i = 0; i < matrix.classes(); ++i) {
    const std::uint64_t row = matrix.row_sum(i);
    report.recall.push_back(row ? std::optional(static_cast<double>(matrix.at(i, i)) / static_cast<double>(row)) : std::nullopt);
  }
  return report;
}

EvalReport build_report(const std::vector<Prediction>& predictions, std::vector<std::string> class_names) {
  ConfusionMatrix matrix(class_names.size());
  std::vector<std::string> misclassified;
  std::vector<std::string> failed;
  for (const Prediction& p : predictions) {
    if (p.failed()) {
      failed.push_back(p.path);
      continue;
    }
    matrix.add(p.true_label, p.predicted_label);
    if (p.true_label != p.predicted_label) misclassified.push_back(p.path);
  }
  EvalReport report = summarize(matrix, std::move(class_names));
  report.misclassified = std::move(misclassified);
  report.failed = std::move(failed);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json matrix = json::array();
  for (std::size_t t = 0; t < report.matrix.classes(); ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < report.matrix.classes(); ++p) row.push_back(report.matrix.at(t, p));
    matrix.push_back(row);
  }
  json recall = json::array();
  for (const auto& r : report.recall) recall.push_back(r ? json(*r) : json(nullptr));
  json doc = {{"class_names", report.class_names}, {"accuracy", report.accuracy},  {"recall", recall},
              {"matrix", matrix},                  {"sample_count", report.sample_count},
              {"misclassified", report.misclassified}, {"failed", report.failed}};
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    const auto names = doc.at("class_names").get<std::vector<std::string>>();
    const auto rows = doc.at("matrix").get<std::vector<std::vector<std::uint64_t>>>();
    ConfusionMatrix matrix(names.size());
    if (rows.size() != names.size()) throw Error(ErrorCode::kInvalidArgument, "matrix rows do not match class names");
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].size() != names.size()) throw Error(ErrorCode::kInvalidArgument, "matrix is not square");
      for (std::size_t p = 0; p < rows[t].size(); ++p) {
        for (std::uint64_t n = 0; n < rows[t][p]; ++n) matrix.add(t, p);
      }
    }
    EvalReport report;
    report.class_names = names;
    report.matrix = matrix;
    report.accuracy = doc.at("accuracy").get<double>();
    for (const json& r : doc.at("recall")) report.recall.push_back(r.is_null() ? std::nullopt : std::optional(r.get<double>()));
    report.sample_count = doc.at("sample_count").get<std::uint64_t>();
    report.misclassified = doc.at("misclassified").get<std::vector<std::string>>();
    report.failed = doc.at("failed").get<std::vector<std::string>>();
    return report;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed evaluation report: ") + e.what());
  }
}

std::string matrix_table(const EvalReport& report) {
  const std::size_t k = report.matrix.classes();
  std::size_t width = std::string("true \\ pred").size();
  for (const std::string& n : report.class_names) width = std::max(width, n.size());
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t p = 0; p < k; ++p) width = std::max(width, std::to_string(report.matrix.at(t, p)).size());
  }

  auto cell = [width](const std::string& s) { return std::string(width - s.size(), ' ') + s; };
  std::string out = cell("true \\ pred");
  for (const std::string& n : report.class_names) out += "  " + cell(n);
  out += '\n';
  for (std::size_t t = 0; t < k; ++t) {
    out += cell(report.class_names[t]);
    for (std::size_t p = 0; p < k; ++p) out += "  " + cell(std::to_string(report.matrix.at(t, p)));
    out += '\n';
  }

  char line[128];
  std::snprintf(line, sizeof line, "\naccuracy %.4f (%llu/%llu)\n", report.accuracy,
                static_cast<unsigned long long>(report.matrix.trace()), static_cast<unsigned long long>(report.sample_count));
  out += line;
  for (std::size_t i = 0; i < k; ++i) {
    if (report.recall[i]) {
      std::snprintf(line, sizeof line, "recall %s %.4f\n", report.class_names[i].c_str(), *report.recall[i]);
    } else {
      std::snprintf(line, sizeof line, "recall %s n/a\n", report.class_names[i].c_str());
    }
    out += line;
  }
  if (!report.misclassified.empty()) {
    out += "\nmisclassified:\n";
    for (const std::string& p : report.misclassified) out += p + '\n';
  }
  if (!report.failed.empty()) {
    out += "\nfailed:\n";
    for (const std::string& p : report.failed) out += p + '\n';
  }
  return out;
}

}  // namespace cxr
