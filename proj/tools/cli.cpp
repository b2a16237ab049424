#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cxr/data.hpp"
#include "cxr/error.hpp"
#include "cxr/eval.hpp"
#include "cxr/gradcam.hpp"
#include "cxr/image_io.hpp"
#include "cxr/model.hpp"
#include "cxr/synthetic.hpp"
#include "cxr/train.hpp"
#include "cxr/weights.hpp"

namespace cxr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SplitArgs {
  std::string data;
  std::string ratios = "0.8,0.1,0.1";
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string split;
  std::string backbone;
  std::string out;
  std::string arch;
  std::size_t hidden = 0;
  int epochs = 80;
  double lr = 0.001;
  std::size_t batch = 15;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool no_cache = false;
  std::string normalization = "imagenet";
};

struct EvalArgs {
  std::string data;
  std::string split;
  std::string backbone;
  std::string head;
  std::string out;
  std::string predictions;
};

struct ExplainArgs {
  std::vector<std::string> images;
  std::string backbone;
  std::string head;
  std::string target;
  std::string out;
};

struct InitArgs {
  std::string arch = "vgg16";
  std::uint64_t seed = 0;
  std::string out;
};

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::string counts = "175,100,100";
  std::size_t min_size = 96;
  std::size_t max_size = 160;
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return kUsage;
    case ErrorCode::kNumerical: return kNumericalFailure;
    default: return kDataError;
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

// Values from a JSON config file become flags unless the command line
// already sets them.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (!config) return args;

  json doc;
  try {
    doc = json::parse(read_file(*config));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "config file " + *config + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidArgument, "config file " + *config + " must hold a JSON object");

  auto present = [&args](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&flag](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  for (const auto& [key, value] : doc.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || present(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const json& v : value) args.push_back(scalar(v));
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

Normalization normalization_named(const std::string& name) {
  if (name == "imagenet") return Normalization::imagenet();
  if (name == "unit") return Normalization::unit();
  throw Error(ErrorCode::kInvalidArgument, "unknown normalization '" + name + "' (imagenet, unit)");
}

std::size_t parse_label(const std::string& text, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string upper = text;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (upper == names[i]) return i;
  }
  try {
    std::size_t used = 0;
    const unsigned long value = std::stoul(text, &used);
    if (used == text.size() && value < names.size()) return value;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown class '" + text + "'");
}

// Model geometry recorded in the head container.
ModelSpec spec_for_head(const WeightSet& head) {
  const auto arch = head.metadata.count("arch") ? head.metadata.at("arch") : std::string("vgg16");
  std::optional<std::size_t> hidden;
  if (head.metadata.count("hidden_units")) hidden = std::stoul(head.metadata.at("hidden_units"));
  return build_named(arch, 3, hidden);
}

Normalization normalization_for_head(const WeightSet& head) {
  return normalization_named(head.metadata.count("normalization") ? head.metadata.at("normalization") : "imagenet");
}

WeightSet load_model_weights(const std::string& backbone, const std::string& head_dir, ModelSpec& spec) {
  WeightSet head = load_container(head_dir);
  spec = spec_for_head(head);
  WeightSet weights = load_container(backbone);
  weights.metadata.clear();
  weights.merge(head);
  require_valid(spec, weights);
  return weights;
}

void echo(std::ostream& out, const json& config, const std::optional<fs::path>& dir) {
  out << "config " << config.dump() << '\n';
  if (dir) write_file(*dir / "config.json", config.dump(2) + "\n");
}

int cmd_split(const SplitArgs& a, std::ostream& out) {
  const SplitRatios ratios = parse_ratios(a.ratios);
  echo(out, {{"command", "split"}, {"data", a.data}, {"ratios", {ratios.train, ratios.val, ratios.test}},
             {"seed", a.seed}, {"out", a.out}}, std::nullopt);

  const DatasetIndex index = ingest(a.data);
  for (const std::string& w : index.warnings) out << "warning: " << w << '\n';
  const SplitAssignment s = split(index, ratios, a.seed);
  save_split(s, a.out);

  auto count = [](const std::vector<Sample>& samples, std::size_t label) {
    return std::count_if(samples.begin(), samples.end(), [label](const Sample& x) { return x.label == label; });
  };
  const auto names = default_class_names(3);
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %6s %6s %6s %6s\n", "class", "total", "train", "val", "test");
  out << line;
  for (std::size_t c = 0; c < 3; ++c) {
    std::snprintf(line, sizeof line, "%-10s %6zu %6td %6td %6td\n", names[c].c_str(), index.counts[c],
                  count(s.train, c), count(s.val, c), count(s.test, c));
    out << line;
  }
  std::snprintf(line, sizeof line, "%-10s %6zu %6zu %6zu %6zu\n", "all", index.samples.size(), s.train.size(),
                s.val.size(), s.test.size());
  out << line;
  return kSuccess;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig config;
  config.epochs = a.epochs;
  config.learning_rate = a.lr;
  config.batch_size = a.batch;
  config.seed = a.seed;
  config.adam_beta1 = a.beta1;
  config.adam_beta2 = a.beta2;
  config.adam_epsilon = a.epsilon;
  config.cache_features = !a.no_cache;
  config.validate();
  const Normalization norm = normalization_named(a.normalization);

  if (!fs::exists(fs::path(a.backbone) / kManifestFile)) {
    throw Error(ErrorCode::kMissingManifest, "backbone container not found at " + a.backbone);
  }
  const WeightSet backbone = load_container(a.backbone);
  const std::string arch =
      !a.arch.empty() ? a.arch : (backbone.metadata.count("arch") ? backbone.metadata.at("arch") : "vgg16");
  const ModelSpec spec = build_named(arch, 3, a.hidden ? std::optional(a.hidden) : std::nullopt);
  require_valid(spec, backbone, TensorScope::kBackbone);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  echo(out,
       {{"command", "train"}, {"data", a.data}, {"split", a.split}, {"backbone", a.backbone}, {"out", a.out},
        {"arch", arch}, {"hidden", spec.hidden_units()}, {"epochs", config.epochs}, {"lr", config.learning_rate},
        {"batch", config.batch_size}, {"seed", config.seed}, {"beta1", config.adam_beta1},
        {"beta2", config.adam_beta2}, {"epsilon", config.adam_epsilon}, {"no-cache", !config.cache_features},
        {"normalization", a.normalization}},
       dir);

  const SplitAssignment s = load_split(a.split);
  TrainResult result = train_head(spec, backbone, s, config, file_loader(a.data, norm), [&out](const EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f\n", r.epoch,
                  r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy);
    out << line << std::flush;
  });

  result.head.metadata["normalization"] = a.normalization;
  result.head.metadata["class_names"] = "COVID,NORMAL,INFECTION";
  result.head.metadata["seed"] = std::to_string(config.seed);
  save_container(result.head, dir / "head");
  write_history_csv(result.history, dir / "history.csv");
  out << "wrote " << (dir / "head").string() << " and " << (dir / "history.csv").string() << '\n';
  return kSuccess;
}

std::vector<Prediction> injected_predictions(const std::string& file, const std::vector<std::string>& names) {
  std::vector<Prediction> predictions;
  try {
    const json doc = json::parse(read_file(file));
    for (const json& p : doc.at("predictions")) {
      auto label = [&names](const json& v) {
        return v.is_number_unsigned() ? v.get<std::size_t>() : parse_label(v.get<std::string>(), names);
      };
      Prediction pred;
      pred.path = p.value("path", std::string());
      pred.true_label = label(p.at("true"));
      pred.predicted_label = label(p.at("predicted"));
      predictions.push_back(std::move(pred));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "predictions file " + file + ": " + e.what());
  }
  return predictions;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const fs::path dir = a.out;
  fs::create_directories(dir);
  echo(out, {{"command", "eval"}, {"data", a.data}, {"split", a.split}, {"backbone", a.backbone}, {"head", a.head},
             {"out", a.out}, {"predictions", a.predictions}},
       dir);

  const std::vector<std::string> names = default_class_names(3);
  std::vector<Prediction> predictions;
  if (!a.predictions.empty()) {
    predictions = injected_predictions(a.predictions, names);
  } else {
    if (a.data.empty() || a.split.empty() || a.backbone.empty() || a.head.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "eval needs --data, --split, --backbone and --head (or --predictions)");
    }
    const SplitAssignment s = load_split(a.split);
    if (s.test.empty()) throw Error(ErrorCode::kEmptyDataset, "split " + a.split + " has an empty test set");
    ModelSpec spec = build_vgg16();
    const WeightSet weights = load_model_weights(a.backbone, a.head, spec);
    predictions = predict(spec, weights, s.test, file_loader(a.data, normalization_for_head(load_container(a.head))));
  }
  if (predictions.empty()) throw Error(ErrorCode::kEmptyDataset, "nothing to evaluate");

  const EvalReport report = build_report(predictions, names);
  const std::string table = matrix_table(report);
  write_file(dir / "report.json", report_to_json(report));
  write_file(dir / "report.txt", table);
  std::string listed;
  for (const std::string& p : report.misclassified) listed += p + '\n';
  write_file(dir / "misclassified.txt", listed);
  out << table;
  return kSuccess;
}

std::string csv_matrix(const Tensor& map) {
  std::string out;
  char value[32];
  for (std::size_t y = 0; y < map.dim(0); ++y) {
    for (std::size_t x = 0; x < map.dim(1); ++x) {
      std::snprintf(value, sizeof value, "%.9g", static_cast<double>(map[y * map.dim(1) + x]));
      out += (x ? "," : "");
      out += value;
    }
    out += '\n';
  }
  return out;
}

int cmd_explain(const ExplainArgs& a, std::ostream& out) {
  const fs::path dir = a.out;
  fs::create_directories(dir);
  echo(out, {{"command", "explain"}, {"image", a.images}, {"backbone", a.backbone}, {"head", a.head},
             {"class", a.target}, {"out", a.out}},
       dir);

  ModelSpec spec = build_vgg16();
  const WeightSet weights = load_model_weights(a.backbone, a.head, spec);
  const Normalization norm = normalization_for_head(load_container(a.head));
  std::optional<std::size_t> target;
  if (!a.target.empty()) target = parse_label(a.target, spec.class_names());

  for (const std::string& image_path : a.images) {
    const RgbImage original = decode_rgb(image_path);
    const Tensor input = preprocess(original, norm, spec.input_shape()[1]);
    const CamResult cam = grad_cam(spec, weights, input, target);
    const std::string stem = fs::path(image_path).stem().string();

    render_overlay(cam.heatmap, original, dir / (stem + ".cam.png"));
    write_file(dir / (stem + ".cam.csv"), csv_matrix(cam.raw_map));

    const auto& alpha = cam.alpha.values();
    double mean = 0;
    for (float v : alpha) mean += v;
    mean /= static_cast<double>(alpha.size());
    const json summary = {
        {"image", image_path},
        {"class_index", cam.class_index},
        {"class_name", spec.class_names()[cam.class_index]},
        {"probs", cam.predicted_probs.values()},
        {"alpha", {{"count", alpha.size()},
                   {"min", *std::min_element(alpha.begin(), alpha.end())},
                   {"max", *std::max_element(alpha.begin(), alpha.end())},
                   {"mean", mean},
                   {"positive", std::count_if(alpha.begin(), alpha.end(), [](float v) { return v > 0; })}}},
        {"raw_map_max", *std::max_element(cam.raw_map.values().begin(), cam.raw_map.values().end())},
    };
    write_file(dir / (stem + ".json"), summary.dump(2) + "\n");
    out << image_path << ": " << spec.class_names()[cam.class_index] << " -> " << (dir / (stem + ".cam.png")).string()
        << '\n';
  }
  return kSuccess;
}

int cmd_init_backbone(const InitArgs& a, std::ostream& out) {
  const ModelSpec spec = build_named(a.arch);
  const fs::path dir = a.out;
  echo(out, {{"command", "init-backbone"}, {"arch", a.arch}, {"seed", a.seed}, {"out", a.out}}, std::nullopt);
  const WeightManifest manifest = save_container(init_backbone(spec, a.seed), dir);
  out << "wrote " << manifest.records.size() << " tensors to " << dir.string() << '\n';
  return kSuccess;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  std::vector<std::size_t> counts;
  std::stringstream in(a.counts);
  std::string item;
  while (std::getline(in, item, ',')) counts.push_back(std::stoul(item));
  if (counts.size() != 3) throw Error(ErrorCode::kInvalidArgument, "--counts needs three values");
  echo(out, {{"command", "synth"}, {"out", a.out}, {"seed", a.seed}, {"counts", counts}, {"min-size", a.min_size},
             {"max-size", a.max_size}},
       std::nullopt);
  write_synthetic_corpus(a.out, {{counts[0], counts[1], counts[2]}, a.min_size, a.max_size, a.seed});
  out << "wrote " << counts[0] + counts[1] + counts[2] << " images to " << a.out << '\n';
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chest X-ray triage: frozen VGG-16 features, trained dense head, Grad-CAM maps."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cxr 1.0");

  std::string config_file;
  auto add_config = [&config_file](CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON file whose keys mirror the flag names; flags win");
  };

  SplitArgs split_args;
  CLI::App* split_cmd = app.add_subcommand("split", "Index a dataset and write a stratified split manifest");
  split_cmd->add_option("--data", split_args.data, "Dataset root with covid/ normal/ infection/")->required();
  split_cmd->add_option("--ratios", split_args.ratios, "train,val,test fractions summing to 1")->capture_default_str();
  split_cmd->add_option("--seed", split_args.seed, "Shuffle seed")->capture_default_str();
  split_cmd->add_option("--out", split_args.out, "Split manifest JSON to write")->required();
  add_config(split_cmd);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the dense head on frozen backbone features");
  train_cmd->add_option("--data", train_args.data, "Dataset root")->required();
  train_cmd->add_option("--split", train_args.split, "Split manifest from `split`")->required();
  train_cmd->add_option("--backbone", train_args.backbone, "Backbone weight container")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--arch", train_args.arch, "vgg16 or vgg16-small (default: backbone metadata)");
  train_cmd->add_option("--hidden", train_args.hidden, "Hidden units of the head (default: 256 / 32 for small)");
  train_cmd->add_option("--epochs", train_args.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", train_args.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "Seed for head init and batch order")->capture_default_str();
  train_cmd->add_option("--beta1", train_args.beta1, "Adam beta1")->capture_default_str();
  train_cmd->add_option("--beta2", train_args.beta2, "Adam beta2")->capture_default_str();
  train_cmd->add_option("--epsilon", train_args.epsilon, "Adam epsilon")->capture_default_str();
  train_cmd->add_flag("--no-cache", train_args.no_cache, "Recompute backbone features every epoch");
  train_cmd->add_option("--normalization", train_args.normalization, "imagenet or unit")->capture_default_str();
  add_config(train_cmd);

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a trained head on the test split");
  eval_cmd->add_option("--data", eval_args.data, "Dataset root");
  eval_cmd->add_option("--split", eval_args.split, "Split manifest");
  eval_cmd->add_option("--backbone", eval_args.backbone, "Backbone weight container");
  eval_cmd->add_option("--head", eval_args.head, "Trained head container");
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_option("--predictions", eval_args.predictions,
                       "JSON {\"predictions\": [{\"path\", \"true\", \"predicted\"}]} used instead of running the model");
  add_config(eval_cmd);

  ExplainArgs explain_args;
  CLI::App* explain_cmd = app.add_subcommand("explain", "Write Grad-CAM overlays for images");
  explain_cmd->add_option("--image", explain_args.images, "Image file(s)")->required();
  explain_cmd->add_option("--backbone", explain_args.backbone, "Backbone weight container")->required();
  explain_cmd->add_option("--head", explain_args.head, "Trained head container")->required();
  explain_cmd->add_option("--class", explain_args.target, "Target class name or index (default: arg-max)");
  explain_cmd->add_option("--out", explain_args.out, "Output directory")->required();
  add_config(explain_cmd);

  InitArgs init_args;
  CLI::App* init_cmd = app.add_subcommand("init-backbone", "Write a random-weight backbone container");
  init_cmd->add_option("--arch", init_args.arch, "vgg16 or vgg16-small")->capture_default_str();
  init_cmd->add_option("--seed", init_args.seed, "Seed")->capture_default_str();
  init_cmd->add_option("--out", init_args.out, "Container directory")->required();
  add_config(init_cmd);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate the procedural three-class texture corpus");
  synth_cmd->add_option("--out", synth_args.out, "Dataset root to create")->required();
  synth_cmd->add_option("--seed", synth_args.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--counts", synth_args.counts, "Images per class covid,normal,infection")->capture_default_str();
  synth_cmd->add_option("--min-size", synth_args.min_size, "Smallest image side")->capture_default_str();
  synth_cmd->add_option("--max-size", synth_args.max_size, "Largest image side")->capture_default_str();
  add_config(synth_cmd);

  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);

    if (*split_cmd) return cmd_split(split_args, out);
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*explain_cmd) return cmd_explain(explain_args, out);
    if (*init_cmd) return cmd_init_backbone(init_args, out);
    if (*synth_cmd) return cmd_synth(synth_args, out);
    return kUsage;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace cxr::cli
