#include "imbal/experiment.hpp"

#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "format.hpp"

namespace imbal {

const char* to_string(FeatureSetting s) {
  switch (s) {
    case FeatureSetting::kBinary: return "binary";
    case FeatureSetting::kText: return "text";
    case FeatureSetting::kHybrid: return "hybrid";
  }
  return "?";
}

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& what) {
  fail(ErrorKind::kConfig, "config: " + what);
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

void parse_resampler(const json& j, ResamplerConfig& r) {
  reject_unknown_keys(j, {"strategy", "k_neighbors", "target_ratio", "removal_policy"},
                      "resampler");
  r.strategy = parse_sampling_strategy(get_or<std::string>(j, "strategy", "none", "resampler"));
  r.k_neighbors = get_or<int>(j, "k_neighbors", r.k_neighbors, "resampler");
  r.target_ratio = get_or<double>(j, "target_ratio", r.target_ratio, "resampler");
  r.removal_policy =
      parse_removal_policy(get_or<std::string>(j, "removal_policy", "both", "resampler"));
  try {
    r.validate();
  } catch (const Error& e) {
    config_error(std::string("resampler: ") + e.what());
  }
}

void parse_train(const json& j, TrainConfig& t) {
  reject_unknown_keys(j,
                      {"learning_rate", "momentum", "batch_size", "epochs",
                       "class_weighting", "hidden_layers"},
                      "train");
  t.learning_rate = get_or<double>(j, "learning_rate", t.learning_rate, "train");
  t.momentum = get_or<double>(j, "momentum", t.momentum, "train");
  t.batch_size = get_or<int>(j, "batch_size", t.batch_size, "train");
  t.epochs = get_or<int>(j, "epochs", t.epochs, "train");
  t.class_weighting =
      parse_class_weighting(get_or<std::string>(j, "class_weighting", "uniform", "train"));
  t.hidden_layers = get_or<std::vector<int>>(j, "hidden_layers", t.hidden_layers, "train");
  try {
    t.validate();
  } catch (const Error& e) {
    config_error(std::string("train: ") + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j,
                                             const std::filesystem::path& base_dir) {
  reject_unknown_keys(j,
                      {"schema_version", "setting", "embeddings", "tabular", "labels",
                       "folds", "seed", "output_dir", "resampler", "train", "standardize",
                       "aggregation", "threads"},
                      "config");
  if (!j.contains("schema_version")) config_error("missing 'schema_version'");
  if (get_or<int>(j, "schema_version", 0, "config") != kConfigSchemaVersion) {
    config_error("unsupported schema_version (expected " +
                 std::to_string(kConfigSchemaVersion) + ")");
  }

  ExperimentConfig c;
  if (!j.contains("setting")) config_error("missing 'setting'");
  const auto setting = get_or<std::string>(j, "setting", "", "config");
  if (setting == "binary") {
    c.setting = FeatureSetting::kBinary;
  } else if (setting == "text") {
    c.setting = FeatureSetting::kText;
  } else if (setting == "hybrid") {
    c.setting = FeatureSetting::kHybrid;
  } else {
    config_error("setting must be binary, text or hybrid");
  }

  for (const auto& p : get_or<std::vector<std::string>>(j, "embeddings", {}, "config")) {
    c.embedding_paths.push_back(resolve(base_dir, p));
  }
  if (j.contains("tabular")) {
    c.tabular_path = resolve(base_dir, get_or<std::string>(j, "tabular", "", "config"));
  }
  if (!j.contains("labels")) config_error("missing 'labels'");
  c.labels_path = resolve(base_dir, get_or<std::string>(j, "labels", "", "config"));

  const bool needs_text = c.setting != FeatureSetting::kBinary;
  const bool needs_tabular = c.setting != FeatureSetting::kText;
  if (needs_text && c.embedding_paths.empty()) {
    config_error(std::string(to_string(c.setting)) + " setting needs 'embeddings'");
  }
  if (needs_tabular && !c.tabular_path) {
    config_error(std::string(to_string(c.setting)) + " setting needs 'tabular'");
  }
  if (!needs_text && !c.embedding_paths.empty()) {
    config_error("binary setting takes no 'embeddings'");
  }
  if (!needs_tabular && c.tabular_path) config_error("text setting takes no 'tabular'");

  c.folds = get_or<int>(j, "folds", c.folds, "config");
  if (c.folds < 2) config_error("folds must be >= 2");
  c.master_seed = get_or<std::uint64_t>(j, "seed", c.master_seed, "config");
  c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "out", "config"));
  if (j.contains("resampler")) parse_resampler(j.at("resampler"), c.resampler);
  if (j.contains("train")) parse_train(j.at("train"), c.train);
  c.options.standardize = get_or<bool>(j, "standardize", false, "config");
  const auto agg = get_or<std::string>(j, "aggregation", "mean", "config");
  if (agg == "mean") {
    c.options.aggregation = Aggregation::kMean;
  } else if (agg == "pooled") {
    c.options.aggregation = Aggregation::kPooled;
  } else {
    config_error("aggregation must be mean or pooled");
  }
  c.options.threads = get_or<int>(j, "threads", 1, "config");
  if (c.options.threads < 1) config_error("threads must be >= 1");
  c.apply_master_seed();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    config_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

void ExperimentConfig::apply_master_seed() {
  resampler.seed = derive_seed(master_seed, "resample");
  train.shuffle_seed = derive_seed(master_seed, "shuffle");
  train.init_seed = derive_seed(master_seed, "init");
}

LabeledDataset load_experiment_data(const ExperimentConfig& config) {
  std::vector<FeatureMatrix> parts;
  if (config.tabular_path) parts.push_back(load_tabular_features(*config.tabular_path));
  for (const auto& p : config.embedding_paths) parts.push_back(load_embedding_file(p));
  FeatureMatrix fused = fuse(parts);
  return assemble_dataset(std::move(fused), config.labels_path);
}

ExperimentOutputs compute_experiment(const ExperimentConfig& config) {
  const LabeledDataset data = load_experiment_data(config);
  ExperimentOutputs out{cross_validate(data, config.resampler, config.train, config.folds,
                                       derive_seed(config.master_seed, "folds"),
                                       config.options),
                        {}, {}, {}};
  auto j = report_to_json(out.report);
  j["config"]["setting"] = to_string(config.setting);
  j["config"]["master_seed"] = config.master_seed;
  out.report_json = j.dump(2) + "\n";

  std::vector<RocCurve> curves;
  std::vector<std::string> labels;
  for (const auto& f : out.report.folds) {
    out.fold_roc_csv.push_back(roc_to_csv(f.roc));
    curves.push_back(f.roc);
    labels.push_back("fold " + std::to_string(f.fold));
  }
  curves.push_back(mean_roc(curves));
  labels.push_back("mean");
  out.roc_svg = render_roc_svg(curves, labels);
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::kIo, "cannot write '" + tmp.string() + "'");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) fail(ErrorKind::kIo, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot rename to '" + path.string() + "': " + ec.message());
}

void write_experiment_outputs(const ExperimentOutputs& outputs,
                              const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create '" + dir.string() + "': " + ec.message());

  std::vector<std::pair<std::filesystem::path, const std::string*>> files;
  files.emplace_back(dir / "report.json", &outputs.report_json);
  for (std::size_t i = 0; i < outputs.fold_roc_csv.size(); ++i) {
    files.emplace_back(dir / ("roc_fold" + std::to_string(i) + ".csv"),
                       &outputs.fold_roc_csv[i]);
  }
  files.emplace_back(dir / "roc_mean.svg", &outputs.roc_svg);

  std::vector<std::filesystem::path> staged;
  try {
    for (const auto& [path, contents] : files) {
      auto tmp = path;
      tmp += ".tmp";
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) fail(ErrorKind::kIo, "cannot write '" + tmp.string() + "'");
      staged.push_back(tmp);
      f.write(contents->data(), static_cast<std::streamsize>(contents->size()));
      if (!f) fail(ErrorKind::kIo, "write failed for '" + tmp.string() + "'");
    }
  } catch (...) {
    for (const auto& tmp : staged) std::filesystem::remove(tmp, ec);
    throw;
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    std::filesystem::rename(staged[i], files[i].first, ec);
    if (ec) fail(ErrorKind::kIo, "cannot rename '" + staged[i].string() + "'");
  }
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kUsage:
      return 2;
    case ErrorKind::kNumeric:
      return 4;
    case ErrorKind::kFormat:
    case ErrorKind::kData:
    case ErrorKind::kAlignment:
    case ErrorKind::kResample:
    case ErrorKind::kIo:
      return 3;
  }
  return 1;
}

int run_experiment(const ExperimentConfig& config, std::ostream& err) {
  try {
    const ExperimentOutputs outputs = compute_experiment(config);
    write_experiment_outputs(outputs, config.output_dir);
    return 0;
  } catch (const Error& e) {
    err << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  }
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string render_roc_svg(std::span<const RocCurve> curves,
                           std::span<const std::string> labels) {
  if (curves.empty()) fail(ErrorKind::kUsage, "ROC plot needs at least one curve");
  if (curves.size() != labels.size()) fail(ErrorKind::kUsage, "one label per curve required");
  for (const auto& c : curves) {
    if (c.points.empty() || c.points.front().fpr != 0.0 || c.points.front().tpr != 0.0 ||
        c.points.back().fpr != 1.0 || c.points.back().tpr != 1.0) {
      fail(ErrorKind::kUsage, "ROC curve must run from (0,0) to (1,1)");
    }
  }

  // Plot area: 400x400 px with its origin at (60, 460).
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"520\" "
       "viewBox=\"0 0 640 520\">\n";
  s << "<rect width=\"640\" height=\"520\" fill=\"white\"/>\n";
  s << "<text x=\"260\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"16\">ROC</text>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    const double px = 60 + 400 * v;
    const double py = 460 - 400 * v;
    s << "<text x=\"" << px << "\" y=\"478\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">" << fixed2(v) << "</text>\n";
    s << "<text x=\"52\" y=\"" << py + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
         "font-size=\"11\">" << fixed2(v) << "</text>\n";
  }
  s << "<text x=\"260\" y=\"502\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\">False positive rate</text>\n";
  s << "<text x=\"18\" y=\"260\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\" transform=\"rotate(-90 18 260)\">True positive rate</text>\n";
  s << "<g id=\"plot\" transform=\"translate(60 460) scale(400 -400)\" fill=\"none\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"1\" height=\"1\" stroke=\"black\" "
       "vector-effect=\"non-scaling-stroke\"/>\n";
  s << "<line class=\"chance\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"1\" stroke=\"#999999\" "
       "stroke-dasharray=\"4 4\" vector-effect=\"non-scaling-stroke\"/>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    s << "<polyline class=\"roc\" stroke=\"" << kPalette[i % std::size(kPalette)]
      << "\" stroke-width=\"2\" vector-effect=\"non-scaling-stroke\" points=\"";
    for (std::size_t p = 0; p < curves[i].points.size(); ++p) {
      if (p > 0) s << ' ';
      s << detail::shortest(curves[i].points[p].fpr) << ','
        << detail::shortest(curves[i].points[p].tpr);
    }
    s << "\"/>\n";
  }
  s << "</g>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto y = 60 + 20 * i;
    s << "<line x1=\"475\" y1=\"" << y << "\" x2=\"495\" y2=\"" << y << "\" stroke=\""
      << kPalette[i % std::size(kPalette)] << "\" stroke-width=\"2\"/>\n";
    s << "<text class=\"legend\" x=\"500\" y=\"" << y + 4
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(labels[i])
      << " (AUC = " << fixed2(curves[i].auc) << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void emit_roc_svg(std::span<const RocCurve> curves, std::span<const std::string> labels,
                  const std::filesystem::path& path) {
  write_file_atomic(path, render_roc_svg(curves, labels));
}

}  // namespace imbal
