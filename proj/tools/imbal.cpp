// Command-line front end: cv (full pipeline) plus standalone stages.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "imbal/error.hpp"
#include "imbal/evaluator.hpp"
#include "imbal/experiment.hpp"
#include "imbal/featurestore.hpp"
#include "imbal/netclassifier.hpp"
#include "imbal/resampler.hpp"

namespace {

using namespace imbal;
namespace fs = std::filesystem;

FeatureMatrix load_features(const fs::path& path) {
  return path.extension() == ".csv" ? load_tabular_features(path) : load_embedding_file(path);
}

std::vector<int> parse_widths(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      fail(ErrorKind::kUsage, "bad layer width '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imbalanced binary classification: feature fusion, SMOTE/Tomek "
               "rebalancing, weighted-loss MLP and stratified cross-validation"};
  app.require_subcommand(1);

  // cv
  auto* cv = app.add_subcommand("cv", "Run the full cross-validation pipeline from a config");
  std::string cv_config;
  std::string cv_out;
  std::uint64_t cv_seed = 0;
  int cv_threads = 0;
  cv->add_option("--config", cv_config, "Experiment config (JSON)")->required();
  auto* cv_out_opt = cv->add_option("--out", cv_out, "Output directory");
  auto* cv_seed_opt = cv->add_option("--seed", cv_seed, "Master seed override");
  auto* cv_threads_opt =
      cv->add_option("--threads", cv_threads, "Folds trained concurrently")->check(CLI::PositiveNumber);

  // fuse
  auto* fuse_cmd = app.add_subcommand("fuse", "Id-aligned concatenation of feature files");
  std::vector<std::string> fuse_inputs;
  std::string fuse_out;
  fuse_cmd->add_option("--input", fuse_inputs, "EMB1 or tabular CSV, in concatenation order")
      ->required();
  fuse_cmd->add_option("--out", fuse_out, "Fused EMB1 file")->required();

  // resample
  auto* rs = app.add_subcommand("resample", "Rebalance a labelled feature file");
  std::string rs_features, rs_labels, rs_out_features, rs_out_labels;
  std::string rs_strategy = "smote_tomek", rs_policy = "both";
  ResamplerConfig rs_cfg;
  rs->add_option("--features", rs_features)->required();
  rs->add_option("--labels", rs_labels)->required();
  rs->add_option("--strategy", rs_strategy, "none | smote | tomek | smote_tomek");
  rs->add_option("--k", rs_cfg.k_neighbors, "SMOTE neighbours");
  rs->add_option("--ratio", rs_cfg.target_ratio, "Minority/majority ratio after SMOTE");
  rs->add_option("--policy", rs_policy, "both | majority_only");
  rs->add_option("--seed", rs_cfg.seed);
  rs->add_option("--out-features", rs_out_features)->required();
  rs->add_option("--out-labels", rs_out_labels)->required();

  // train
  auto* tr = app.add_subcommand("train", "Train the classifier on one labelled feature file");
  std::string tr_features, tr_labels, tr_out, tr_weighting = "uniform", tr_hidden = "256,64";
  std::uint64_t tr_seed = 0;
  TrainConfig tr_cfg;
  tr->add_option("--features", tr_features)->required();
  tr->add_option("--labels", tr_labels)->required();
  tr->add_option("--lr", tr_cfg.learning_rate);
  tr->add_option("--momentum", tr_cfg.momentum);
  tr->add_option("--batch", tr_cfg.batch_size);
  tr->add_option("--epochs", tr_cfg.epochs);
  tr->add_option("--weighting", tr_weighting, "uniform | inverse_frequency");
  tr->add_option("--hidden", tr_hidden, "Comma-separated hidden widths");
  tr->add_option("--seed", tr_seed);
  tr->add_option("--out", tr_out, "Model checkpoint")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a labelled feature file with a checkpoint");
  std::string ev_model, ev_features, ev_labels, ev_out, ev_roc;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--features", ev_features)->required();
  ev->add_option("--labels", ev_labels)->required();
  ev->add_option("--out", ev_out, "Metrics JSON")->required();
  ev->add_option("--roc", ev_roc, "Optional ROC CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*cv) {
      ExperimentConfig config = ExperimentConfig::from_file(cv_config);
      if (*cv_out_opt) config.output_dir = cv_out;
      if (*cv_seed_opt) {
        config.master_seed = cv_seed;
        config.apply_master_seed();
      }
      if (*cv_threads_opt) config.options.threads = cv_threads;
      return run_experiment(config, std::cerr);
    }
    if (*fuse_cmd) {
      std::vector<FeatureMatrix> parts;
      for (const auto& p : fuse_inputs) parts.push_back(load_features(p));
      const FeatureMatrix fused = fuse(parts);
      write_embedding_file(fused, fuse_out);
      std::cout << "fused " << fused.rows() << " records, dim " << fused.dim() << '\n';
      return 0;
    }
    if (*rs) {
      rs_cfg.strategy = parse_sampling_strategy(rs_strategy);
      rs_cfg.removal_policy = parse_removal_policy(rs_policy);
      const LabeledDataset data = assemble_dataset(load_features(rs_features), rs_labels);
      const ResampleResult r = resample(data, rs_cfg);
      write_embedding_file(r.dataset.features, rs_out_features);
      write_labels_file(r.dataset, rs_out_labels);
      std::cout << "records " << r.dataset.size() << ", synthetic " << r.n_synthetic
                << ", tomek links " << r.tomek_pairs.size() << '\n';
      return 0;
    }
    if (*tr) {
      tr_cfg.class_weighting = parse_class_weighting(tr_weighting);
      tr_cfg.hidden_layers = parse_widths(tr_hidden);
      tr_cfg.shuffle_seed = derive_seed(tr_seed, "shuffle");
      tr_cfg.init_seed = derive_seed(tr_seed, "init");
      const LabeledDataset data = assemble_dataset(load_features(tr_features), tr_labels);
      const FitResult r = fit(data, tr_cfg);
      r.model.save(tr_out);
      std::cout << "final epoch loss " << r.loss_history.back() << '\n';
      return 0;
    }
    if (*ev) {
      const MlpModel model = MlpModel::load(ev_model);
      const LabeledDataset data = assemble_dataset(load_features(ev_features), ev_labels);
      const auto scores = predict_scores(model, data.features);
      const auto counts = confusion_at(scores, data.labels);
      const auto m = classification_metrics(counts);
      const auto roc = roc_curve(scores, data.labels);
      nlohmann::ordered_json j;
      j["n_records"] = data.size();
      j["confusion"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"tn", counts.tn}, {"fn", counts.fn}};
      j["recall"] = m.recall;
      j["precision"] = m.precision;
      j["f1"] = m.f1;
      j["accuracy"] = m.accuracy;
      j["auc"] = roc.auc;
      write_file_atomic(ev_out, j.dump(2) + "\n");
      if (!ev_roc.empty()) write_file_atomic(ev_roc, roc_to_csv(roc));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  }
  return 0;
}
