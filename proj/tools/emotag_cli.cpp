// SPDX-License-Identifier: Apache-2.0
//
// emotag: batch command-line front end for the multi-label emotion
// classification pipeline.
#include <iostream>

#include <CLI11.hpp>

#include "emotag/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace emotag;

  CLI::App app{"Multi-label emotion classification pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "emotag 1.0.0");

  std::string config_path;
  ConfigOverrides overrides;
  std::uint64_t seed = 0;
  std::string output_dir, precision;
  int epochs = 0, batch_size = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration file")->required();
    sub->add_option("--seed", seed, "Override run.seed");
    sub->add_option("--output-dir", output_dir, "Override paths.output_dir");
  };

  auto* preprocess = app.add_subcommand("preprocess", "Normalize, split, tokenize and encode the corpus");
  auto* balance = app.add_subcommand("balance", "Merge weak labels and oversample the training split");
  auto* train = app.add_subcommand("train", "Train the network with early stopping");
  auto* tune = app.add_subcommand("tune-thresholds", "Grid-search per-label thresholds on validation data");
  auto* evaluate = app.add_subcommand("evaluate", "Score the test split");
  auto* predict = app.add_subcommand("predict", "Rank emotion labels for each input sentence");
  auto* report = app.add_subcommand("report", "Consolidate run artifacts into a summary");
  for (auto* sub : {preprocess, balance, train, tune, evaluate, predict, report}) common(sub);

  train->add_flag("--no-attention", overrides.no_attention, "Use temporal average pooling");
  train->add_option("--epochs", epochs, "Override training.max_epochs");
  train->add_option("--batch-size", batch_size, "Override training.batch_size");
  for (auto* sub : {train, tune, evaluate, predict})
    sub->add_option("--precision", precision, "Override training.precision")->check(CLI::IsMember({"full", "mixed"}));

  EvaluateOptions eval_opt;
  double eval_threshold = 0.5;
  std::string predictions_path, svg_path;
  auto* eval_threshold_opt = evaluate->add_option("--threshold", eval_threshold, "Fixed threshold for every label");
  evaluate->add_option("--predictions", predictions_path, "Evaluate this predictions CSV instead of the model");
  evaluate->add_option("--svg", svg_path, "Write a per-label F1 bar chart");

  PredictOptions predict_opt;
  double predict_threshold = 0.5;
  std::string input_path, output_path, probs_path;
  predict->add_option("--input", input_path, "Text file, one sentence per line")->required();
  predict->add_option("--output", output_path, "Ranked labels TSV (default: output dir)");
  predict->add_option("--probabilities", probs_path, "Also write a predictions CSV");
  auto* predict_threshold_opt = predict->add_option("--threshold", predict_threshold, "Fixed threshold for every label");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) overrides.seed = seed;
  if (sub->count("--output-dir")) overrides.output_dir = output_dir;
  if (sub->get_option_no_throw("--epochs") && sub->count("--epochs")) overrides.max_epochs = epochs;
  if (sub->get_option_no_throw("--batch-size") && sub->count("--batch-size")) overrides.batch_size = batch_size;
  if (sub->get_option_no_throw("--precision") && sub->count("--precision")) overrides.precision = precision;
  if (eval_threshold_opt->count()) eval_opt.threshold = eval_threshold;
  if (!predictions_path.empty()) eval_opt.predictions = predictions_path;
  if (!svg_path.empty()) eval_opt.svg = svg_path;
  predict_opt.input = input_path;
  if (!output_path.empty()) predict_opt.output = output_path;
  if (!probs_path.empty()) predict_opt.probabilities = probs_path;
  if (predict_threshold_opt->count()) predict_opt.threshold = predict_threshold;

  try {
    RunConfig cfg = RunConfig::load(config_path);
    apply_overrides(cfg, overrides);
    CommandResult result;
    if (sub == preprocess) result = run_preprocess(cfg);
    else if (sub == balance) result = run_balance(cfg);
    else if (sub == train) result = run_train(cfg);
    else if (sub == tune) result = run_tune_thresholds(cfg);
    else if (sub == evaluate) result = run_evaluate(cfg, eval_opt);
    else if (sub == predict) result = run_predict(cfg, predict_opt);
    else result = run_report(cfg);
    std::cout << result.summary;
    for (const auto& p : result.written) std::cout << "wrote " << p.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "emotag " << sub->get_name() << ": " << e.what() << '\n';
    return exit_code_for(e);
  }
}
