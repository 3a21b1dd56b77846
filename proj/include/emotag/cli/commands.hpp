// SPDX-License-Identifier: Apache-2.0
//
// The batch workflow, one function per subcommand. Every command reads its
// inputs from the configured paths or the output directory and writes its
// artifacts back into the output directory.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emotag/cli/run_config.hpp"
#include "emotag/evaluate.hpp"

namespace emotag {

/// File names inside the output directory.
namespace artifact {
inline constexpr const char* kTokenizer = "tokenizer.tsv";
inline constexpr const char* kTrainEncoded = "train.enc.tsv";
inline constexpr const char* kValEncoded = "val.enc.tsv";
inline constexpr const char* kTestEncoded = "test.enc.tsv";
inline constexpr const char* kTrainSamples = "train.tsv";
inline constexpr const char* kValSamples = "val.tsv";
inline constexpr const char* kTestSamples = "test.tsv";
inline constexpr const char* kLabelDistribution = "label_distribution.csv";
inline constexpr const char* kWordFrequency = "word_frequency.csv";
inline constexpr const char* kLabelSimilarity = "label_similarity.csv";
inline constexpr const char* kBalancedSamples = "train_balanced.tsv";
inline constexpr const char* kBalancedEncoded = "train_balanced.enc.tsv";
inline constexpr const char* kBalanceSummary = "balance_summary.csv";
inline constexpr const char* kCheckpoint = "model.ckpt";
inline constexpr const char* kHistory = "history.csv";
inline constexpr const char* kThresholds = "thresholds.csv";
inline constexpr const char* kValPredictions = "predictions_val.csv";
inline constexpr const char* kTestPredictions = "predictions_test.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kPerLabel = "per_label.csv";
inline constexpr const char* kRanked = "predictions.tsv";
inline constexpr const char* kReport = "report.md";
}  // namespace artifact

struct CommandResult {
  std::vector<std::filesystem::path> written;
  std::string summary;  // human-readable, printed to stdout
};

CommandResult run_preprocess(const RunConfig& cfg);
CommandResult run_balance(const RunConfig& cfg);
CommandResult run_train(const RunConfig& cfg);
CommandResult run_tune_thresholds(const RunConfig& cfg);

struct EvaluateOptions {
  std::optional<double> threshold;                 // fixed scalar instead of tuned thresholds
  std::optional<std::filesystem::path> predictions;  // evaluate a predictions CSV instead of the model
  std::optional<std::filesystem::path> svg;
};

CommandResult run_evaluate(const RunConfig& cfg, const EvaluateOptions& opt);

struct PredictOptions {
  std::filesystem::path input;  // one sentence per line
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> probabilities;  // also write a predictions CSV
  std::optional<double> threshold;
};

CommandResult run_predict(const RunConfig& cfg, const PredictOptions& opt);
CommandResult run_report(const RunConfig& cfg);

/// Process exit code for an exception escaping a command: 1 usage, 2 data,
/// 3 numeric.
int exit_code_for(const std::exception& e);

/// Minimal bar chart of per-label F1 scores.
std::string f1_bar_chart_svg(const std::vector<LabelReportRow>& rows, const ArtifactHeader& header,
                             std::string_view title);

}  // namespace emotag
