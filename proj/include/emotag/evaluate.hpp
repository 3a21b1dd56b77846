// SPDX-License-Identifier: Apache-2.0
//
// Multi-label metrics, per-label threshold tuning and report emission.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emotag/corpus.hpp"

namespace emotag {

struct PredictionMatrix {
  Mat<double> probs;  // N x num_labels, entries in [0, 1]
  Split source = Split::Test;

  void validate() const;
};

using ThresholdVector = std::vector<double>;

/// pred[i][j] = probs[i][j] >= tau[j].
LabelMatrix binarize(const Mat<double>& probs, const ThresholdVector& tau);
LabelMatrix binarize(const Mat<double>& probs, double tau);

double subset_accuracy(const LabelMatrix& y, const LabelMatrix& p);
/// Both-empty rows score 1.
double jaccard(const LabelMatrix& y, const LabelMatrix& p);
double hamming_loss(const LabelMatrix& y, const LabelMatrix& p);

struct PRF {
  double precision = 0, recall = 0, f1 = 0;
};

PRF micro_prf(const LabelMatrix& y, const LabelMatrix& p);
/// Unweighted mean over all label columns; empty denominators count as 0.
PRF macro_prf(const LabelMatrix& y, const LabelMatrix& p);

/// Mann-Whitney AUC with average ranks for ties; nullopt when the truth
/// column is all positive or all negative.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth);

struct MacroAuc {
  double value = 0;   // NaN when no label is defined
  int defined = 0;
  int undefined = 0;
};

MacroAuc macro_auc(const Mat<double>& probs, const LabelMatrix& y);

/// {0.05, 0.10, ..., 0.95}.
std::vector<double> default_threshold_grid();

/// Per label, the smallest grid value that maximizes that label's F1.
ThresholdVector tune_thresholds(const Mat<double>& val_probs, const LabelMatrix& val_y,
                                std::vector<double> grid = default_threshold_grid());

struct LabelReportRow {
  std::string label;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  std::optional<double> auc;
  std::int64_t support = 0;
  double threshold = 0.5;
};

struct MetricsReport {
  double subset_accuracy = 0, jaccard = 0, hamming_loss = 0;
  PRF micro, macro;
  MacroAuc macro_auc;
  std::vector<LabelReportRow> per_label;
};

std::vector<LabelReportRow> per_label_report(const Mat<double>& probs, const LabelMatrix& y,
                                             const ThresholdVector& tau, const LabelVocabulary& vocab);

MetricsReport evaluate_all(const Mat<double>& probs, const LabelMatrix& y, const ThresholdVector& tau,
                           const LabelVocabulary& vocab);

struct RankedLabels {
  std::vector<std::pair<int, double>> labels;  // (label index, probability), descending
  bool below_threshold = false;                // fallback to the single top label
};

RankedLabels rank_sentence_labels(const std::vector<double>& probs_row, const ThresholdVector& tau,
                                  std::size_t k = 4);

// --- file surfaces ---------------------------------------------------------------

std::string predictions_csv(const Mat<double>& probs, int num_labels = kNumLabels);
PredictionMatrix parse_predictions_csv(std::string_view content, Split source = Split::Test);

std::string thresholds_csv(const ThresholdVector& tau, const LabelVocabulary& vocab);
ThresholdVector parse_thresholds_csv(std::string_view content, const LabelVocabulary& vocab);

std::string aggregate_csv(const MetricsReport& r);
std::string per_label_csv(const std::vector<LabelReportRow>& rows);

}  // namespace emotag
