// SPDX-License-Identifier: Apache-2.0
//
// Label balancing by oversampling, plus the quality gates applied to
// weakly labeled samples before they join the training split.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "emotag/corpus.hpp"

namespace emotag {

using LabelProbs = std::array<double, kNumLabels>;

struct WeakLabeledSample {
  std::string text;
  std::vector<double> prob;  // kNumLabels entries in [0, 1]
  LabelSet proposed;
};

struct AnnotatorVote {
  int annotator_id = 0;
  LabelSet labels;
};

struct BalanceConfig {
  std::int64_t target = 0;  // 0 means "max label count of the input"
  std::uint64_t seed = 0;
  std::int64_t max_duplication_factor = 1000;  // total occurrences allowed per source row
};

enum class GateDecision { Accept, Reject };

/// {j : prob[j] >= cutoff}.
LabelSet weak_labels_from_probs(const std::vector<double>& prob, double cutoff = 0.5);

/// Accepts iff every proposed label's probability is strictly above threshold.
GateDecision alignment_gate(const WeakLabeledSample& sample, double threshold = 0.7);

/// Labels chosen by strictly more than half of the voters.
LabelSet majority_vote(const std::vector<AnnotatorVote>& votes);

/// Row order of the balanced dataset: every original row once, in order,
/// followed by the appended duplicates. `labels` is N x L binary.
std::vector<std::size_t> balance_rows(const LabelMatrix& labels, const BalanceConfig& cfg);

/// Training-split only; validation and test splits are rejected.
EncodedDataset oversample_balance(const EncodedDataset& ds, const BalanceConfig& cfg);
std::vector<Sample> oversample_balance(const std::vector<Sample>& samples, Split split,
                                       const BalanceConfig& cfg);

/// Anything mapping text to a kNumLabels probability vector.
using Annotator = std::function<std::vector<double>(std::string_view text)>;

/// Deterministic stand-in for a trained annotator: probabilities derived
/// from a hash of the text and the label index.
std::vector<double> hash_stub_annotator(std::string_view text);

/// Re-labels raw texts through an annotator: labels at or above `cutoff`
/// are proposed.
std::vector<WeakLabeledSample> annotate(const std::vector<std::string>& texts,
                                        const Annotator& annotator, double cutoff = 0.5);

struct WeakMergeResult {
  std::vector<Sample> accepted;
  std::size_t rejected_alignment = 0;
  std::size_t rejected_review = 0;
};

/// Runs the alignment gate, then (when votes are present for a sample) the
/// reviewers' majority vote replaces the proposed label set. Samples whose
/// final set is empty are dropped. `votes` is keyed by 0-based sample row.
WeakMergeResult merge_weak_samples(const std::vector<WeakLabeledSample>& weak,
                                   const std::map<std::size_t, std::vector<AnnotatorVote>>& votes,
                                   double alignment_threshold = 0.7);

/// CSV `text,p0,...,p27`; the text may be double-quoted.
std::vector<WeakLabeledSample> load_weak_csv(const std::filesystem::path& path, double cutoff = 0.5);
std::vector<WeakLabeledSample> parse_weak_csv(std::string_view content, double cutoff = 0.5);

/// CSV `sample_id,annotator_id,labels`, labels separated by `;` or spaces
/// (or a quoted comma list).
std::map<std::size_t, std::vector<AnnotatorVote>> load_votes_csv(const std::filesystem::path& path);
std::map<std::size_t, std::vector<AnnotatorVote>> parse_votes_csv(std::string_view content);

}  // namespace emotag
