// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion: GoEmotions-style TSV loading, text normalization,
// train-only tokenizer fitting and fixed-length encoding.
#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emotag/common.hpp"

namespace emotag {

using LabelSet = std::set<int>;

class LabelVocabulary {
 public:
  /// Requires exactly kNumLabels unique, non-empty names.
  explicit LabelVocabulary(std::vector<std::string> names);

  /// One name per line; blank trailing lines are ignored.
  static LabelVocabulary load(const std::filesystem::path& path);
  /// The 28 GoEmotions categories in their canonical order.
  static LabelVocabulary go_emotions();

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int index) const { return names_.at(index); }
  int index_of(std::string_view name) const;
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct Sample {
  std::string text;
  LabelSet labels;
};

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct TokenizerState {
  std::unordered_map<std::string, std::int32_t> word_index;
  std::vector<std::string> index_word;  // index_word[id - 2] is the token for id
  std::int32_t vocab_size = 2;
  Split fitted_on = Split::Train;

  std::int32_t id_of(const std::string& token) const;
  void save(const std::filesystem::path& path, std::string_view header = {}) const;
  static TokenizerState load(const std::filesystem::path& path);
};

struct EncodedDataset {
  IdMatrix sequences;   // N x kSeqLen
  LabelMatrix labels;   // N x kNumLabels, entries 0/1
  Split split = Split::Train;

  std::ptrdiff_t size() const { return sequences.rows(); }
  EncodedDataset select(const std::vector<std::size_t>& rows) const;

  void save(const std::filesystem::path& path, std::string_view header = {}) const;
  static EncodedDataset load(const std::filesystem::path& path);
};

/// Reads `text<TAB>labels[<TAB>id]` lines; label indices are comma separated.
std::vector<Sample> load_dataset(const std::filesystem::path& path, const LabelVocabulary& vocab);
std::vector<Sample> parse_dataset(std::string_view content, const LabelVocabulary& vocab);
void save_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples,
                  std::string_view header = {});

/// Drops @mentions and URLs, replaces anything but letters, digits and
/// whitespace with a space, lowercases, collapses whitespace.
std::string normalize_text(std::string_view raw);

/// Splits on single spaces, skipping empty pieces.
std::vector<std::string> split_tokens(std::string_view text);

TokenizerState fit_tokenizer(const std::vector<Sample>& train);

EncodedDataset encode(const std::vector<Sample>& samples, const TokenizerState& tok,
                      const LabelVocabulary& vocab, Split split = Split::Train);

/// Encodes a single normalized text to a kSeqLen id row.
std::vector<std::int32_t> encode_text(std::string_view text, const TokenizerState& tok);

std::vector<std::int64_t> label_distribution(const EncodedDataset& ds);

std::vector<std::pair<std::string, std::int64_t>> top_k_words(const std::vector<Sample>& samples,
                                                              std::size_t k);

struct SplitSamples {
  std::vector<Sample> train, val, test;
};

/// Seeded shuffle followed by a train/val/test partition (defaults 8:1:1).
SplitSamples split_samples(std::vector<Sample> samples, std::uint64_t seed,
                           double train_fraction = 0.8, double val_fraction = 0.1);

}  // namespace emotag
