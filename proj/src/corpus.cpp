// SPDX-License-Identifier: Apache-2.0
#include "emotag/corpus.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "emotag/artifact_io.hpp"

namespace emotag {

// ---------------------------------------------------------------------------
// LabelVocabulary

LabelVocabulary::LabelVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  if (static_cast<int>(names_.size()) != kNumLabels)
    throw DataError("label vocabulary must have exactly " + std::to_string(kNumLabels) +
                    " entries, got " + std::to_string(names_.size()));
  for (int i = 0; i < kNumLabels; ++i) {
    if (names_[i].empty()) throw DataError("empty label name at line " + std::to_string(i + 1));
    if (!index_.emplace(names_[i], i).second)
      throw DataError("duplicate label name '" + names_[i] + "'");
  }
}

LabelVocabulary LabelVocabulary::load(const std::filesystem::path& path) {
  auto lines = data_lines(read_file(path));
  for (auto& l : lines) {
    while (!l.empty() && (l.back() == ' ' || l.back() == '\t')) l.pop_back();
  }
  return LabelVocabulary(std::move(lines));
}

LabelVocabulary LabelVocabulary::go_emotions() {
  return LabelVocabulary({"admiration", "amusement",   "anger",        "annoyance",
                          "approval",   "caring",      "confusion",    "curiosity",
                          "desire",     "disappointment", "disapproval", "disgust",
                          "embarrassment", "excitement", "fear",       "gratitude",
                          "grief",      "joy",         "love",         "nervousness",
                          "optimism",   "pride",       "realization",  "relief",
                          "remorse",    "sadness",     "surprise",     "neutral"});
}

int LabelVocabulary::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw DataError("unknown label '" + std::string(name) + "'");
  return it->second;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw DataError("unknown split '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// TSV ingestion

namespace {

LabelSet parse_labels(std::string_view field, std::size_t line_no) {
  LabelSet labels;
  for (const auto& piece : split(field, ',')) {
    long long idx = 0;
    try {
      idx = parse_int(piece, "label index");
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + ", line " + std::to_string(line_no));
    }
    if (idx < 0 || idx >= kNumLabels)
      throw DataError("label index out of range, line " + std::to_string(line_no));
    labels.insert(static_cast<int>(idx));
  }
  return labels;
}

}  // namespace

std::vector<Sample> parse_dataset(std::string_view content, const LabelVocabulary& vocab) {
  (void)vocab;  // indices are validated against the fixed label count
  std::vector<Sample> out;
  std::size_t line_no = 0;
  bool in_header = true;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (in_header && is_comment_line(line)) continue;
    in_header = false;
    if (line.empty() && pos >= content.size()) break;
    auto fields = split(line, '\t');
    if (fields.size() < 2 || fields.size() > 3)
      throw DataError("malformed line " + std::to_string(line_no) +
                      ": expected text<TAB>labels[<TAB>id]");
    out.push_back(Sample{fields[0], parse_labels(fields[1], line_no)});
  }
  return out;
}

std::vector<Sample> load_dataset(const std::filesystem::path& path, const LabelVocabulary& vocab) {
  return parse_dataset(read_file(path), vocab);
}

void save_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples,
                  std::string_view header) {
  std::string out(header);
  for (const auto& s : samples) {
    out += s.text;
    out += '\t';
    bool first = true;
    for (int l : s.labels) {
      if (!first) out += ',';
      out += std::to_string(l);
      first = false;
    }
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

std::vector<UChar32> decode_utf8(std::string_view s) {
  std::vector<UChar32> cps;
  cps.reserve(s.size());
  std::int32_t i = 0;
  const auto len = static_cast<std::int32_t>(s.size());
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  while (i < len) {
    UChar32 c;
    U8_NEXT(p, i, len, c);
    cps.push_back(c < 0 ? 0xFFFD : c);
  }
  return cps;
}

void append_utf8(std::string& out, UChar32 c) {
  std::uint8_t buf[U8_MAX_LENGTH];
  std::int32_t n = 0;
  UBool err = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, c, err);
  if (!err) out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c); }

bool starts_with_ci(const std::vector<UChar32>& tok, std::string_view prefix) {
  if (tok.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (u_tolower(tok[i]) != static_cast<UChar32>(prefix[i])) return false;
  }
  return true;
}

bool is_dropped_token(const std::vector<UChar32>& tok) {
  return (!tok.empty() && tok.front() == '@') || starts_with_ci(tok, "http://") ||
         starts_with_ci(tok, "https://") || starts_with_ci(tok, "www.");
}

}  // namespace

std::string normalize_text(std::string_view raw) {
  const auto cps = decode_utf8(raw);

  // Steps 1-2 operate on whitespace-delimited tokens; the separators are
  // kept so that step 3 sees the original spacing.
  std::vector<UChar32> kept;
  kept.reserve(cps.size());
  std::size_t i = 0;
  while (i < cps.size()) {
    if (is_space(cps[i])) {
      kept.push_back(' ');
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < cps.size() && !is_space(cps[j])) ++j;
    std::vector<UChar32> tok(cps.begin() + static_cast<std::ptrdiff_t>(i),
                             cps.begin() + static_cast<std::ptrdiff_t>(j));
    if (!is_dropped_token(tok)) kept.insert(kept.end(), tok.begin(), tok.end());
    i = j;
  }

  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (UChar32 c : kept) {
    const bool keep = u_isalpha(c) || u_isdigit(c);
    if (!keep) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    append_utf8(out, u_tolower(c));
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> toks;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(' ', pos);
    if (end == std::string_view::npos) end = text.size();
    if (end > pos) toks.emplace_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return toks;
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

std::vector<std::pair<std::string, std::int64_t>> ranked_counts(
    const std::vector<Sample>& samples) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& s : samples)
    for (auto& t : split_tokens(s.text)) ++counts[std::move(t)];
  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

}  // namespace

std::int32_t TokenizerState::id_of(const std::string& token) const {
  auto it = word_index.find(token);
  return it == word_index.end() ? kOovId : it->second;
}

void TokenizerState::save(const std::filesystem::path& path, std::string_view header) const {
  std::string out(header);
  out += "fitted_on\t" + std::string(to_string(fitted_on)) + '\n';
  for (std::size_t i = 0; i < index_word.size(); ++i)
    out += index_word[i] + '\t' + std::to_string(i + 2) + '\n';
  write_file(path, out);
}

TokenizerState TokenizerState::load(const std::filesystem::path& path) {
  auto lines = data_lines(read_file(path));
  if (lines.empty() || !lines[0].starts_with("fitted_on\t"))
    throw DataError("tokenizer file missing fitted_on line: " + path.string());
  TokenizerState tok;
  tok.fitted_on = parse_split(std::string_view(lines[0]).substr(10));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = split(lines[i], '\t');
    if (f.size() != 2) throw DataError("malformed tokenizer line " + std::to_string(i + 1));
    auto id = parse_int(f[1], "token id");
    if (id != static_cast<long long>(i + 1))
      throw DataError("non-contiguous token id at line " + std::to_string(i + 1));
    tok.word_index.emplace(f[0], static_cast<std::int32_t>(id));
    tok.index_word.push_back(f[0]);
  }
  tok.vocab_size = static_cast<std::int32_t>(tok.index_word.size() + 2);
  return tok;
}

TokenizerState fit_tokenizer(const std::vector<Sample>& train) {
  if (train.empty()) throw DataError("empty corpus");
  TokenizerState tok;
  tok.fitted_on = Split::Train;
  for (auto& [token, count] : ranked_counts(train)) {
    const auto id = static_cast<std::int32_t>(tok.index_word.size() + 2);
    tok.word_index.emplace(token, id);
    tok.index_word.push_back(token);
  }
  tok.vocab_size = static_cast<std::int32_t>(tok.index_word.size() + 2);
  return tok;
}

// ---------------------------------------------------------------------------
// Encoding

std::vector<std::int32_t> encode_text(std::string_view text, const TokenizerState& tok) {
  const auto toks = split_tokens(text);
  std::vector<std::int32_t> row(kSeqLen, kPadId);
  const std::size_t n = std::min<std::size_t>(toks.size(), kSeqLen);
  const std::size_t first_tok = toks.size() - n;
  const std::size_t first_slot = kSeqLen - n;
  for (std::size_t k = 0; k < n; ++k) row[first_slot + k] = tok.id_of(toks[first_tok + k]);
  return row;
}

EncodedDataset encode(const std::vector<Sample>& samples, const TokenizerState& tok,
                      const LabelVocabulary& vocab, Split split) {
  (void)vocab;
  EncodedDataset ds;
  ds.split = split;
  const auto n = static_cast<Eigen::Index>(samples.size());
  ds.sequences = IdMatrix::Zero(n, kSeqLen);
  ds.labels = LabelMatrix::Zero(n, kNumLabels);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    const auto row = encode_text(s.text, tok);
    for (int t = 0; t < kSeqLen; ++t) ds.sequences(i, t) = row[static_cast<std::size_t>(t)];
    for (int l : s.labels) ds.labels(i, l) = 1;
  }
  return ds;
}

EncodedDataset EncodedDataset::select(const std::vector<std::size_t>& rows) const {
  EncodedDataset out;
  out.split = split;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.sequences.resize(n, sequences.cols());
  out.labels.resize(n, labels.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    out.sequences.row(i) = sequences.row(r);
    out.labels.row(i) = labels.row(r);
  }
  return out;
}

void EncodedDataset::save(const std::filesystem::path& path, std::string_view header) const {
  std::string out(header);
  out += "split\t" + std::string(to_string(split)) + '\n';
  for (Eigen::Index i = 0; i < size(); ++i) {
    for (Eigen::Index t = 0; t < sequences.cols(); ++t) {
      if (t) out += ' ';
      out += std::to_string(sequences(i, t));
    }
    out += '\t';
    for (Eigen::Index j = 0; j < labels.cols(); ++j) out += labels(i, j) ? '1' : '0';
    out += '\n';
  }
  write_file(path, out);
}

EncodedDataset EncodedDataset::load(const std::filesystem::path& path) {
  auto lines = data_lines(read_file(path));
  if (lines.empty() || !lines[0].starts_with("split\t"))
    throw DataError("encoded dataset missing split line: " + path.string());
  EncodedDataset ds;
  ds.split = parse_split(std::string_view(lines[0]).substr(6));
  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  ds.sequences.resize(n, kSeqLen);
  ds.labels.resize(n, kNumLabels);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& line = lines[static_cast<std::size_t>(i + 1)];
    const std::string where = " at line " + std::to_string(i + 2);
    auto f = emotag::split(line, '\t');
    if (f.size() != 2) throw DataError("malformed encoded row" + where);
    auto ids = emotag::split(f[0], ' ');
    if (ids.size() != kSeqLen || f[1].size() != kNumLabels)
      throw DataError("encoded row has wrong arity" + where);
    for (int t = 0; t < kSeqLen; ++t)
      ds.sequences(i, t) = static_cast<std::int32_t>(parse_int(ids[static_cast<std::size_t>(t)], "token id"));
    for (int j = 0; j < kNumLabels; ++j) {
      const char c = f[1][static_cast<std::size_t>(j)];
      if (c != '0' && c != '1') throw DataError("label bit must be 0 or 1" + where);
      ds.labels(i, j) = c == '1';
    }
  }
  return ds;
}

std::vector<std::int64_t> label_distribution(const EncodedDataset& ds) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(ds.labels.cols()), 0);
  for (Eigen::Index i = 0; i < ds.labels.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.labels.cols(); ++j)
      counts[static_cast<std::size_t>(j)] += ds.labels(i, j) != 0;
  return counts;
}

std::vector<std::pair<std::string, std::int64_t>> top_k_words(const std::vector<Sample>& samples,
                                                              std::size_t k) {
  auto ranked = ranked_counts(samples);
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

SplitSamples split_samples(std::vector<Sample> samples, std::uint64_t seed,
                           double train_fraction, double val_fraction) {
  if (train_fraction <= 0 || val_fraction < 0 || train_fraction + val_fraction > 1)
    throw UsageError("invalid split fractions");
  std::mt19937_64 rng(seed);
  std::shuffle(samples.begin(), samples.end(), rng);
  const auto n = samples.size();
  const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * train_fraction);
  const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * val_fraction);
  SplitSamples out;
  auto it = std::make_move_iterator(samples.begin());
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(it + static_cast<std::ptrdiff_t>(n_train),
                 it + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_val),
                  std::make_move_iterator(samples.end()));
  return out;
}

}  // namespace emotag
