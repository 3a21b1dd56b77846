// SPDX-License-Identifier: Apache-2.0
#include "emotag/augment.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <boost/tokenizer.hpp>

#include "emotag/artifact_io.hpp"

namespace emotag {

LabelSet weak_labels_from_probs(const std::vector<double>& prob, double cutoff) {
  if (prob.size() != kNumLabels)
    throw DataError("annotator output must have " + std::to_string(kNumLabels) +
                    " entries, got " + std::to_string(prob.size()));
  LabelSet out;
  for (int j = 0; j < kNumLabels; ++j)
    if (prob[static_cast<std::size_t>(j)] >= cutoff) out.insert(j);
  return out;
}

GateDecision alignment_gate(const WeakLabeledSample& sample, double threshold) {
  if (sample.proposed.empty()) throw DataError("alignment gate needs a nonempty proposed set");
  if (sample.prob.size() != kNumLabels) throw DataError("annotator output has wrong dimension");
  double alignment = 1.0;
  for (int j : sample.proposed) alignment = std::min(alignment, sample.prob.at(static_cast<std::size_t>(j)));
  return alignment > threshold ? GateDecision::Accept : GateDecision::Reject;
}

LabelSet majority_vote(const std::vector<AnnotatorVote>& votes) {
  std::map<int, std::size_t> tally;
  for (const auto& v : votes)
    for (int l : v.labels) ++tally[l];
  LabelSet out;
  for (auto [label, n] : tally)
    if (2 * n > votes.size()) out.insert(label);
  return out;
}

// ---------------------------------------------------------------------------
// Oversampling

std::vector<std::size_t> balance_rows(const LabelMatrix& labels, const BalanceConfig& cfg) {
  if (cfg.max_duplication_factor < 1) throw UsageError("max_duplication_factor must be >= 1");
  if (cfg.target < 0) throw UsageError("balance target must be >= 1");
  const auto n = static_cast<std::size_t>(labels.rows());
  const auto n_labels = static_cast<int>(labels.cols());

  std::vector<std::int64_t> counts(static_cast<std::size_t>(n_labels), 0);
  std::vector<std::vector<std::size_t>> rows_with(static_cast<std::size_t>(n_labels));
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < n_labels; ++j)
      if (labels(static_cast<Eigen::Index>(i), j)) {
        ++counts[static_cast<std::size_t>(j)];
        rows_with[static_cast<std::size_t>(j)].push_back(i);
      }

  std::int64_t target = cfg.target;
  if (target == 0) target = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());

  std::vector<int> order(static_cast<std::size_t>(n_labels));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return counts[static_cast<std::size_t>(a)] < counts[static_cast<std::size_t>(b)];
  });

  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  std::vector<std::int64_t> copies(n, 1);
  std::mt19937_64 rng(cfg.seed);

  for (int j : order) {
    auto& count = counts[static_cast<std::size_t>(j)];
    std::vector<std::size_t> eligible;
    for (std::size_t r : rows_with[static_cast<std::size_t>(j)])
      if (copies[r] < cfg.max_duplication_factor) eligible.push_back(r);
    while (count < target && !eligible.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
      const std::size_t slot = pick(rng);
      const std::size_t r = eligible[slot];
      out.push_back(r);
      for (int k = 0; k < n_labels; ++k)
        counts[static_cast<std::size_t>(k)] += labels(static_cast<Eigen::Index>(r), k) != 0;
      if (++copies[r] >= cfg.max_duplication_factor) {
        eligible[slot] = eligible.back();
        eligible.pop_back();
      }
    }
  }
  return out;
}

EncodedDataset oversample_balance(const EncodedDataset& ds, const BalanceConfig& cfg) {
  if (ds.split != Split::Train) throw DataError("balancing restricted to training split");
  return ds.select(balance_rows(ds.labels, cfg));
}

std::vector<Sample> oversample_balance(const std::vector<Sample>& samples, Split split,
                                       const BalanceConfig& cfg) {
  if (split != Split::Train) throw DataError("balancing restricted to training split");
  LabelMatrix labels = LabelMatrix::Zero(static_cast<Eigen::Index>(samples.size()), kNumLabels);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (int l : samples[i].labels) labels(static_cast<Eigen::Index>(i), l) = 1;
  std::vector<Sample> out;
  for (std::size_t r : balance_rows(labels, cfg)) out.push_back(samples[r]);
  return out;
}

// ---------------------------------------------------------------------------
// Weak supervision

std::vector<double> hash_stub_annotator(std::string_view text) {
  std::vector<double> prob(kNumLabels);
  for (int j = 0; j < kNumLabels; ++j) {
    // splitmix64 over (FNV-1a(text), j)
    std::uint64_t z = std::stoull(fnv1a_hex(text), nullptr, 16) + 0x9e3779b97f4a7c15ull * (j + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    prob[static_cast<std::size_t>(j)] = static_cast<double>(z >> 11) * 0x1.0p-53;
  }
  return prob;
}

std::vector<WeakLabeledSample> annotate(const std::vector<std::string>& texts,
                                        const Annotator& annotator, double cutoff) {
  std::vector<WeakLabeledSample> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    WeakLabeledSample w{t, annotator(t), {}};
    w.proposed = weak_labels_from_probs(w.prob, cutoff);
    out.push_back(std::move(w));
  }
  return out;
}

WeakMergeResult merge_weak_samples(const std::vector<WeakLabeledSample>& weak,
                                   const std::map<std::size_t, std::vector<AnnotatorVote>>& votes,
                                   double alignment_threshold) {
  WeakMergeResult res;
  for (std::size_t i = 0; i < weak.size(); ++i) {
    const auto& w = weak[i];
    if (w.proposed.empty() || alignment_gate(w, alignment_threshold) == GateDecision::Reject) {
      ++res.rejected_alignment;
      continue;
    }
    LabelSet labels = w.proposed;
    if (auto it = votes.find(i); it != votes.end() && !it->second.empty())
      labels = majority_vote(it->second);
    if (labels.empty()) {
      ++res.rejected_review;
      continue;
    }
    res.accepted.push_back(Sample{w.text, std::move(labels)});
  }
  return res;
}

// ---------------------------------------------------------------------------
// CSV surfaces

namespace {

std::vector<std::string> csv_fields(const std::string& line) {
  boost::tokenizer<boost::escaped_list_separator<char>> tok(
      line, boost::escaped_list_separator<char>('\\', ',', '"'));
  return {tok.begin(), tok.end()};
}

bool looks_like_header(const std::vector<std::string>& f, std::string_view first) {
  return !f.empty() && f[0] == first;
}

}  // namespace

std::vector<WeakLabeledSample> parse_weak_csv(std::string_view content, double cutoff) {
  std::vector<WeakLabeledSample> out;
  const auto lines = data_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = ", line " + std::to_string(i + 1);
    std::vector<std::string> f;
    try {
      f = csv_fields(lines[i]);
    } catch (const std::exception&) {
      throw DataError("unparseable CSV" + where);
    }
    if (i == 0 && looks_like_header(f, "text")) continue;
    if (f.size() != kNumLabels + 1)
      throw DataError("weak-label row needs text plus " + std::to_string(kNumLabels) +
                      " probabilities" + where);
    WeakLabeledSample w;
    w.text = f[0];
    for (int j = 0; j < kNumLabels; ++j) {
      const double p = parse_double(f[static_cast<std::size_t>(j + 1)], "probability");
      if (p < 0.0 || p > 1.0) throw DataError("probability outside [0,1]" + where);
      w.prob.push_back(p);
    }
    w.proposed = weak_labels_from_probs(w.prob, cutoff);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<WeakLabeledSample> load_weak_csv(const std::filesystem::path& path, double cutoff) {
  return parse_weak_csv(read_file(path), cutoff);
}

std::map<std::size_t, std::vector<AnnotatorVote>> parse_votes_csv(std::string_view content) {
  std::map<std::size_t, std::vector<AnnotatorVote>> out;
  const auto lines = data_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string where = ", line " + std::to_string(i + 1);
    std::vector<std::string> f;
    try {
      f = csv_fields(lines[i]);
    } catch (const std::exception&) {
      throw DataError("unparseable CSV" + where);
    }
    if (i == 0 && looks_like_header(f, "sample_id")) continue;
    if (f.size() != 3) throw DataError("vote row needs sample_id,annotator_id,labels" + where);
    const auto sample = parse_int(f[0], "sample_id");
    if (sample < 0) throw DataError("negative sample_id" + where);
    AnnotatorVote v;
    v.annotator_id = static_cast<int>(parse_int(f[1], "annotator_id"));
    std::string labels = f[2];
    std::replace(labels.begin(), labels.end(), ';', ' ');
    std::replace(labels.begin(), labels.end(), ',', ' ');
    for (const auto& tok : split_tokens(labels)) {
      const auto l = parse_int(tok, "label index");
      if (l < 0 || l >= kNumLabels) throw DataError("label index out of range" + where);
      v.labels.insert(static_cast<int>(l));
    }
    out[static_cast<std::size_t>(sample)].push_back(std::move(v));
  }
  return out;
}

std::map<std::size_t, std::vector<AnnotatorVote>> load_votes_csv(const std::filesystem::path& path) {
  return parse_votes_csv(read_file(path));
}

}  // namespace emotag
