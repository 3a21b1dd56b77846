// SPDX-License-Identifier: Apache-2.0
#include "support/toy_corpus.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace toy {

using namespace emotag;

ToyCorpus make_keyword_corpus(const ToyConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> label(0, kNumLabels - 1);
  std::uniform_int_distribution<int> filler(0, cfg.filler_vocab - 1);
  std::uniform_int_distribution<int> len(cfg.min_len, cfg.max_len);
  std::bernoulli_distribution second(cfg.second_label_rate);

  auto make = [&](std::size_t n) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      // Round-robin primary label keeps every label populated.
      s.labels.insert(static_cast<int>(i % kNumLabels));
      if (second(rng)) s.labels.insert(label(rng));
      std::vector<std::string> words;
      const int n_words = len(rng);
      for (int w = 0; w < n_words; ++w) words.push_back("w" + std::to_string(filler(rng)));
      for (int l : s.labels) {
        std::uniform_int_distribution<std::size_t> pos(0, words.size());
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos(rng)), "Key" + std::to_string(l) + "!");
      }
      for (const auto& w : words) s.text += (s.text.empty() ? "" : " ") + w;
      out.push_back(std::move(s));
    }
    return out;
  };
  ToyCorpus c;
  c.train = make(cfg.n_train);
  c.val = make(cfg.n_val);
  c.test = make(cfg.n_test);
  return c;
}

WordVectors synthetic_vectors(const TokenizerState& tok, int dim, double stddev, std::uint64_t seed) {
  std::vector<std::pair<std::int32_t, std::string>> words;
  for (const auto& [w, id] : tok.word_index) words.emplace_back(id, w);
  std::sort(words.begin(), words.end());
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, static_cast<float>(stddev));
  WordVectors vecs;
  for (const auto& [id, w] : words) {
    std::vector<float> v(static_cast<std::size_t>(dim));
    for (auto& x : v) x = g(rng);
    vecs.emplace(w, std::move(v));
  }
  return vecs;
}

EncodedToy encode_toy(const ToyCorpus& corpus, int dim, std::uint64_t seed, double vector_stddev) {
  auto norm = [](std::vector<Sample> s) {
    for (auto& x : s) x.text = normalize_text(x.text);
    return s;
  };
  const auto vocab = LabelVocabulary::go_emotions();
  const auto train = norm(corpus.train), val = norm(corpus.val), test = norm(corpus.test);
  EncodedToy e;
  e.tok = fit_tokenizer(train);
  e.train = encode(train, e.tok, vocab, Split::Train);
  e.val = encode(val, e.tok, vocab, Split::Val);
  e.test = encode(test, e.tok, vocab, Split::Test);
  e.embedding = build_matrix(vector_stddev > 0 ? synthetic_vectors(e.tok, dim, vector_stddev, seed) : WordVectors{},
                             e.tok, dim, seed);
  return e;
}

IdMatrix random_ids(Eigen::Index batch, Eigen::Index steps, std::int32_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int32_t> id(0, vocab - 1);
  IdMatrix m(batch, steps);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = id(rng);
  return m;
}

LabelMatrix random_labels(Eigen::Index batch, Eigen::Index labels, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution on(rate);
  LabelMatrix m(batch, labels);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = on(rng);
  return m;
}

}  // namespace toy
