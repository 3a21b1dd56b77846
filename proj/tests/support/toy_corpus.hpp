// SPDX-License-Identifier: Apache-2.0
//
// Synthetic keyword-separable corpus: each label owns one keyword, every
// sample carries the keywords of its labels among random filler words.
#pragma once

#include <cstdint>
#include <vector>

#include "emotag/corpus.hpp"
#include "emotag/embeddings.hpp"
#include "emotag/netcore/params.hpp"

namespace toy {

struct ToyConfig {
  std::size_t n_train = 2800, n_val = 350, n_test = 350;
  int filler_vocab = 300;
  int min_len = 6, max_len = 18;
  double second_label_rate = 0.3;
  std::uint64_t seed = 2024;
};

struct ToyCorpus {
  std::vector<emotag::Sample> train, val, test;
};

ToyCorpus make_keyword_corpus(const ToyConfig& cfg = {});

struct EncodedToy {
  emotag::TokenizerState tok;
  emotag::EncodedDataset train, val, test;
  emotag::EmbeddingMatrix embedding;
};

/// Gaussian stand-ins for pretrained vectors, one per tokenizer word.
emotag::WordVectors synthetic_vectors(const emotag::TokenizerState& tok, int dim, double stddev,
                                      std::uint64_t seed);

/// Normalizes, fits the tokenizer on train, encodes all splits and builds an
/// embedding of width `dim`. With `vector_stddev` > 0 every vocabulary word
/// gets a synthetic pretrained vector; otherwise all rows take the OOV
/// initialization.
EncodedToy encode_toy(const ToyCorpus& corpus, int dim = emotag::kEmbedDim, std::uint64_t seed = 7,
                      double vector_stddev = 0.0);

/// Random id/label batch for layer-level tests.
emotag::IdMatrix random_ids(Eigen::Index batch, Eigen::Index steps, std::int32_t vocab, std::uint64_t seed);
emotag::LabelMatrix random_labels(Eigen::Index batch, Eigen::Index labels, double rate, std::uint64_t seed);

}  // namespace toy
