// SPDX-License-Identifier: Apache-2.0
//
// FastText `.vec` ingestion and the frozen embedding matrix.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emotag/corpus.hpp"

namespace emotag {

inline constexpr int kEmbedDim = 300;

using WordVectors = std::unordered_map<std::string, std::vector<float>>;

struct EmbeddingMatrix {
  Mat<float> values;  // vocab_size x dim; row 0 is padding
  int dim = kEmbedDim;
  bool trainable = false;

  std::int32_t vocab_size() const { return static_cast<std::int32_t>(values.rows()); }
};

/// Header `V D` followed by V lines `token v1 ... vD`. If `expected_dim` is
/// positive, D must match it.
WordVectors load_vec(const std::filesystem::path& path, int expected_dim = 0);
WordVectors parse_vec(std::string_view content, int expected_dim = 0);

/// Row i holds the vector of the token with id i. Padding is zero; OOV and
/// tokens missing from `vecs` get seeded uniform values in [-0.05, 0.05].
EmbeddingMatrix build_matrix(const WordVectors& vecs, const TokenizerState& tok,
                             int dim = kEmbedDim, std::uint64_t seed = 0);

/// Embedding of a label name: mean of the rows of its tokens. Tokens
/// unknown to the tokenizer fall back to the OOV row.
std::vector<double> label_vector(std::string_view label_name, const EmbeddingMatrix& emb,
                                 const TokenizerState& tok);

/// M[i][j] = cos(v_i, v_j). Throws naming the first zero-norm vector.
Mat<double> cosine_similarity_matrix(const std::vector<std::vector<double>>& vectors);

/// CSV with a header row of names, one row per name.
std::string cosine_matrix_csv(const Mat<double>& m, const std::vector<std::string>& names);

}  // namespace emotag
