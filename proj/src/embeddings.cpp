// SPDX-License-Identifier: Apache-2.0
#include "emotag/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "emotag/artifact_io.hpp"

namespace emotag {

WordVectors parse_vec(std::string_view content, int expected_dim) {
  const auto lines = data_lines(content);
  if (lines.empty() || lines[0].empty()) throw DataError("missing header");
  const auto head = split_tokens(lines[0]);
  if (head.size() != 2) throw DataError("malformed header at line 1");
  const auto n = parse_int(head[0], "vector count");
  const auto dim = parse_int(head[1], "vector dimension");
  if (n < 0 || dim <= 0) throw DataError("invalid header at line 1");
  if (expected_dim > 0 && dim != expected_dim)
    throw DataError("vector dimension " + std::to_string(dim) + " does not match expected " +
                    std::to_string(expected_dim));
  if (static_cast<long long>(lines.size()) - 1 != n)
    throw DataError("header declares " + std::to_string(n) + " vectors, file has " +
                    std::to_string(lines.size() - 1));

  WordVectors out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = " at line " + std::to_string(i + 1);
    const auto f = split_tokens(lines[i]);
    if (static_cast<long long>(f.size()) != dim + 1)
      throw DataError("expected " + std::to_string(dim) + " components" + where);
    std::vector<float> v(static_cast<std::size_t>(dim));
    for (std::size_t k = 0; k < v.size(); ++k) {
      try {
        v[k] = static_cast<float>(parse_double(f[k + 1], "vector component"));
      } catch (const DataError& e) {
        throw DataError(e.what() + where);
      }
    }
    out.insert_or_assign(f[0], std::move(v));
  }
  return out;
}

WordVectors load_vec(const std::filesystem::path& path, int expected_dim) {
  return parse_vec(read_file(path), expected_dim);
}

EmbeddingMatrix build_matrix(const WordVectors& vecs, const TokenizerState& tok, int dim,
                             std::uint64_t seed) {
  EmbeddingMatrix emb;
  emb.dim = dim;
  emb.values = Mat<float>::Zero(tok.vocab_size, dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unif(-0.05f, 0.05f);
  auto fill_random = [&](Eigen::Index row) {
    for (int c = 0; c < dim; ++c) emb.values(row, c) = unif(rng);
  };
  fill_random(kOovId);
  for (std::size_t i = 0; i < tok.index_word.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i + 2);
    auto it = vecs.find(tok.index_word[i]);
    if (it == vecs.end()) {
      fill_random(row);
      continue;
    }
    if (static_cast<int>(it->second.size()) != dim)
      throw DataError("vector for '" + it->first + "' has dimension " +
                      std::to_string(it->second.size()));
    for (int c = 0; c < dim; ++c) emb.values(row, c) = it->second[static_cast<std::size_t>(c)];
  }
  return emb;
}

std::vector<double> label_vector(std::string_view label_name, const EmbeddingMatrix& emb,
                                 const TokenizerState& tok) {
  auto toks = split_tokens(normalize_text(label_name));
  std::vector<double> v(static_cast<std::size_t>(emb.values.cols()), 0.0);
  if (toks.empty()) return v;
  for (const auto& t : toks) {
    const auto row = tok.id_of(t);
    for (Eigen::Index c = 0; c < emb.values.cols(); ++c)
      v[static_cast<std::size_t>(c)] += emb.values(row, c);
  }
  for (auto& x : v) x /= static_cast<double>(toks.size());
  return v;
}

Mat<double> cosine_similarity_matrix(const std::vector<std::vector<double>>& vectors) {
  const auto k = static_cast<Eigen::Index>(vectors.size());
  std::vector<double> norms(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    double s = 0;
    for (double x : vectors[i]) s += x * x;
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw DataError("zero-norm vector at index " + std::to_string(i));
    if (vectors[i].size() != vectors[0].size())
      throw DataError("vector " + std::to_string(i) + " has mismatched dimension");
  }
  Mat<double> m(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    m(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const auto& a = vectors[static_cast<std::size_t>(i)];
      const auto& b = vectors[static_cast<std::size_t>(j)];
      double dot = 0;
      for (std::size_t c = 0; c < a.size(); ++c) dot += a[c] * b[c];
      double cos = dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
      cos = std::clamp(cos, -1.0, 1.0);
      m(i, j) = m(j, i) = cos;
    }
  }
  return m;
}

std::string cosine_matrix_csv(const Mat<double>& m, const std::vector<std::string>& names) {
  std::string out = "label";
  for (const auto& n : names) out += ',' + n;
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += names.at(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += ',' + format_g9(m(i, j));
    out += '\n';
  }
  return out;
}

}  // namespace emotag
