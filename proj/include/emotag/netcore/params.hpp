// SPDX-License-Identifier: Apache-2.0
//
// Model configuration and parameter storage for the CNN-BiLSTM-attention
// network. Trainable tensors live in a fixed-order array so optimizers,
// gradient checks and checkpoints can iterate them uniformly.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "emotag/common.hpp"

namespace emotag {

struct ModelConfig {
  int seq_len = kSeqLen;
  int embed_dim = 300;
  int conv_filters = 64;
  int conv_kernel = 5;
  int pool_size = 2;
  int lstm_units = 128;
  int dense_units = 128;
  double dropout_rate = 0.5;
  int num_labels = kNumLabels;
  bool use_attention = true;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;

  int conv_len() const { return seq_len - conv_kernel + 1; }
  int pooled_len() const { return conv_len() / pool_size; }
  int lstm_out() const { return 2 * lstm_units; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class ParamId : int {
  ConvKernel,
  ConvBias,
  BnGamma,
  BnBeta,
  LstmFwdKernel,
  LstmFwdRecurrent,
  LstmFwdBias,
  LstmBwdKernel,
  LstmBwdRecurrent,
  LstmBwdBias,
  AttnKernel,
  AttnBias,
  DenseKernel,
  DenseBias,
  OutKernel,
  OutBias,
};
inline constexpr int kNumTrainable = 16;

std::string_view param_name(ParamId id);
inline ParamId param_id(int i) { return static_cast<ParamId>(i); }

/// Shape of a trainable tensor; attention tensors are 0x0 when attention is off.
std::pair<Eigen::Index, Eigen::Index> param_shape(const ModelConfig& cfg, ParamId id);

template <typename T>
using TensorSet = std::array<Mat<T>, kNumTrainable>;

template <typename T>
struct ModelParams {
  ModelConfig config;
  Mat<T> embedding;  // frozen, vocab_size x embed_dim
  TensorSet<T> trainable;
  Mat<T> bn_moving_mean;  // frozen statistics, 1 x conv_filters
  Mat<T> bn_moving_var;

  Mat<T>& operator[](ParamId id) { return trainable[static_cast<std::size_t>(id)]; }
  const Mat<T>& operator[](ParamId id) const { return trainable[static_cast<std::size_t>(id)]; }
  std::int32_t vocab_size() const { return static_cast<std::int32_t>(embedding.rows()); }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    out.embedding = embedding.template cast<U>();
    for (int i = 0; i < kNumTrainable; ++i)
      out.trainable[static_cast<std::size_t>(i)] =
          trainable[static_cast<std::size_t>(i)].template cast<U>();
    out.bn_moving_mean = bn_moving_mean.template cast<U>();
    out.bn_moving_var = bn_moving_var.template cast<U>();
    return out;
  }
};

/// Zero-filled tensor set shaped like the model's trainable parameters.
template <typename T>
TensorSet<T> zeros_like(const ModelConfig& cfg) {
  TensorSet<T> out;
  for (int i = 0; i < kNumTrainable; ++i) {
    auto [r, c] = param_shape(cfg, param_id(i));
    out[static_cast<std::size_t>(i)] = Mat<T>::Zero(r, c);
  }
  return out;
}

/// Glorot-uniform kernels, orthogonal recurrent kernels, unit forget-gate
/// bias, identity batch-norm. The embedding is copied in as given.
ModelParams<float> init_params(const ModelConfig& cfg, Mat<float> embedding, std::uint64_t seed);

struct ParamCounts {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
  std::int64_t frozen = 0;
  std::map<std::string, std::int64_t> per_layer;  // keyed by layer name
};

/// Closed-form counts from the layer formulas.
ParamCounts count_params(const ModelConfig& cfg, std::int64_t vocab_size);

/// Counts read off the allocated tensors.
template <typename T>
ParamCounts count_params(const ModelParams<T>& p);

}  // namespace emotag
