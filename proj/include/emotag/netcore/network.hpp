// SPDX-License-Identifier: Apache-2.0
//
// The full network: embedding -> conv1d -> batch norm + ReLU -> max pool ->
// BiLSTM -> attention (or temporal average) pooling -> dense + ReLU ->
// dropout -> sigmoid output.
#pragma once

#include <optional>
#include <random>
#include <vector>

#include "emotag/netcore/layers.hpp"
#include "emotag/netcore/params.hpp"

namespace emotag {

template <typename T>
using GradientSet = TensorSet<T>;

struct ForwardOptions {
  Mode mode = Mode::Infer;
  std::mt19937_64* rng = nullptr;  // dropout sampling in train mode
  /// Round activations (and, on the way back, gradients) through binary16.
  bool half_precision = false;
};

template <typename T>
struct ForwardCache {
  Mode mode = Mode::Infer;
  IdMatrix ids;
  Seq<T> embedded;
  ConvCache<T> conv;
  Seq<T> conv_out;
  BatchNormCache<T> bn;
  Seq<T> bn_out;
  PoolCache<T> pool;
  Seq<T> pooled;
  LstmCache<T> lstm_fwd, lstm_bwd;
  Seq<T> lstm_out;
  Mat<T> attention_weights;  // batch x steps; empty without attention
  Mat<T> context;
  HeadCache<T> head;
  bool half_precision = false;
  bool valid = false;
};

/// Layer output shapes of the last forward pass, for shape-chain checks.
struct ShapeTrace {
  std::vector<std::vector<Eigen::Index>> shapes;
};

template <typename T>
class Network {
 public:
  /// Train- and infer-capable; train passes update the moving statistics.
  explicit Network(ModelParams<T>& params) : params_(&params), mutable_params_(&params) {
    params.config.validate();
  }
  /// Inference only.
  explicit Network(const ModelParams<T>& params) : params_(&params) { params.config.validate(); }

  /// Returns batch x num_labels probabilities. Train mode updates the
  /// batch-norm moving statistics and samples a dropout mask unless one was
  /// pinned with fix_dropout_mask().
  Mat<T> forward(const IdMatrix& ids, const ForwardOptions& opt = {});

  /// Gradients of mean BCE (times `loss_scale`) for every trainable tensor.
  /// Requires a preceding train-mode forward.
  GradientSet<T> backward(const LabelMatrix& y, T loss_scale = T(1));

  double loss(const LabelMatrix& y) const;

  /// Reuse a dropout mask (batch x dense_units) for every train-mode pass.
  void fix_dropout_mask(std::optional<Mat<T>> mask) { fixed_mask_ = std::move(mask); }

  const ForwardCache<T>& cache() const { return cache_; }
  ShapeTrace shape_trace() const;
  const ModelParams<T>& params() const { return *params_; }

 private:
  const Mat<T>& weight(ParamId id) const;

  const ModelParams<T>* params_;
  ModelParams<T>* mutable_params_ = nullptr;
  TensorSet<T> half_weights_;
  ForwardCache<T> cache_;
  std::optional<Mat<T>> fixed_mask_;
};

/// Batched inference, returning N x num_labels probabilities in double.
Mat<double> predict(const ModelParams<float>& params, const IdMatrix& ids,
                    Eigen::Index batch_size = 256, bool half_precision = false);

/// Mean BCE over a dataset in inference mode.
double evaluate_loss(const ModelParams<float>& params, const IdMatrix& ids, const LabelMatrix& y,
                     Eigen::Index batch_size = 256, bool half_precision = false);

}  // namespace emotag
