// SPDX-License-Identifier: Apache-2.0
#include "emotag/netcore/params.hpp"

#include <cmath>
#include <random>
#include <tuple>

namespace emotag {

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("invalid model config: ") + what);
  };
  require(seq_len > 0 && embed_dim > 0, "seq_len and embed_dim must be positive");
  require(conv_filters > 0 && conv_kernel > 0 && conv_kernel <= seq_len,
          "conv kernel must fit the sequence");
  require(pool_size == 2, "pool_size must be 2");
  require(conv_len() % pool_size == 0, "conv output length must be even");
  require(lstm_units > 0 && dense_units > 0 && num_labels > 0, "layer widths must be positive");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0,1)");
  require(bn_momentum >= 0.0 && bn_momentum < 1.0 && bn_epsilon > 0.0, "bad batch-norm constants");
}

std::string_view param_name(ParamId id) {
  switch (id) {
    case ParamId::ConvKernel: return "conv/kernel";
    case ParamId::ConvBias: return "conv/bias";
    case ParamId::BnGamma: return "batch_norm/gamma";
    case ParamId::BnBeta: return "batch_norm/beta";
    case ParamId::LstmFwdKernel: return "lstm_fwd/kernel";
    case ParamId::LstmFwdRecurrent: return "lstm_fwd/recurrent_kernel";
    case ParamId::LstmFwdBias: return "lstm_fwd/bias";
    case ParamId::LstmBwdKernel: return "lstm_bwd/kernel";
    case ParamId::LstmBwdRecurrent: return "lstm_bwd/recurrent_kernel";
    case ParamId::LstmBwdBias: return "lstm_bwd/bias";
    case ParamId::AttnKernel: return "attention/kernel";
    case ParamId::AttnBias: return "attention/bias";
    case ParamId::DenseKernel: return "dense/kernel";
    case ParamId::DenseBias: return "dense/bias";
    case ParamId::OutKernel: return "output/kernel";
    case ParamId::OutBias: return "output/bias";
  }
  return "?";
}

std::pair<Eigen::Index, Eigen::Index> param_shape(const ModelConfig& c, ParamId id) {
  const Eigen::Index gates = 4 * c.lstm_units;
  switch (id) {
    case ParamId::ConvKernel: return {c.conv_kernel * c.embed_dim, c.conv_filters};
    case ParamId::ConvBias:
    case ParamId::BnGamma:
    case ParamId::BnBeta: return {1, c.conv_filters};
    case ParamId::LstmFwdKernel:
    case ParamId::LstmBwdKernel: return {c.conv_filters, gates};
    case ParamId::LstmFwdRecurrent:
    case ParamId::LstmBwdRecurrent: return {c.lstm_units, gates};
    case ParamId::LstmFwdBias:
    case ParamId::LstmBwdBias: return {1, gates};
    case ParamId::AttnKernel:
      return c.use_attention ? std::pair<Eigen::Index, Eigen::Index>{c.lstm_out(), 1}
                             : std::pair<Eigen::Index, Eigen::Index>{0, 0};
    case ParamId::AttnBias:
      return c.use_attention ? std::pair<Eigen::Index, Eigen::Index>{1, 1}
                             : std::pair<Eigen::Index, Eigen::Index>{0, 0};
    case ParamId::DenseKernel: return {c.lstm_out(), c.dense_units};
    case ParamId::DenseBias: return {1, c.dense_units};
    case ParamId::OutKernel: return {c.dense_units, c.num_labels};
    case ParamId::OutBias: return {1, c.num_labels};
  }
  return {0, 0};
}

namespace {

void glorot_uniform(Mat<float>& w, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> unif(-limit, limit);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(unif(rng));
}

// Keras Orthogonal: QR of a Gaussian matrix, sign-corrected by diag(R).
void orthogonal(Mat<float>& w, std::mt19937_64& rng) {
  const Eigen::Index rows = w.rows(), cols = w.cols();
  const bool tall = rows >= cols;
  Eigen::MatrixXd a(tall ? rows : cols, tall ? cols : rows);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  w = (tall ? q : Eigen::MatrixXd(q.transpose())).cast<float>();
}

}  // namespace

ModelParams<float> init_params(const ModelConfig& cfg, Mat<float> embedding, std::uint64_t seed) {
  cfg.validate();
  if (embedding.cols() != cfg.embed_dim)
    throw DataError("embedding width " + std::to_string(embedding.cols()) +
                    " does not match embed_dim " + std::to_string(cfg.embed_dim));
  if (embedding.rows() < 2) throw DataError("embedding needs padding and OOV rows");

  ModelParams<float> p;
  p.config = cfg;
  p.embedding = std::move(embedding);
  p.trainable = zeros_like<float>(cfg);
  p.bn_moving_mean = Mat<float>::Zero(1, cfg.conv_filters);
  p.bn_moving_var = Mat<float>::Ones(1, cfg.conv_filters);

  std::mt19937_64 rng(seed);
  const double k = cfg.conv_kernel;
  glorot_uniform(p[ParamId::ConvKernel], k * cfg.embed_dim, k * cfg.conv_filters, rng);
  p[ParamId::BnGamma].setOnes();

  const Eigen::Index h = cfg.lstm_units;
  for (auto [kernel, recurrent, bias] :
       {std::tuple{ParamId::LstmFwdKernel, ParamId::LstmFwdRecurrent, ParamId::LstmFwdBias},
        std::tuple{ParamId::LstmBwdKernel, ParamId::LstmBwdRecurrent, ParamId::LstmBwdBias}}) {
    glorot_uniform(p[kernel], cfg.conv_filters, 4.0 * h, rng);
    orthogonal(p[recurrent], rng);
    p[bias].block(0, h, 1, h).setOnes();  // forget gate
  }
  if (cfg.use_attention) glorot_uniform(p[ParamId::AttnKernel], cfg.lstm_out(), 1, rng);
  glorot_uniform(p[ParamId::DenseKernel], cfg.lstm_out(), cfg.dense_units, rng);
  glorot_uniform(p[ParamId::OutKernel], cfg.dense_units, cfg.num_labels, rng);
  return p;
}

ParamCounts count_params(const ModelConfig& c, std::int64_t vocab_size) {
  ParamCounts pc;
  const std::int64_t e = c.embed_dim, f = c.conv_filters, h = c.lstm_units, d = c.dense_units;
  pc.per_layer["embedding_layer"] = vocab_size * e;
  pc.per_layer["conv_layer"] = c.conv_kernel * e * f + f;
  pc.per_layer["batch_normalization"] = 4 * f;
  pc.per_layer["bidirectional"] = 2 * 4 * (h * (f + h) + h);
  if (c.use_attention) pc.per_layer["dense"] = 2 * h + 1;
  pc.per_layer["dense_layer"] = 2 * h * d + d;
  pc.per_layer["output_layer"] = d * c.num_labels + c.num_labels;
  for (const auto& [name, n] : pc.per_layer) pc.total += n;
  pc.frozen = vocab_size * e + 2 * f;
  pc.trainable = pc.total - pc.frozen;
  return pc;
}

template <typename T>
ParamCounts count_params(const ModelParams<T>& p) {
  auto sz = [&](ParamId id) { return static_cast<std::int64_t>(p[id].size()); };
  ParamCounts pc;
  pc.per_layer["embedding_layer"] = p.embedding.size();
  pc.per_layer["conv_layer"] = sz(ParamId::ConvKernel) + sz(ParamId::ConvBias);
  pc.per_layer["batch_normalization"] = sz(ParamId::BnGamma) + sz(ParamId::BnBeta) +
                                        p.bn_moving_mean.size() + p.bn_moving_var.size();
  std::int64_t lstm = 0;
  for (int i = static_cast<int>(ParamId::LstmFwdKernel); i <= static_cast<int>(ParamId::LstmBwdBias); ++i)
    lstm += sz(param_id(i));
  pc.per_layer["bidirectional"] = lstm;
  if (sz(ParamId::AttnKernel) > 0)
    pc.per_layer["dense"] = sz(ParamId::AttnKernel) + sz(ParamId::AttnBias);
  pc.per_layer["dense_layer"] = sz(ParamId::DenseKernel) + sz(ParamId::DenseBias);
  pc.per_layer["output_layer"] = sz(ParamId::OutKernel) + sz(ParamId::OutBias);
  for (int i = 0; i < kNumTrainable; ++i) pc.trainable += sz(param_id(i));
  pc.frozen = p.embedding.size() + p.bn_moving_mean.size() + p.bn_moving_var.size();
  pc.total = pc.trainable + pc.frozen;
  return pc;
}

template ParamCounts count_params(const ModelParams<float>&);
template ParamCounts count_params(const ModelParams<double>&);

}  // namespace emotag
