// SPDX-License-Identifier: Apache-2.0
#include "emotag/netcore/network.hpp"

namespace emotag {

namespace {

template <typename T>
void maybe_round(Mat<T>& m, bool half) {
  if (half) round_to_half(m);
}

template <typename T>
void maybe_round(Seq<T>& s, bool half) {
  if (half) round_to_half(s.data);
}

}  // namespace

template <typename T>
const Mat<T>& Network<T>::weight(ParamId id) const {
  return cache_.half_precision ? half_weights_[static_cast<std::size_t>(id)] : (*params_)[id];
}

template <typename T>
Mat<T> Network<T>::forward(const IdMatrix& ids, const ForwardOptions& opt) {
  const ModelConfig& cfg = params_->config;
  if (ids.cols() != cfg.seq_len)
    throw DataError("input has " + std::to_string(ids.cols()) + " steps, model expects " +
                    std::to_string(cfg.seq_len));
  if (opt.mode == Mode::Train && !mutable_params_)
    throw UsageError("train-mode forward needs mutable parameters");

  const bool half = opt.half_precision;
  auto& c = cache_;
  c.valid = false;
  c.mode = opt.mode;
  c.half_precision = half;
  c.ids = ids;
  if (half) {
    half_weights_ = params_->trainable;
    for (auto& w : half_weights_) round_to_half(w);
  }

  c.embedded = embed_forward(ids, params_->embedding);
  maybe_round(c.embedded, half);

  c.conv_out = conv1d_forward(c.embedded, weight(ParamId::ConvKernel), weight(ParamId::ConvBias),
                              cfg.conv_kernel, &c.conv);
  maybe_round(c.conv_out, half);

  Mat<T> scratch_mean = params_->bn_moving_mean, scratch_var = params_->bn_moving_var;
  Mat<T>& mm = mutable_params_ ? mutable_params_->bn_moving_mean : scratch_mean;
  Mat<T>& mv = mutable_params_ ? mutable_params_->bn_moving_var : scratch_var;
  c.bn_out = batchnorm_forward(c.conv_out, weight(ParamId::BnGamma), weight(ParamId::BnBeta), mm, mv,
                               opt.mode, cfg.bn_momentum, cfg.bn_epsilon, &c.bn);
  maybe_round(c.bn_out, half);

  c.pooled = maxpool1d_forward(c.bn_out, &c.pool);

  const LstmWeights<T> fwd{weight(ParamId::LstmFwdKernel), weight(ParamId::LstmFwdRecurrent),
                           weight(ParamId::LstmFwdBias)};
  const LstmWeights<T> bwd{weight(ParamId::LstmBwdKernel), weight(ParamId::LstmBwdRecurrent),
                           weight(ParamId::LstmBwdBias)};
  c.lstm_out = bilstm_forward(c.pooled, fwd, bwd, &c.lstm_fwd, &c.lstm_bwd);
  maybe_round(c.lstm_out, half);

  if (cfg.use_attention) {
    auto att = attention_pool(c.lstm_out, weight(ParamId::AttnKernel), weight(ParamId::AttnBias));
    c.attention_weights = std::move(att.weights);
    c.context = std::move(att.context);
  } else {
    c.attention_weights.resize(0, 0);
    c.context = average_pool(c.lstm_out);
  }
  maybe_round(c.context, half);

  const Mat<T>* mask = (opt.mode == Mode::Train && fixed_mask_) ? &*fixed_mask_ : nullptr;
  Mat<T> probs = head_forward(c.context, weight(ParamId::DenseKernel), weight(ParamId::DenseBias),
                              weight(ParamId::OutKernel), weight(ParamId::OutBias), opt.mode,
                              cfg.dropout_rate, opt.rng, mask, &c.head);
  c.valid = true;
  return probs;
}

template <typename T>
double Network<T>::loss(const LabelMatrix& y) const {
  if (!cache_.valid) throw UsageError("loss requested before forward");
  return bce_loss(cache_.head.probs, y);
}

template <typename T>
GradientSet<T> Network<T>::backward(const LabelMatrix& y, T loss_scale) {
  const auto& c = cache_;
  if (!c.valid || c.mode != Mode::Train)
    throw UsageError("backward requires a completed train-mode forward pass");
  if (y.rows() != c.head.probs.rows() || y.cols() != c.head.probs.cols())
    throw DataError("backward: label matrix does not match cached batch");
  const ModelConfig& cfg = params_->config;
  const bool half = c.half_precision;
  GradientSet<T> g = zeros_like<T>(cfg);
  auto grad = [&g](ParamId id) -> Mat<T>& { return g[static_cast<std::size_t>(id)]; };

  Mat<T> dlogits = bce_grad_logits(c.head.probs, y);
  if (loss_scale != T(1)) dlogits *= loss_scale;
  maybe_round(dlogits, half);

  Mat<T> dcontext = head_backward(c.head, dlogits, weight(ParamId::DenseKernel),
                                  weight(ParamId::OutKernel), grad(ParamId::DenseKernel),
                                  grad(ParamId::DenseBias), grad(ParamId::OutKernel),
                                  grad(ParamId::OutBias));
  maybe_round(dcontext, half);

  Seq<T> dlstm = cfg.use_attention
                     ? attention_backward(c.lstm_out, weight(ParamId::AttnKernel), c.attention_weights,
                                          dcontext, grad(ParamId::AttnKernel), grad(ParamId::AttnBias))
                     : average_pool_backward<T>(dcontext, c.lstm_out.steps);
  maybe_round(dlstm, half);

  const Eigen::Index h = cfg.lstm_units;
  Seq<T> dfwd{dlstm.data.leftCols(h), dlstm.batch, dlstm.steps};
  Seq<T> dbwd{dlstm.data.rightCols(h), dlstm.batch, dlstm.steps};
  const LstmWeights<T> fwd{weight(ParamId::LstmFwdKernel), weight(ParamId::LstmFwdRecurrent),
                           weight(ParamId::LstmFwdBias)};
  const LstmWeights<T> bwd{weight(ParamId::LstmBwdKernel), weight(ParamId::LstmBwdRecurrent),
                           weight(ParamId::LstmBwdBias)};
  Seq<T> dpooled = lstm_backward(c.lstm_fwd, c.pooled, fwd, dfwd,
                                 LstmGrads<T>{grad(ParamId::LstmFwdKernel),
                                              grad(ParamId::LstmFwdRecurrent),
                                              grad(ParamId::LstmFwdBias)});
  dpooled.data += lstm_backward(c.lstm_bwd, c.pooled, bwd, dbwd,
                                LstmGrads<T>{grad(ParamId::LstmBwdKernel),
                                             grad(ParamId::LstmBwdRecurrent),
                                             grad(ParamId::LstmBwdBias)})
                      .data;
  maybe_round(dpooled, half);

  Seq<T> dbn = maxpool1d_backward(c.pool, dpooled);
  Seq<T> dconv = batchnorm_backward(c.bn, dbn, weight(ParamId::BnGamma), grad(ParamId::BnGamma),
                                    grad(ParamId::BnBeta));
  maybe_round(dconv, half);
  conv1d_backward(c.conv, dconv, grad(ParamId::ConvKernel), grad(ParamId::ConvBias));

  if (half)
    for (auto& t : g) round_to_half(t);
  return g;
}

template <typename T>
ShapeTrace Network<T>::shape_trace() const {
  const auto& c = cache_;
  ShapeTrace s;
  s.shapes.push_back({c.ids.rows(), c.ids.cols()});
  for (const Seq<T>* q : {&c.embedded, &c.conv_out, &c.pooled, &c.lstm_out})
    s.shapes.push_back({q->batch, q->steps, q->channels()});
  s.shapes.push_back({c.context.rows(), c.context.cols()});
  s.shapes.push_back({c.head.dense_pre.rows(), c.head.dense_pre.cols()});
  s.shapes.push_back({c.head.probs.rows(), c.head.probs.cols()});
  return s;
}

template class Network<float>;
template class Network<double>;

Mat<double> predict(const ModelParams<float>& params, const IdMatrix& ids, Eigen::Index batch_size,
                    bool half_precision) {
  Network<float> net(params);
  Mat<double> out(ids.rows(), params.config.num_labels);
  ForwardOptions opt;
  opt.mode = Mode::Infer;
  opt.half_precision = half_precision;
  for (Eigen::Index start = 0; start < ids.rows(); start += batch_size) {
    const Eigen::Index n = std::min(batch_size, ids.rows() - start);
    const IdMatrix chunk = ids.middleRows(start, n);
    out.middleRows(start, n) = net.forward(chunk, opt).cast<double>();
  }
  return out;
}

double evaluate_loss(const ModelParams<float>& params, const IdMatrix& ids, const LabelMatrix& y,
                     Eigen::Index batch_size, bool half_precision) {
  if (ids.rows() == 0) return 0.0;
  const Mat<double> p = predict(params, ids, batch_size, half_precision);
  return bce_loss(p, y);
}

}  // namespace emotag
