// SPDX-License-Identifier: Apache-2.0
#include "emotag/netcore/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace emotag {

namespace {

using Eigen::Index;

template <typename T>
using StridedMap = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

// Rows {b*steps + t : b} of a sequence matrix, as a batch x cols view.
template <typename T>
StridedMap<T> time_slice(Mat<T>& m, Index steps, Index t) {
  return StridedMap<T>(m.data() + t * m.cols(), m.rows() / steps, m.cols(),
                       Eigen::OuterStride<>(steps * m.cols()));
}

template <typename T>
ConstStridedMap<T> time_slice(const Mat<T>& m, Index steps, Index t) {
  return ConstStridedMap<T>(m.data() + t * m.cols(), m.rows() / steps, m.cols(),
                            Eigen::OuterStride<>(steps * m.cols()));
}

template <typename T>
void require_shape(bool ok, const char* layer, const std::string& detail) {
  if (!ok) throw DataError(std::string(layer) + ": shape mismatch, " + detail);
}

std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename T>
T sigmoid_fn(T x) {
  return sigmoid(x);
}

// Keeps output probabilities strictly inside (0, 1) once the sigmoid
// saturates in finite precision.
template <typename T>
T open_unit_sigmoid(T x) {
  return std::clamp(sigmoid(x), std::numeric_limits<T>::min(), std::nextafter(T(1), T(0)));
}

}  // namespace

// --- embedding --------------------------------------------------------------

template <typename T>
Seq<T> embed_forward(const IdMatrix& ids, const Mat<T>& table) {
  Seq<T> out;
  out.batch = ids.rows();
  out.steps = ids.cols();
  out.data.resize(ids.rows() * ids.cols(), table.cols());
  for (Index b = 0; b < ids.rows(); ++b) {
    for (Index t = 0; t < ids.cols(); ++t) {
      const auto id = ids(b, t);
      if (id < 0 || id >= table.rows())
        throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                        std::to_string(table.rows()));
      out.data.row(b * ids.cols() + t) = table.row(id);
    }
  }
  return out;
}

// --- conv1d -------------------------------------------------------------------

template <typename T>
Seq<T> conv1d_forward(const Seq<T>& x, const Mat<T>& kernel, const Mat<T>& bias, int kernel_size,
                      ConvCache<T>* cache) {
  const Index c = x.channels();
  const Index out_len = x.steps - kernel_size + 1;
  require_shape<T>(kernel_size >= 1 && out_len >= 1, "conv1d",
                   "kernel " + std::to_string(kernel_size) + " longer than sequence");
  require_shape<T>(kernel.rows() == kernel_size * c && bias.cols() == kernel.cols() && bias.rows() == 1,
                   "conv1d", "kernel " + dims(kernel.rows(), kernel.cols()) + " for " +
                                 std::to_string(c) + " input channels");
  require_shape<T>(x.data.rows() == x.batch * x.steps, "conv1d", "input rows");

  ConvCache<T> local;
  ConvCache<T>& cc = cache ? *cache : local;
  cc.columns.resize(x.batch * out_len, kernel_size * c);
  for (Index b = 0; b < x.batch; ++b) {
    cc.columns.block(b * out_len, 0, out_len, kernel_size * c) =
        ConstStridedMap<T>(x.data.data() + b * x.steps * c, out_len, kernel_size * c,
                           Eigen::OuterStride<>(c));
  }
  Seq<T> out;
  out.batch = x.batch;
  out.steps = out_len;
  out.data.noalias() = cc.columns * kernel;
  out.data.rowwise() += bias.row(0);
  return out;
}

template <typename T>
void conv1d_backward(const ConvCache<T>& cache, const Seq<T>& dout, Mat<T>& dkernel, Mat<T>& dbias) {
  dkernel.noalias() += cache.columns.transpose() * dout.data;
  dbias += dout.data.colwise().sum();
}

// --- batch norm -----------------------------------------------------------------

template <typename T>
Seq<T> batchnorm_forward(const Seq<T>& x, const Mat<T>& gamma, const Mat<T>& beta,
                         Mat<T>& moving_mean, Mat<T>& moving_var, Mode mode, double momentum,
                         double epsilon, BatchNormCache<T>* cache) {
  const Index ch = x.channels();
  require_shape<T>(gamma.cols() == ch && beta.cols() == ch && moving_mean.cols() == ch &&
                       moving_var.cols() == ch,
                   "batchnorm", std::to_string(ch) + " channels");
  if (mode == Mode::Train && x.batch < 2)
    throw DataError("batchnorm: train mode needs a batch of at least 2");

  BatchNormCache<T> local;
  BatchNormCache<T>& bc = cache ? *cache : local;
  bc.mode = mode;
  const T eps = static_cast<T>(epsilon);
  if (mode == Mode::Train) {
    const Mat<T> mean = x.data.colwise().mean();
    Mat<T> centered = x.data.rowwise() - mean.row(0);
    const Mat<T> var = centered.array().square().colwise().mean().matrix();
    bc.inv_std = (var.array() + eps).rsqrt().matrix();
    bc.xhat = centered.array().rowwise() * bc.inv_std.row(0).array();
    const T m = static_cast<T>(momentum);
    moving_mean = m * moving_mean + (T(1) - m) * mean;
    moving_var = m * moving_var + (T(1) - m) * var;
  } else {
    bc.inv_std = (moving_var.array() + eps).rsqrt().matrix();
    bc.xhat = (x.data.rowwise() - moving_mean.row(0)).array().rowwise() * bc.inv_std.row(0).array();
  }
  bc.pre_relu = (bc.xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();

  Seq<T> out;
  out.batch = x.batch;
  out.steps = x.steps;
  out.data = bc.pre_relu.cwiseMax(T(0));
  return out;
}

template <typename T>
Seq<T> batchnorm_backward(const BatchNormCache<T>& cache, const Seq<T>& dout, const Mat<T>& gamma,
                          Mat<T>& dgamma, Mat<T>& dbeta) {
  const Mat<T> dy = (cache.pre_relu.array() > T(0)).select(dout.data, T(0));
  dbeta += dy.colwise().sum();
  dgamma += dy.cwiseProduct(cache.xhat).colwise().sum();
  const Mat<T> dxhat = dy.array().rowwise() * gamma.row(0).array();

  Seq<T> dx;
  dx.batch = dout.batch;
  dx.steps = dout.steps;
  if (cache.mode == Mode::Train) {
    const T m = static_cast<T>(dxhat.rows());
    const Mat<T> sum_d = dxhat.colwise().sum();
    const Mat<T> sum_dx = dxhat.cwiseProduct(cache.xhat).colwise().sum();
    Mat<T> t = (m * dxhat).rowwise() - sum_d.row(0);
    t -= (cache.xhat.array().rowwise() * sum_dx.row(0).array()).matrix();
    dx.data = (t.array().rowwise() * (cache.inv_std.row(0).array() / m)).matrix();
  } else {
    dx.data = dxhat.array().rowwise() * cache.inv_std.row(0).array();
  }
  return dx;
}

// --- max pool ---------------------------------------------------------------------

template <typename T>
Seq<T> maxpool1d_forward(const Seq<T>& x, PoolCache<T>* cache) {
  if (x.steps % 2 != 0)
    throw DataError("maxpool1d: odd time length " + std::to_string(x.steps));
  const Index half = x.steps / 2, ch = x.channels();
  Seq<T> out;
  out.batch = x.batch;
  out.steps = half;
  out.data.resize(x.batch * half, ch);
  std::vector<std::uint8_t> pick(static_cast<std::size_t>(out.data.size()));
  for (Index b = 0; b < x.batch; ++b)
    for (Index t = 0; t < half; ++t)
      for (Index c = 0; c < ch; ++c) {
        const T a = x.data(b * x.steps + 2 * t, c);
        const T z = x.data(b * x.steps + 2 * t + 1, c);
        const bool second = z > a;
        out.data(b * half + t, c) = second ? z : a;
        pick[static_cast<std::size_t>((b * half + t) * ch + c)] = second;
      }
  if (cache) {
    cache->pick_second = std::move(pick);
    cache->in_steps = x.steps;
  }
  return out;
}

template <typename T>
Seq<T> maxpool1d_backward(const PoolCache<T>& cache, const Seq<T>& dout) {
  const Index half = dout.steps, ch = dout.channels();
  Seq<T> dx;
  dx.batch = dout.batch;
  dx.steps = cache.in_steps;
  dx.data = Mat<T>::Zero(dout.batch * cache.in_steps, ch);
  for (Index b = 0; b < dout.batch; ++b)
    for (Index t = 0; t < half; ++t)
      for (Index c = 0; c < ch; ++c) {
        const Index src = 2 * t + cache.pick_second[static_cast<std::size_t>((b * half + t) * ch + c)];
        dx.data(b * cache.in_steps + src, c) = dout.data(b * half + t, c);
      }
  return dx;
}

// --- LSTM -----------------------------------------------------------------------

template <typename T>
Seq<T> lstm_forward(const Seq<T>& x, const LstmWeights<T>& w, bool reverse, LstmCache<T>* cache) {
  const Index h = w.recurrent.rows(), steps = x.steps, batch = x.batch;
  require_shape<T>(w.kernel.rows() == x.channels() && w.kernel.cols() == 4 * h &&
                       w.recurrent.cols() == 4 * h && w.bias.cols() == 4 * h,
                   "lstm", "kernel " + dims(w.kernel.rows(), w.kernel.cols()) + " for input width " +
                               std::to_string(x.channels()));

  LstmCache<T> local;
  LstmCache<T>& lc = cache ? *cache : local;
  lc.reverse = reverse;
  lc.gates.noalias() = x.data * w.kernel;
  lc.gates.rowwise() += w.bias.row(0);
  lc.cell.resize(batch * steps, h);
  lc.hidden.resize(batch * steps, h);

  Mat<T> h_prev = Mat<T>::Zero(batch, h), c_prev = Mat<T>::Zero(batch, h);
  Mat<T> z(batch, 4 * h);
  for (Index s = 0; s < steps; ++s) {
    const Index t = reverse ? steps - 1 - s : s;
    auto g = time_slice(lc.gates, steps, t);
    z = g;
    z.noalias() += h_prev * w.recurrent;
    z.leftCols(2 * h) = z.leftCols(2 * h).unaryExpr(&sigmoid_fn<T>);
    z.block(0, 2 * h, batch, h) = z.block(0, 2 * h, batch, h).array().tanh();
    z.rightCols(h) = z.rightCols(h).unaryExpr(&sigmoid_fn<T>);
    g = z;
    c_prev = z.leftCols(h).cwiseProduct(z.block(0, 2 * h, batch, h)) +
             z.block(0, h, batch, h).cwiseProduct(c_prev);
    h_prev = z.rightCols(h).cwiseProduct(Mat<T>(c_prev.array().tanh()));
    time_slice(lc.cell, steps, t) = c_prev;
    time_slice(lc.hidden, steps, t) = h_prev;
  }
  Seq<T> out;
  out.batch = batch;
  out.steps = steps;
  out.data = lc.hidden;
  return out;
}

template <typename T>
Seq<T> lstm_backward(const LstmCache<T>& cache, const Seq<T>& x, const LstmWeights<T>& w,
                     const Seq<T>& dh, const LstmGrads<T>& g) {
  const Index h = w.recurrent.rows(), steps = x.steps, batch = x.batch;
  Mat<T> dz(batch * steps, 4 * h);
  Mat<T> dh_next = Mat<T>::Zero(batch, h), dc_next = Mat<T>::Zero(batch, h);
  Mat<T> dzt(batch, 4 * h);
  for (Index s = steps - 1; s >= 0; --s) {
    const Index t = cache.reverse ? steps - 1 - s : s;
    const Index tp = cache.reverse ? t + 1 : t - 1;
    const auto gates = time_slice(cache.gates, steps, t);
    const auto i = gates.leftCols(h).array();
    const auto f = gates.block(0, h, batch, h).array();
    const auto gg = gates.block(0, 2 * h, batch, h).array();
    const auto o = gates.rightCols(h).array();
    const Mat<T> tanh_c = time_slice(cache.cell, steps, t).array().tanh();

    const Mat<T> dht = time_slice(dh.data, steps, t) + dh_next;
    Mat<T> dc = dc_next.array() + dht.array() * o * (T(1) - tanh_c.array().square());
    const Mat<T> c_prev = s > 0 ? Mat<T>(time_slice(cache.cell, steps, tp)) : Mat<T>::Zero(batch, h);

    dzt.leftCols(h) = (dc.array() * gg * i * (T(1) - i)).matrix();
    dzt.block(0, h, batch, h) = (dc.array() * c_prev.array() * f * (T(1) - f)).matrix();
    dzt.block(0, 2 * h, batch, h) = (dc.array() * i * (T(1) - gg.square())).matrix();
    dzt.rightCols(h) = (dht.array() * tanh_c.array() * o * (T(1) - o)).matrix();
    dc_next = (dc.array() * f).matrix();

    if (s > 0) g.recurrent.noalias() += time_slice(cache.hidden, steps, tp).transpose() * dzt;
    dh_next.noalias() = dzt * w.recurrent.transpose();
    time_slice(dz, steps, t) = dzt;
  }
  g.kernel.noalias() += x.data.transpose() * dz;
  g.bias += dz.colwise().sum();
  Seq<T> dx;
  dx.batch = batch;
  dx.steps = steps;
  dx.data.noalias() = dz * w.kernel.transpose();
  return dx;
}

template <typename T>
Seq<T> bilstm_forward(const Seq<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd,
                      LstmCache<T>* fwd_cache, LstmCache<T>* bwd_cache) {
  const Seq<T> a = lstm_forward(x, fwd, false, fwd_cache);
  const Seq<T> b = lstm_forward(x, bwd, true, bwd_cache);
  Seq<T> out;
  out.batch = x.batch;
  out.steps = x.steps;
  out.data.resize(a.data.rows(), a.data.cols() + b.data.cols());
  out.data << a.data, b.data;
  return out;
}

// --- temporal pooling ---------------------------------------------------------------

template <typename T>
AttentionOut<T> attention_pool(const Seq<T>& h, const Mat<T>& w, const Mat<T>& b) {
  const Index ch = h.channels(), steps = h.steps;
  require_shape<T>(w.rows() == ch && w.cols() == 1 && b.size() == 1, "attention",
                   "kernel " + dims(w.rows(), w.cols()) + " for width " + std::to_string(ch));
  Mat<T> scores = h.data * w;
  scores.array() += b(0, 0);
  AttentionOut<T> out;
  out.weights = Eigen::Map<Mat<T>>(scores.data(), h.batch, steps);
  for (Index r = 0; r < h.batch; ++r) {
    auto row = out.weights.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
  out.context.resize(h.batch, ch);
  for (Index r = 0; r < h.batch; ++r)
    out.context.row(r).noalias() = out.weights.row(r) * h.data.block(r * steps, 0, steps, ch);
  return out;
}

template <typename T>
Seq<T> attention_backward(const Seq<T>& h, const Mat<T>& w, const Mat<T>& weights,
                          const Mat<T>& dcontext, Mat<T>& dw, Mat<T>& db) {
  const Index ch = h.channels(), steps = h.steps;
  Seq<T> dh;
  dh.batch = h.batch;
  dh.steps = steps;
  dh.data.resize(h.data.rows(), ch);
  for (Index r = 0; r < h.batch; ++r) {
    const auto hb = h.data.block(r * steps, 0, steps, ch);
    const auto a = weights.row(r).transpose();  // steps x 1
    const Mat<T> da = hb * dcontext.row(r).transpose();
    const T mean = a.dot(da.col(0));
    const Mat<T> ds = (a.array() * (da.array() - mean)).matrix();
    auto dhb = dh.data.block(r * steps, 0, steps, ch);
    dhb.noalias() = a * dcontext.row(r);
    dhb.noalias() += ds * w.transpose();
    dw.noalias() += hb.transpose() * ds;
    db(0, 0) += ds.sum();
  }
  return dh;
}

template <typename T>
Mat<T> average_pool(const Seq<T>& h) {
  Mat<T> out(h.batch, h.channels());
  for (Index r = 0; r < h.batch; ++r)
    out.row(r) = h.data.block(r * h.steps, 0, h.steps, h.channels()).colwise().mean();
  return out;
}

template <typename T>
Seq<T> average_pool_backward(const Mat<T>& dcontext, Eigen::Index steps) {
  Seq<T> dh;
  dh.batch = dcontext.rows();
  dh.steps = steps;
  dh.data.resize(dcontext.rows() * steps, dcontext.cols());
  const T scale = T(1) / static_cast<T>(steps);
  for (Index r = 0; r < dcontext.rows(); ++r)
    dh.data.block(r * steps, 0, steps, dcontext.cols()).rowwise() = dcontext.row(r) * scale;
  return dh;
}

// --- head -----------------------------------------------------------------------

template <typename T>
Mat<T> head_forward(const Mat<T>& v, const Mat<T>& dense_w, const Mat<T>& dense_b,
                    const Mat<T>& out_w, const Mat<T>& out_b, Mode mode, double dropout_rate,
                    std::mt19937_64* rng, const Mat<T>* fixed_mask, HeadCache<T>* cache) {
  require_shape<T>(dense_w.rows() == v.cols() && out_w.rows() == dense_w.cols(), "head",
                   "input width " + std::to_string(v.cols()));
  HeadCache<T> local;
  HeadCache<T>& hc = cache ? *cache : local;
  hc.input = v;
  hc.dense_pre.noalias() = v * dense_w;
  hc.dense_pre.rowwise() += dense_b.row(0);
  hc.dropped = hc.dense_pre.cwiseMax(T(0));
  hc.mask.resize(0, 0);
  if (mode == Mode::Train && dropout_rate > 0.0) {
    if (fixed_mask) {
      hc.mask = *fixed_mask;
    } else {
      if (!rng) throw UsageError("head_forward: train-mode dropout needs an RNG or a fixed mask");
      const double keep = 1.0 - dropout_rate;
      std::bernoulli_distribution coin(keep);
      hc.mask.resize(hc.dropped.rows(), hc.dropped.cols());
      for (Index k = 0; k < hc.mask.size(); ++k)
        hc.mask.data()[k] = coin(*rng) ? static_cast<T>(1.0 / keep) : T(0);
    }
    hc.dropped.array() *= hc.mask.array();
  }
  hc.logits.noalias() = hc.dropped * out_w;
  hc.logits.rowwise() += out_b.row(0);
  hc.probs = hc.logits.unaryExpr(&open_unit_sigmoid<T>);
  return hc.probs;
}

template <typename T>
Mat<T> head_backward(const HeadCache<T>& cache, const Mat<T>& dlogits, const Mat<T>& dense_w,
                     const Mat<T>& out_w, Mat<T>& d_dense_w, Mat<T>& d_dense_b, Mat<T>& d_out_w,
                     Mat<T>& d_out_b) {
  d_out_w.noalias() += cache.dropped.transpose() * dlogits;
  d_out_b += dlogits.colwise().sum();
  Mat<T> dd = dlogits * out_w.transpose();
  if (cache.mask.size() > 0) dd.array() *= cache.mask.array();
  dd = (cache.dense_pre.array() > T(0)).select(dd, T(0));
  d_dense_w.noalias() += cache.input.transpose() * dd;
  d_dense_b += dd.colwise().sum();
  return dd * dense_w.transpose();
}

// --- loss ---------------------------------------------------------------------

template <typename T>
double bce_loss(const Mat<T>& p, const LabelMatrix& y) {
  if (p.rows() != y.rows() || p.cols() != y.cols())
    throw DataError("bce_loss: prediction " + dims(p.rows(), p.cols()) + " vs labels " +
                    dims(y.rows(), y.cols()));
  double total = 0.0;
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) {
      const double q = std::clamp(static_cast<double>(p(i, j)), kProbClamp, 1.0 - kProbClamp);
      total -= y(i, j) ? std::log(q) : std::log1p(-q);
    }
  return p.size() ? total / static_cast<double>(p.size()) : 0.0;
}

template <typename T>
Mat<T> bce_grad_logits(const Mat<T>& p, const LabelMatrix& y) {
  const T scale = T(1) / static_cast<T>(p.size());
  Mat<T> d(p.rows(), p.cols());
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) {
      const double q = static_cast<double>(p(i, j));
      const bool clamped = q < kProbClamp || q > 1.0 - kProbClamp;
      d(i, j) = clamped ? T(0) : (p(i, j) - static_cast<T>(y(i, j))) * scale;
    }
  return d;
}

void round_to_half(Mat<float>& m) {
  for (Index k = 0; k < m.size(); ++k)
    m.data()[k] = static_cast<float>(Eigen::half(m.data()[k]));
}

#define EMOTAG_INSTANTIATE_LAYERS(T)                                                          \
  template Seq<T> embed_forward(const IdMatrix&, const Mat<T>&);                              \
  template Seq<T> conv1d_forward(const Seq<T>&, const Mat<T>&, const Mat<T>&, int,            \
                                 ConvCache<T>*);                                              \
  template void conv1d_backward(const ConvCache<T>&, const Seq<T>&, Mat<T>&, Mat<T>&);        \
  template Seq<T> batchnorm_forward(const Seq<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&,     \
                                    Mat<T>&, Mode, double, double, BatchNormCache<T>*);       \
  template Seq<T> batchnorm_backward(const BatchNormCache<T>&, const Seq<T>&, const Mat<T>&,  \
                                     Mat<T>&, Mat<T>&);                                       \
  template Seq<T> maxpool1d_forward(const Seq<T>&, PoolCache<T>*);                            \
  template Seq<T> maxpool1d_backward(const PoolCache<T>&, const Seq<T>&);                     \
  template Seq<T> lstm_forward(const Seq<T>&, const LstmWeights<T>&, bool, LstmCache<T>*);    \
  template Seq<T> lstm_backward(const LstmCache<T>&, const Seq<T>&, const LstmWeights<T>&,    \
                                const Seq<T>&, const LstmGrads<T>&);                          \
  template Seq<T> bilstm_forward(const Seq<T>&, const LstmWeights<T>&, const LstmWeights<T>&, \
                                 LstmCache<T>*, LstmCache<T>*);                               \
  template AttentionOut<T> attention_pool(const Seq<T>&, const Mat<T>&, const Mat<T>&);       \
  template Seq<T> attention_backward(const Seq<T>&, const Mat<T>&, const Mat<T>&,             \
                                     const Mat<T>&, Mat<T>&, Mat<T>&);                        \
  template Mat<T> average_pool(const Seq<T>&);                                                \
  template Seq<T> average_pool_backward(const Mat<T>&, Eigen::Index);                         \
  template Mat<T> head_forward(const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&,    \
                               const Mat<T>&, Mode, double, std::mt19937_64*, const Mat<T>*,  \
                               HeadCache<T>*);                                                \
  template Mat<T> head_backward(const HeadCache<T>&, const Mat<T>&, const Mat<T>&,            \
                                const Mat<T>&, Mat<T>&, Mat<T>&, Mat<T>&, Mat<T>&);           \
  template double bce_loss(const Mat<T>&, const LabelMatrix&);                                \
  template Mat<T> bce_grad_logits(const Mat<T>&, const LabelMatrix&);

EMOTAG_INSTANTIATE_LAYERS(float)
EMOTAG_INSTANTIATE_LAYERS(double)

}  // namespace emotag
