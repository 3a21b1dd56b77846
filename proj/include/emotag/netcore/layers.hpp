// SPDX-License-Identifier: Apache-2.0
//
// Forward and backward kernels for each layer of the network. Sequences are
// stored time-major within each batch row: a (batch*steps) x channels
// row-major matrix, row b*steps+t holding timestep t of sample b.
#pragma once

#include <random>
#include <vector>

#include "emotag/common.hpp"

namespace emotag {

template <typename T>
struct Seq {
  Mat<T> data;
  Eigen::Index batch = 0;
  Eigen::Index steps = 0;

  Eigen::Index channels() const { return data.cols(); }
};

enum class Mode { Train, Infer };

// --- embedding --------------------------------------------------------------

template <typename T>
Seq<T> embed_forward(const IdMatrix& ids, const Mat<T>& table);

// --- conv1d (valid cross-correlation) -----------------------------------------

template <typename T>
struct ConvCache {
  Mat<T> columns;  // (batch*out_len) x (kernel*channels)
};

/// kernel is (kernel_size*in_channels) x filters, laid out [k][c][f].
template <typename T>
Seq<T> conv1d_forward(const Seq<T>& x, const Mat<T>& kernel, const Mat<T>& bias, int kernel_size,
                      ConvCache<T>* cache = nullptr);

template <typename T>
void conv1d_backward(const ConvCache<T>& cache, const Seq<T>& dout, Mat<T>& dkernel, Mat<T>& dbias);

// --- batch norm + ReLU ----------------------------------------------------------

template <typename T>
struct BatchNormCache {
  Mat<T> xhat;       // normalized input
  Mat<T> pre_relu;   // gamma * xhat + beta
  Mat<T> inv_std;    // 1 x channels
  Mode mode = Mode::Infer;
};

/// Normalizes per channel over batch and time, applies gamma/beta, then
/// ReLU. Train mode uses batch statistics and updates the moving ones.
template <typename T>
Seq<T> batchnorm_forward(const Seq<T>& x, const Mat<T>& gamma, const Mat<T>& beta,
                         Mat<T>& moving_mean, Mat<T>& moving_var, Mode mode, double momentum,
                         double epsilon, BatchNormCache<T>* cache = nullptr);

template <typename T>
Seq<T> batchnorm_backward(const BatchNormCache<T>& cache, const Seq<T>& dout, const Mat<T>& gamma,
                          Mat<T>& dgamma, Mat<T>& dbeta);

// --- max pool (width 2, stride 2) -------------------------------------------------

template <typename T>
struct PoolCache {
  std::vector<std::uint8_t> pick_second;  // 1 where x[2t+1] won; ties go to 2t
  Eigen::Index in_steps = 0;
};

template <typename T>
Seq<T> maxpool1d_forward(const Seq<T>& x, PoolCache<T>* cache = nullptr);

template <typename T>
Seq<T> maxpool1d_backward(const PoolCache<T>& cache, const Seq<T>& dout);

// --- LSTM ----------------------------------------------------------------------

template <typename T>
struct LstmWeights {
  const Mat<T>& kernel;     // in x 4H, gate order i, f, c, o
  const Mat<T>& recurrent;  // H x 4H
  const Mat<T>& bias;       // 1 x 4H
};

template <typename T>
struct LstmCache {
  Mat<T> gates;  // activated gates per (b, t), (batch*steps) x 4H
  Mat<T> cell;   // (batch*steps) x H
  Mat<T> hidden;
  bool reverse = false;
};

/// Runs one direction. With `reverse` the sequence is consumed from the last
/// step to the first; outputs stay aligned with the input time index.
template <typename T>
Seq<T> lstm_forward(const Seq<T>& x, const LstmWeights<T>& w, bool reverse,
                    LstmCache<T>* cache = nullptr);

template <typename T>
struct LstmGrads {
  Mat<T>& kernel;
  Mat<T>& recurrent;
  Mat<T>& bias;
};

/// Accumulates parameter gradients into `g` and returns dL/dx.
template <typename T>
Seq<T> lstm_backward(const LstmCache<T>& cache, const Seq<T>& x, const LstmWeights<T>& w,
                     const Seq<T>& dh, const LstmGrads<T>& g);

/// Concatenates [forward_t ; backward_t] per timestep.
template <typename T>
Seq<T> bilstm_forward(const Seq<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd,
                      LstmCache<T>* fwd_cache = nullptr, LstmCache<T>* bwd_cache = nullptr);

// --- temporal pooling -------------------------------------------------------------

template <typename T>
struct AttentionOut {
  Mat<T> context;  // batch x channels
  Mat<T> weights;  // batch x steps, rows sum to 1
};

/// score_t = h_t . w + b; softmax over time; weighted sum of h_t.
template <typename T>
AttentionOut<T> attention_pool(const Seq<T>& h, const Mat<T>& w, const Mat<T>& b);

template <typename T>
Seq<T> attention_backward(const Seq<T>& h, const Mat<T>& w, const Mat<T>& weights,
                          const Mat<T>& dcontext, Mat<T>& dw, Mat<T>& db);

template <typename T>
Mat<T> average_pool(const Seq<T>& h);

template <typename T>
Seq<T> average_pool_backward(const Mat<T>& dcontext, Eigen::Index steps);

// --- head ---------------------------------------------------------------------

template <typename T>
struct HeadCache {
  Mat<T> input;
  Mat<T> dense_pre;   // before ReLU
  Mat<T> dropped;     // after ReLU and dropout
  Mat<T> mask;        // 0 or 1/keep; empty in infer mode
  Mat<T> logits;
  Mat<T> probs;
};

/// dense + ReLU, inverted dropout (train only), dense, sigmoid. If
/// `fixed_mask` is non-null it is used instead of sampling from `rng`.
template <typename T>
Mat<T> head_forward(const Mat<T>& v, const Mat<T>& dense_w, const Mat<T>& dense_b,
                    const Mat<T>& out_w, const Mat<T>& out_b, Mode mode, double dropout_rate,
                    std::mt19937_64* rng, const Mat<T>* fixed_mask, HeadCache<T>* cache = nullptr);

/// From dL/dlogits back to dL/dv, accumulating parameter gradients.
template <typename T>
Mat<T> head_backward(const HeadCache<T>& cache, const Mat<T>& dlogits, const Mat<T>& dense_w,
                     const Mat<T>& out_w, Mat<T>& d_dense_w, Mat<T>& d_dense_b, Mat<T>& d_out_w,
                     Mat<T>& d_out_b);

// --- loss ---------------------------------------------------------------------

inline constexpr double kProbClamp = 1e-7;

/// Mean binary cross-entropy with p clamped to [1e-7, 1-1e-7].
template <typename T>
double bce_loss(const Mat<T>& p, const LabelMatrix& y);

/// dL/dlogits of bce_loss through the sigmoid; zero where p was clamped.
template <typename T>
Mat<T> bce_grad_logits(const Mat<T>& p, const LabelMatrix& y);

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

/// Rounds every entry through IEEE binary16 (mixed-precision storage).
void round_to_half(Mat<float>& m);
inline void round_to_half(Mat<double>&) {}

}  // namespace emotag
