// SPDX-License-Identifier: Apache-2.0
#include "emotag/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "emotag/artifact_io.hpp"

namespace emotag {

void TrainingConfig::validate() const {
  if (patience < 1) throw UsageError("patience must be >= 1");
  if (batch_size < 2) throw UsageError("batch_size must be >= 2");
  if (max_epochs < 1) throw UsageError("max_epochs must be >= 1");
  if (!(lr > 0) || !(epsilon > 0)) throw UsageError("lr and epsilon must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw UsageError("betas must be in [0,1)");
  if (precision == Precision::Mixed && !(loss_scale >= 1)) throw UsageError("loss_scale must be >= 1");
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t t, const TrainingConfig& cfg) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
    throw DataError("adam: shape mismatch between parameters, gradients and moments");
  if (t < 1) throw UsageError("adam: timestep must be >= 1");
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.epsilon);
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const T g = grad[k];
    m[k] = b1 * m[k] + (T(1) - b1) * g;
    v[k] = b2 * v[k] + (T(1) - b2) * g * g;
    const T m_hat = m[k] / c1;
    const T v_hat = v[k] / c2;
    theta[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
void adam_step(ModelParams<T>& params, const GradientSet<T>& grads, AdamState<T>& state,
               const TrainingConfig& cfg) {
  ++state.t;
  for (std::size_t i = 0; i < kNumTrainable; ++i) {
    auto& p = params.trainable[i];
    const auto& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].size() != p.size() ||
        state.v[i].size() != p.size())
      throw DataError("adam: shape mismatch on tensor '" +
                      std::string(param_name(param_id(static_cast<int>(i)))) + "'");
    const auto n = static_cast<std::size_t>(p.size());
    adam_update<T>(std::span<T>(p.data(), n), std::span<const T>(g.data(), n),
                   std::span<T>(state.m[i].data(), n), std::span<T>(state.v[i].data(), n), state.t,
                   cfg);
  }
}

template void adam_update(std::span<float>, std::span<const float>, std::span<float>,
                          std::span<float>, std::int64_t, const TrainingConfig&);
template void adam_update(std::span<double>, std::span<const double>, std::span<double>,
                          std::span<double>, std::int64_t, const TrainingConfig&);
template void adam_step(ModelParams<float>&, const GradientSet<float>&, AdamState<float>&,
                        const TrainingConfig&);
template void adam_step(ModelParams<double>&, const GradientSet<double>&, AdamState<double>&,
                        const TrainingConfig&);

// ---------------------------------------------------------------------------
// Bookkeeping

std::string TrainingHistory::csv(bool include_time) const {
  std::string out = "epoch,train_loss,val_loss,seconds\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + ',' + format_g9(e.train_loss) + ',' + format_g9(e.val_loss) + ',' +
           (include_time ? format_g9(e.seconds) : std::string("0")) + '\n';
  }
  return out;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw UsageError("patience must be >= 1");
}

bool EarlyStopping::update(int epoch, double val_loss) {
  if (best_epoch_ == 0 || val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    wait_ = 0;
    return true;
  }
  ++wait_;
  return false;
}

bool LossScaler::unscale(GradientSet<float>& grads) {
  bool finite = true;
  for (const auto& g : grads) finite = finite && g.allFinite();
  if (!finite) {
    scale_ /= 2.0;
    if (scale_ < 1.0) throw NumericError("mixed precision diverged");
    return false;
  }
  const float inv = static_cast<float>(1.0 / scale_);
  for (auto& g : grads) g *= inv;
  return true;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += bs) out.emplace_back(start, std::min(n, start + bs));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(ModelParams<float> params, const EncodedDataset& train_ds,
                  const EncodedDataset& val_ds, const TrainingConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_ds.size() == 0 || val_ds.size() == 0) throw DataError("empty dataset");
  if (train_ds.size() < 2) throw DataError("training split needs at least 2 rows for batch norm");
  const bool mixed = cfg.precision == Precision::Mixed;

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x5DEECE66Dull);
  AdamState<float> adam = make_adam_state<float>(params.config);
  LossScaler scaler(mixed ? cfg.loss_scale : 1.0);
  EarlyStopping stopper(cfg.patience);

  TrainResult result;
  TensorSet<float> best_trainable = params.trainable;
  Mat<float> best_mean = params.bn_moving_mean, best_var = params.bn_moving_var;

  std::vector<std::size_t> order(static_cast<std::size_t>(train_ds.size()));
  Network<float> net(params);
  ForwardOptions fopt;
  fopt.mode = Mode::Train;
  fopt.rng = &dropout_rng;
  fopt.half_precision = mixed;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (auto [begin, end] : batch_ranges(order.size(), cfg.batch_size)) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      const EncodedDataset batch = train_ds.select(rows);
      net.forward(batch.sequences, fopt);
      const double batch_loss = net.loss(batch.labels);
      if (!std::isfinite(batch_loss)) throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += batch_loss * static_cast<double>(rows.size());
      GradientSet<float> grads = net.backward(batch.labels, static_cast<float>(scaler.scale()));
      if (mixed && !scaler.unscale(grads)) {
        ++result.skipped_steps;
        continue;
      }
      adam_step(params, grads, adam, cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_loss = evaluate_loss(params, val_ds.sequences, val_ds.labels, 256, mixed);
    if (hooks.val_loss_override) rec.val_loss = hooks.val_loss_override(epoch, rec.val_loss);
    if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    result.history.stopped_epoch = epoch;

    if (stopper.update(epoch, rec.val_loss)) {
      best_trainable = params.trainable;
      best_mean = params.bn_moving_mean;
      best_var = params.bn_moving_var;
      if (hooks.on_improvement) hooks.on_improvement(epoch, params);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, params);
    if (stopper.should_stop()) break;
  }

  result.history.best_epoch = stopper.best_epoch();
  params.trainable = std::move(best_trainable);
  params.bn_moving_mean = std::move(best_mean);
  params.bn_moving_var = std::move(best_var);
  result.best = std::move(params);
  result.final_loss_scale = scaler.scale();
  return result;
}

TrainResult train_mixed(ModelParams<float> init, const EncodedDataset& train_ds,
                        const EncodedDataset& val_ds, TrainingConfig cfg, const TrainHooks& hooks) {
  cfg.precision = Precision::Mixed;
  return train(std::move(init), train_ds, val_ds, cfg, hooks);
}

}  // namespace emotag
