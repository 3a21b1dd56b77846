// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emotag/corpus.hpp"
#include "emotag/netcore/network.hpp"

namespace emotag {

enum class Precision { Full, Mixed };

struct TrainingConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  int batch_size = 256;
  int max_epochs = 34;
  int patience = 5;
  std::uint64_t seed = 0;
  Precision precision = Precision::Full;
  double loss_scale = 1024.0;

  void validate() const;
};

template <typename T>
struct AdamState {
  TensorSet<T> m, v;
  std::int64_t t = 0;
};

template <typename T>
AdamState<T> make_adam_state(const ModelConfig& cfg) {
  return {zeros_like<T>(cfg), zeros_like<T>(cfg), 0};
}

/// One bias-corrected Adam update on flat buffers, at timestep `t` >= 1.
template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t t, const TrainingConfig& cfg);

/// Advances the state's timestep and updates every trainable tensor. The
/// embedding and batch-norm moving statistics are not touched.
template <typename T>
void adam_step(ModelParams<T>& params, const GradientSet<T>& grads, AdamState<T>& state,
               const TrainingConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double seconds = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  int stopped_epoch = 0;

  /// `epoch,train_loss,val_loss,seconds`, one row per completed epoch.
  std::string csv(bool include_time = true) const;
};

/// Patience-based stopping on strictly decreasing validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Records an epoch; returns true if it is the new best.
  bool update(int epoch, double val_loss);
  bool should_stop() const { return wait_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int wait_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = 0;
};

struct TrainHooks {
  /// Replaces the measured validation loss (used for scripted stopping tests).
  std::function<double(int epoch, double measured)> val_loss_override;
  std::function<void(int epoch, const ModelParams<float>&)> on_epoch_end;
  /// Called whenever an epoch becomes the new best.
  std::function<void(int epoch, const ModelParams<float>&)> on_improvement;
};

struct TrainResult {
  ModelParams<float> best;
  TrainingHistory history;
  double final_loss_scale = 1.0;
  int skipped_steps = 0;
};

/// Batch boundaries for one epoch; a trailing singleton joins the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch_size);

TrainResult train(ModelParams<float> init, const EncodedDataset& train_ds,
                  const EncodedDataset& val_ds, const TrainingConfig& cfg,
                  const TrainHooks& hooks = {});

/// train() with precision forced to Mixed.
TrainResult train_mixed(ModelParams<float> init, const EncodedDataset& train_ds,
                        const EncodedDataset& val_ds, TrainingConfig cfg,
                        const TrainHooks& hooks = {});

/// Mixed-precision loss-scale bookkeeping: halves on non-finite gradients
/// and fails once the scale drops below 1.
class LossScaler {
 public:
  explicit LossScaler(double scale) : scale_(scale) {}
  double scale() const { return scale_; }
  /// Returns true if the gradients are usable (and unscales them in place).
  bool unscale(GradientSet<float>& grads);

 private:
  double scale_;
};

}  // namespace emotag
