// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "emotag/trainer.hpp"
#include "support/toy_corpus.hpp"

using namespace emotag;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.conv_filters = 8;
  cfg.lstm_units = 6;
  cfg.dense_units = 8;
  return cfg;
}

struct TinySetup {
  toy::EncodedToy data;
  ModelParams<float> init;
};

const TinySetup& tiny() {
  static const TinySetup s = [] {
    toy::ToyConfig tc;
    tc.n_train = 101;  // 101 = 2 * 50 + 1 exercises the trailing-singleton merge
    tc.n_val = 40;
    tc.n_test = 40;
    TinySetup out{toy::encode_toy(toy::make_keyword_corpus(tc), 8), {}};
    out.init = init_params(tiny_config(), out.data.embedding.values, 5);
    return out;
  }();
  return s;
}

TrainingConfig fast_config(int epochs) {
  TrainingConfig cfg;
  cfg.batch_size = 50;
  cfg.max_epochs = epochs;
  cfg.seed = 99;
  return cfg;
}

bool same_params(const ModelParams<float>& a, const ModelParams<float>& b) {
  for (int i = 0; i < kNumTrainable; ++i)
    if (a.trainable[i] != b.trainable[i]) return false;
  return a.bn_moving_mean == b.bn_moving_mean && a.bn_moving_var == b.bn_moving_var &&
         a.embedding == b.embedding;
}

}  // namespace

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  std::vector<double> theta = {0.3, -1.2, 5.0}, grad(3, 0.0), m(3, 0.0), v(3, 0.0);
  const auto before = theta;
  TrainingConfig cfg;
  for (int t = 1; t <= 5; ++t) adam_update<double>(theta, grad, m, v, t, cfg);
  CHECK(theta == before);
}

TEST_CASE("first adam step on a unit gradient") {
  std::vector<double> theta = {0.0}, grad = {1.0}, m = {0.0}, v = {0.0};
  adam_update<double>(theta, grad, m, v, 1, TrainingConfig{});
  CHECK(std::abs(theta[0] - (-1e-3 / (1.0 + 1e-7))) < 1e-15);
  CHECK(std::abs(theta[0] - (-9.999999e-4)) < 1e-12);
  CHECK(std::abs(m[0] - 0.1) < 1e-15);
  CHECK(std::abs(v[0] - 0.001) < 1e-15);
}

TEST_CASE("adam matches a second step computed by hand") {
  std::vector<double> theta = {0.5}, m = {0.0}, v = {0.0};
  const TrainingConfig cfg;
  adam_update<double>(theta, std::vector<double>{0.2}, m, v, 1, cfg);
  adam_update<double>(theta, std::vector<double>{-0.4}, m, v, 2, cfg);
  double mm = 0.1 * 0.2, vv = 0.001 * 0.04, th = 0.5;
  th -= 1e-3 * (mm / 0.1) / (std::sqrt(vv / 0.001) + 1e-7);
  mm = 0.9 * mm + 0.1 * -0.4;
  vv = 0.999 * vv + 0.001 * 0.16;
  th -= 1e-3 * (mm / (1 - 0.81)) / (std::sqrt(vv / (1 - 0.999 * 0.999)) + 1e-7);
  CHECK(std::abs(theta[0] - th) < 1e-15);
}

TEST_CASE("adam rejects mismatched shapes and timestep zero") {
  std::vector<double> a(3), b(2), c(3), d(3);
  CHECK_THROWS_AS(adam_update<double>(a, b, c, d, 1, TrainingConfig{}), DataError);
  CHECK_THROWS_AS(adam_update<double>(a, c, c, d, 0, TrainingConfig{}), UsageError);

  auto p = tiny().init;
  auto state = make_adam_state<float>(p.config);
  auto grads = zeros_like<float>(p.config);
  grads[0].resize(3, 3);
  CHECK_THROWS_AS(adam_step(p, grads, state, TrainingConfig{}), DataError);
}

TEST_CASE("adam steps never touch frozen tensors") {
  auto p = tiny().init;
  const auto before = p;
  auto state = make_adam_state<float>(p.config);
  auto grads = zeros_like<float>(p.config);
  for (auto& g : grads) g.setOnes();
  for (int s = 0; s < 10; ++s) adam_step(p, grads, state, TrainingConfig{});
  CHECK(state.t == 10);
  CHECK(p.embedding == before.embedding);
  CHECK(p.bn_moving_mean == before.bn_moving_mean);
  CHECK(p.bn_moving_var == before.bn_moving_var);
  CHECK(p[ParamId::DenseBias] != before[ParamId::DenseBias]);
}

TEST_CASE("early stopping on the scripted loss sequence") {
  EarlyStopping stop(5);
  const std::vector<double> losses = {1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95};
  int stopped = 0;
  for (std::size_t e = 0; e < losses.size(); ++e) {
    stop.update(static_cast<int>(e + 1), losses[e]);
    if (stop.should_stop()) {
      stopped = static_cast<int>(e + 1);
      break;
    }
  }
  CHECK(stopped == 7);
  CHECK(stop.best_epoch() == 2);
  CHECK(stop.best_loss() == 0.9);
}

TEST_CASE("ties do not count as improvement") {
  EarlyStopping stop(2);
  CHECK(stop.update(1, 0.5));
  CHECK_FALSE(stop.update(2, 0.5));
  CHECK_FALSE(stop.update(3, 0.5));
  CHECK(stop.should_stop());
  CHECK(stop.best_epoch() == 1);
  CHECK_THROWS_AS(EarlyStopping(0), UsageError);
}

TEST_CASE("batch ranges merge a trailing singleton") {
  using R = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(batch_ranges(10, 4) == R{{0, 4}, {4, 8}, {8, 10}});
  CHECK(batch_ranges(9, 4) == R{{0, 4}, {4, 9}});
  CHECK(batch_ranges(8, 4) == R{{0, 4}, {4, 8}});
  CHECK(batch_ranges(3, 256) == R{{0, 3}});
  CHECK(batch_ranges(513, 256) == R{{0, 256}, {256, 513}});
  for (std::size_t n = 2; n < 80; ++n) {
    const auto r = batch_ranges(n, 7);
    CHECK(r.front().first == 0);
    CHECK(r.back().second == n);
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(r[i].second - r[i].first >= 2);
      if (i > 0) CHECK(r[i].first == r[i - 1].second);
    }
  }
}

TEST_CASE("loss scaler halves on overflow and gives up below one") {
  const ModelConfig cfg = tiny_config();
  auto grads = zeros_like<float>(cfg);
  for (auto& g : grads) g.setConstant(8.0f);
  LossScaler s(4.0);
  CHECK(s.unscale(grads));
  CHECK(grads[0](0, 0) == 2.0f);
  CHECK(s.scale() == 4.0);

  grads[3](0, 0) = std::numeric_limits<float>::infinity();
  CHECK_FALSE(s.unscale(grads));
  CHECK(s.scale() == 2.0);
  grads[3](0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(s.unscale(grads));
  CHECK(s.scale() == 1.0);
  CHECK_THROWS_WITH_AS(s.unscale(grads), "mixed precision diverged", NumericError);
}

TEST_CASE("training config validation") {
  TrainingConfig cfg;
  cfg.validate();
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = {};
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("training refuses empty datasets") {
  const auto& t = tiny();
  EncodedDataset empty = t.data.val.select({});
  CHECK_THROWS_AS(train(t.init, empty, t.data.val, fast_config(1)), DataError);
  CHECK_THROWS_AS(train(t.init, t.data.train, empty, fast_config(1)), DataError);
}

TEST_CASE("scripted validation losses stop at epoch 7 and restore epoch 2") {
  const auto& t = tiny();
  const std::vector<double> losses = {1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97};
  TrainHooks hooks;
  hooks.val_loss_override = [&](int epoch, double) { return losses[static_cast<std::size_t>(epoch - 1)]; };
  ModelParams<float> at_epoch2;
  hooks.on_epoch_end = [&](int epoch, const ModelParams<float>& p) {
    if (epoch == 2) at_epoch2 = p;
  };
  auto cfg = fast_config(9);
  const auto result = train(t.init, t.data.train, t.data.val, cfg, hooks);
  CHECK(result.history.stopped_epoch == 7);
  CHECK(result.history.best_epoch == 2);
  CHECK(result.history.epochs.size() == 7);
  CHECK(same_params(result.best, at_epoch2));

  const std::string csv = result.history.csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
  CHECK(csv.starts_with("epoch,train_loss,val_loss,seconds\n"));
}

TEST_CASE("strictly decreasing validation loss runs every epoch") {
  const auto& t = tiny();
  TrainHooks hooks;
  hooks.val_loss_override = [](int epoch, double) { return 1.0 / epoch; };
  TrainingConfig cfg = fast_config(34);
  cfg.batch_size = 101;
  const auto result = train(t.init, t.data.train, t.data.val, cfg, hooks);
  CHECK(result.history.stopped_epoch == 34);
  CHECK(result.history.best_epoch == 34);
  for (std::size_t i = 0; i < result.history.epochs.size(); ++i)
    CHECK(result.history.epochs[i].epoch == static_cast<int>(i + 1));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto& t = tiny();
  const auto a = train(t.init, t.data.train, t.data.val, fast_config(3));
  const auto b = train(t.init, t.data.train, t.data.val, fast_config(3));
  CHECK(same_params(a.best, b.best));
  CHECK(a.history.csv(false) == b.history.csv(false));
  CHECK(a.best.embedding == t.init.embedding);

  auto other = fast_config(3);
  other.seed = 100;
  const auto c = train(t.init, t.data.train, t.data.val, other);
  CHECK_FALSE(same_params(a.best, c.best));
}

TEST_CASE("training lowers the loss and returns the best validation epoch") {
  const auto& t = tiny();
  const auto r = train(t.init, t.data.train, t.data.val, fast_config(6));
  const auto& e = r.history.epochs;
  CHECK(e.back().train_loss < e.front().train_loss);
  double best = e.front().val_loss;
  int best_epoch = 1;
  for (const auto& rec : e)
    if (rec.val_loss < best) best = rec.val_loss, best_epoch = rec.epoch;
  CHECK(r.history.best_epoch == best_epoch);
  const double restored = evaluate_loss(r.best, t.data.val.sequences, t.data.val.labels);
  CHECK(std::abs(restored - best) < 1e-9);
}

TEST_CASE("mixed precision trains deterministically and keeps master weights in float") {
  const auto& t = tiny();
  const auto a = train_mixed(t.init, t.data.train, t.data.val, fast_config(2));
  const auto b = train_mixed(t.init, t.data.train, t.data.val, fast_config(2));
  CHECK(same_params(a.best, b.best));
  CHECK(a.final_loss_scale == 1024.0);
  CHECK(std::isfinite(a.history.epochs.back().val_loss));
  const auto full = train(t.init, t.data.train, t.data.val, fast_config(2));
  CHECK(std::abs(full.history.epochs.back().val_loss - a.history.epochs.back().val_loss) < 0.05);
}
