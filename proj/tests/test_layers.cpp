// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "emotag/netcore/network.hpp"
#include "support/oracles.hpp"
#include "support/toy_corpus.hpp"

using namespace emotag;

namespace {

Mat<double> random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Seq<double> make_seq(Mat<double> data, Eigen::Index batch, Eigen::Index steps) {
  return Seq<double>{std::move(data), batch, steps};
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("embedding lookup returns table rows and rejects unknown ids") {
  Mat<double> table = random_mat(5, 3, 1);
  table.row(0).setZero();
  IdMatrix ids(2, 2);
  ids << 0, 2, 2, 4;
  const auto out = embed_forward(ids, table);
  CHECK(out.batch == 2);
  CHECK(out.steps == 2);
  CHECK(out.data.row(0).isZero());
  CHECK(out.data.row(1) == table.row(2));
  CHECK(out.data.row(2) == out.data.row(1));
  CHECK(out.data.row(3) == table.row(4));

  ids(1, 1) = 5;
  CHECK_THROWS_AS(embed_forward(ids, table), DataError);
}

TEST_CASE("conv1d constant input gives kernel sum") {
  const auto x = make_seq(Mat<double>::Ones(30, 1), 1, 30);
  const Mat<double> kernel = Mat<double>::Ones(5, 1);
  const Mat<double> bias = Mat<double>::Zero(1, 1);
  const auto out = conv1d_forward(x, kernel, bias, 5);
  REQUIRE(out.steps == 26);
  for (Eigen::Index t = 0; t < 26; ++t) CHECK(out.data(t, 0) == 5.0);
}

TEST_CASE("conv1d zero input yields broadcast bias") {
  const auto x = make_seq(Mat<double>::Zero(2 * 30, 3), 2, 30);
  const Mat<double> kernel = random_mat(15, 4, 2);
  const Mat<double> bias = random_mat(1, 4, 3);
  const auto out = conv1d_forward(x, kernel, bias, 5);
  for (Eigen::Index r = 0; r < out.data.rows(); ++r) CHECK(out.data.row(r) == bias);
}

TEST_CASE("conv1d matches direct summation") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const int batch = 2, steps = 7, ch = 2, filters = seed == 11 ? 1 : 3, k = 5;
    const Mat<double> xm = random_mat(batch * steps, ch, seed);
    const Mat<double> kernel = random_mat(k * ch, filters, seed + 100);
    const Mat<double> bias = random_mat(1, filters, seed + 200);
    const auto out = conv1d_forward(make_seq(xm, batch, steps), kernel, bias, k);

    const std::vector<double> xv(xm.data(), xm.data() + xm.size());
    const std::vector<double> kv(kernel.data(), kernel.data() + kernel.size());
    const std::vector<double> bv(bias.data(), bias.data() + bias.size());
    const auto ref = oracle::conv_triple_loop(xv, batch, steps, ch, kv, k, filters, bv);
    REQUIRE(static_cast<std::size_t>(out.data.size()) == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(out.data.data()[i] - ref[i]) < 1e-6);
  }
}

TEST_CASE("conv1d rejects mismatched kernel") {
  const auto x = make_seq(Mat<double>::Ones(30, 2), 1, 30);
  CHECK_THROWS_AS(conv1d_forward(x, Mat<double>(Mat<double>::Ones(5, 1)), Mat<double>(Mat<double>::Zero(1, 1)), 5),
                  DataError);
}

TEST_CASE("batchnorm train mode normalizes each channel") {
  const Eigen::Index B = 4, T = 26, C = 6;
  Mat<double> xm = random_mat(B * T, C, 21, 3.0);
  for (Eigen::Index c = 0; c < C; ++c) xm.col(c).array() += static_cast<double>(c);
  const Mat<double> gamma = Mat<double>::Ones(1, C), beta = Mat<double>::Zero(1, C);
  Mat<double> mm = Mat<double>::Zero(1, C), mv = Mat<double>::Ones(1, C);
  BatchNormCache<double> cache;
  const auto out = batchnorm_forward(make_seq(xm, B, T), gamma, beta, mm, mv, Mode::Train, 0.99, 1e-3, &cache);
  for (Eigen::Index c = 0; c < C; ++c) {
    const auto col = cache.pre_relu.col(c).array();
    const double mean = col.mean();
    const double var = (col - mean).square().mean();
    CHECK(std::abs(mean) < 1e-4);
    // epsilon inside the square root shrinks the variance slightly below 1
    const double batch_var = (xm.col(c).array() - xm.col(c).mean()).square().mean();
    CHECK(std::abs(var - batch_var / (batch_var + 1e-3)) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-3);
    CHECK((out.data.col(c).array() >= 0).all());
  }
}

TEST_CASE("batchnorm moving statistics follow the momentum update") {
  const Eigen::Index B = 3, T = 5, C = 2;
  const Mat<double> xm = random_mat(B * T, C, 31);
  const Mat<double> gamma = Mat<double>::Ones(1, C), beta = Mat<double>::Zero(1, C);
  Mat<double> mm(1, C), mv(1, C);
  mm << 0.5, -1.0;
  mv << 2.0, 0.25;
  const Mat<double> mm0 = mm, mv0 = mv;
  batchnorm_forward(make_seq(xm, B, T), gamma, beta, mm, mv, Mode::Train, 0.99, 1e-3);
  for (Eigen::Index c = 0; c < C; ++c) {
    double sum = 0;
    for (Eigen::Index r = 0; r < B * T; ++r) sum += xm(r, c);
    const double mean = sum / static_cast<double>(B * T);
    double ss = 0;
    for (Eigen::Index r = 0; r < B * T; ++r) ss += (xm(r, c) - mean) * (xm(r, c) - mean);
    const double var = ss / static_cast<double>(B * T);
    CHECK(std::abs(mm(0, c) - (0.99 * mm0(0, c) + 0.01 * mean)) < 1e-12);
    CHECK(std::abs(mv(0, c) - (0.99 * mv0(0, c) + 0.01 * var)) < 1e-12);
  }
}

TEST_CASE("batchnorm inference with identity statistics") {
  const Mat<double> xm = random_mat(10, 3, 41, 2.0);
  const Mat<double> gamma = Mat<double>::Ones(1, 3), beta = Mat<double>::Zero(1, 3);
  Mat<double> mm = Mat<double>::Zero(1, 3), mv = Mat<double>::Ones(1, 3);
  const auto out = batchnorm_forward(make_seq(xm, 1, 10), gamma, beta, mm, mv, Mode::Infer, 0.99, 1e-3);
  for (Eigen::Index i = 0; i < xm.size(); ++i)
    CHECK(std::abs(out.data.data()[i] - std::max(0.0, xm.data()[i] / std::sqrt(1.001))) < 1e-12);
  CHECK(mm.isZero());
  CHECK(mv.isOnes());
}

TEST_CASE("batchnorm refuses a single-sample training batch") {
  const Mat<double> gamma = Mat<double>::Ones(1, 2), beta = Mat<double>::Zero(1, 2);
  Mat<double> mm = Mat<double>::Zero(1, 2), mv = Mat<double>::Ones(1, 2);
  CHECK_THROWS_AS(batchnorm_forward(make_seq(random_mat(26, 2, 5), 1, 26), gamma, beta, mm, mv, Mode::Train,
                                    0.99, 1e-3),
                  DataError);
}

TEST_CASE("maxpool picks pairwise maxima and routes ties to the earlier step") {
  Mat<double> xm(4, 1);
  xm << 1, 3, 2, 0;
  PoolCache<double> cache;
  const auto out = maxpool1d_forward(make_seq(xm, 1, 4), &cache);
  REQUIRE(out.steps == 2);
  CHECK(out.data(0, 0) == 3);
  CHECK(out.data(1, 0) == 2);

  Mat<double> tie(2, 1);
  tie << 5, 5;
  PoolCache<double> tc;
  const auto tout = maxpool1d_forward(make_seq(tie, 1, 2), &tc);
  CHECK(tout.data(0, 0) == 5);
  const auto grad = maxpool1d_backward(tc, make_seq(Mat<double>::Ones(1, 1), 1, 1));
  CHECK(grad.data(0, 0) == 1);
  CHECK(grad.data(1, 0) == 0);

  const auto cst = maxpool1d_forward(make_seq(Mat<double>::Constant(26, 3, 1.5), 1, 26));
  CHECK(cst.steps == 13);
  CHECK((cst.data.array() == 1.5).all());

  CHECK_THROWS_AS(maxpool1d_forward(make_seq(Mat<double>::Ones(5, 1), 1, 5)), DataError);
}

TEST_CASE("zero LSTM produces zero output") {
  const Mat<double> k = Mat<double>::Zero(64, 512), r = Mat<double>::Zero(128, 512), b = Mat<double>::Zero(1, 512);
  const LstmWeights<double> w{k, r, b};
  const auto out = bilstm_forward(make_seq(random_mat(2 * 13, 64, 3), 2, 13), w, w);
  CHECK(out.channels() == 256);
  CHECK(out.steps == 13);
  CHECK(out.data.isZero());
}

TEST_CASE("single-unit LSTM matches a hand-unrolled recurrence") {
  // gate order i, f, c, o
  Mat<double> k(1, 4), r(1, 4), b(1, 4);
  k << 0.5, -0.3, 0.8, 0.1;
  r << -0.2, 0.4, 0.6, -0.7;
  b << 0.1, 1.0, -0.2, 0.3;
  Mat<double> xm(2, 1);
  xm << 0.9, -1.4;
  const LstmWeights<double> w{k, r, b};

  auto step = [&](double x, double h, double c, double& h_out, double& c_out) {
    const double i = sig(x * k(0, 0) + h * r(0, 0) + b(0, 0));
    const double f = sig(x * k(0, 1) + h * r(0, 1) + b(0, 1));
    const double g = std::tanh(x * k(0, 2) + h * r(0, 2) + b(0, 2));
    const double o = sig(x * k(0, 3) + h * r(0, 3) + b(0, 3));
    c_out = f * c + i * g;
    h_out = o * std::tanh(c_out);
  };

  double h1, c1, h2, c2;
  step(0.9, 0, 0, h1, c1);
  step(-1.4, h1, c1, h2, c2);
  const auto fwd = lstm_forward(make_seq(xm, 1, 2), w, false);
  CHECK(std::abs(fwd.data(0, 0) - h1) < 1e-10);
  CHECK(std::abs(fwd.data(1, 0) - h2) < 1e-10);

  double rh1, rc1, rh2, rc2;
  step(-1.4, 0, 0, rh1, rc1);
  step(0.9, rh1, rc1, rh2, rc2);
  const auto bwd = lstm_forward(make_seq(xm, 1, 2), w, true);
  CHECK(std::abs(bwd.data(1, 0) - rh1) < 1e-10);
  CHECK(std::abs(bwd.data(0, 0) - rh2) < 1e-10);

  const auto bi = bilstm_forward(make_seq(xm, 1, 2), w, w);
  CHECK(bi.data(0, 0) == fwd.data(0, 0));
  CHECK(bi.data(0, 1) == bwd.data(0, 0));
}

TEST_CASE("attention with equal scores averages the timesteps") {
  const Mat<double> hm = random_mat(2 * 13, 256, 51);
  const auto h = make_seq(hm, 2, 13);
  const auto att = attention_pool(h, Mat<double>(Mat<double>::Zero(256, 1)), Mat<double>(Mat<double>::Constant(1, 1, 0.7)));
  CHECK((att.weights.array() - 1.0 / 13.0).abs().maxCoeff() < 1e-15);
  const auto avg = average_pool(h);
  CHECK((att.context - avg).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention saturates on a dominant score") {
  Mat<double> hm = Mat<double>::Zero(3, 2);
  hm << 0, 1, 1000, 2, 0, 3;
  Mat<double> w(2, 1);
  w << 1, 0;
  const auto att = attention_pool(make_seq(hm, 1, 3), w, Mat<double>(Mat<double>::Zero(1, 1)));
  CHECK(att.weights(0, 1) > 1 - 1e-12);
  CHECK(std::abs(att.context(0, 0) - 1000) < 1e-6);
  CHECK(std::abs(att.context(0, 1) - 2) < 1e-9);
}

TEST_CASE("attention matches softmax then weighted sum") {
  const Mat<double> hm = random_mat(3, 2, 61);
  const Mat<double> w = random_mat(2, 1, 62);
  const Mat<double> b = random_mat(1, 1, 63);
  const auto att = attention_pool(make_seq(hm, 1, 3), w, b);
  double s[3], z = 0;
  for (int t = 0; t < 3; ++t) {
    s[t] = std::exp(hm(t, 0) * w(0, 0) + hm(t, 1) * w(1, 0) + b(0, 0));
    z += s[t];
  }
  for (int c = 0; c < 2; ++c) {
    double ctx = 0;
    for (int t = 0; t < 3; ++t) ctx += s[t] / z * hm(t, c);
    CHECK(std::abs(att.context(0, c) - ctx) < 1e-9);
  }
  for (int t = 0; t < 3; ++t) CHECK(std::abs(att.weights(0, t) - s[t] / z) < 1e-9);
}

TEST_CASE("attention weights are a distribution for random inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto h = make_seq(random_mat(4 * 13, 256, seed, 2.0), 4, 13);
    const auto att = attention_pool(h, random_mat(256, 1, seed + 1000), random_mat(1, 1, seed + 2000));
    CHECK((att.weights.array() >= 0).all());
    for (Eigen::Index b = 0; b < 4; ++b) CHECK(std::abs(att.weights.row(b).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("average pooling") {
  Mat<double> hm(2, 1);
  hm << 0, 2;
  CHECK(average_pool(make_seq(hm, 1, 2))(0, 0) == 1.0);
  const auto cst = average_pool(make_seq(Mat<double>::Constant(13, 4, -0.25), 1, 13));
  CHECK((cst.array() == -0.25).all());
}

TEST_CASE("head with zero weights outputs one half") {
  const Mat<double> v = random_mat(3, 256, 71);
  const Mat<double> dw = Mat<double>::Zero(256, 128), db = Mat<double>::Zero(1, 128);
  const Mat<double> ow = Mat<double>::Zero(128, 28), ob = Mat<double>::Zero(1, 28);
  const auto p = head_forward<double>(v, dw, db, ow, ob, Mode::Infer, 0.5, nullptr, nullptr);
  CHECK((p.array() == 0.5).all());
}

TEST_CASE("head outputs stay in the open unit interval and inference is deterministic") {
  const Mat<double> v = random_mat(5, 256, 81, 50.0);
  const Mat<double> dw = random_mat(256, 128, 82), db = random_mat(1, 128, 83);
  const Mat<double> ow = random_mat(128, 28, 84), ob = random_mat(1, 28, 85);
  const auto p1 = head_forward<double>(v, dw, db, ow, ob, Mode::Infer, 0.5, nullptr, nullptr);
  const auto p2 = head_forward<double>(v, dw, db, ow, ob, Mode::Infer, 0.5, nullptr, nullptr);
  CHECK(p1 == p2);
  CHECK((p1.array() >= 0).all());
  CHECK((p1.array() <= 1).all());

  const Mat<float> vf = random_mat(5, 256, 86).cast<float>();
  const auto pf = head_forward<float>(vf, dw.cast<float>(), db.cast<float>(), ow.cast<float>(),
                                      ob.cast<float>(), Mode::Infer, 0.5, nullptr, nullptr);
  CHECK((pf.array() > 0).all());
  CHECK((pf.array() < 1).all());
}

TEST_CASE("dropout keeps half the units on average with inverted scaling") {
  const Mat<double> v = Mat<double>::Ones(64, 256);
  const Mat<double> dw = Mat<double>::Identity(256, 128), db = Mat<double>::Zero(1, 128);
  const Mat<double> ow = Mat<double>::Zero(128, 28), ob = Mat<double>::Zero(1, 28);
  std::mt19937_64 rng(5);
  HeadCache<double> cache;
  head_forward<double>(v, dw, db, ow, ob, Mode::Train, 0.5, &rng, nullptr, &cache);
  const double kept = (cache.mask.array() > 0).cast<double>().mean();
  CHECK(kept > 0.45);
  CHECK(kept < 0.55);
  CHECK(((cache.mask.array() == 0) || (cache.mask.array() == 2)).all());
}

TEST_CASE("binary cross-entropy") {
  LabelMatrix y(2, 28);
  y.setZero();
  y(0, 3) = 1;
  y(1, 7) = 1;
  CHECK(std::abs(bce_loss(Mat<double>(Mat<double>::Constant(2, 28, 0.5)), y) - std::log(2.0)) < 1e-12);
  CHECK(bce_loss(y.cast<double>().eval(), y) < 1e-5);

  LabelMatrix one(1, 1);
  one(0, 0) = 1;
  CHECK(std::abs(bce_loss(Mat<double>(Mat<double>::Constant(1, 1, 0.25)), one) - 1.3863) < 1e-4);

  const auto g = bce_grad_logits(y.cast<double>().eval(), y);
  CHECK(g.isZero());
}

TEST_CASE("parameter counts reconcile with the published table") {
  const ModelConfig cfg;
  const auto counts = count_params(cfg, 70702);
  CHECK(counts.total == 21541317);
  CHECK(counts.trainable == 330589);
  CHECK(counts.frozen == 21210728);
  CHECK(counts.per_layer.at("conv_layer") == 96064);
  CHECK(counts.per_layer.at("output_layer") == 3612);
  CHECK(counts.per_layer.at("bidirectional") == 197632);
  CHECK(counts.per_layer.at("bidirectional") / 2 == 98816);
  CHECK(counts.per_layer.at("embedding_layer") == 21210600);

  for (std::int64_t vocab : {2, 20, 1000, 70702}) {
    const auto c = count_params(cfg, vocab);
    CHECK(c.total == c.trainable + c.frozen);
    CHECK(c.frozen == vocab * 300 + 128);
    std::int64_t sum = 0;
    for (const auto& [name, n] : c.per_layer) sum += n;
    CHECK(sum == c.total);
  }

  ModelConfig plain = cfg;
  plain.use_attention = false;
  CHECK(count_params(plain, 70702).trainable == 330589 - 257);
}

TEST_CASE("allocated tensors agree with the closed-form count") {
  for (bool attention : {true, false}) {
    ModelConfig cfg;
    cfg.use_attention = attention;
    const auto p = init_params(cfg, Mat<float>::Zero(37, 300), 3);
    const auto a = count_params(p);
    const auto b = count_params(cfg, 37);
    CHECK(a.total == b.total);
    CHECK(a.trainable == b.trainable);
    CHECK(a.per_layer == b.per_layer);
  }
}

TEST_CASE("initialization follows the stated scheme") {
  const auto p = init_params(ModelConfig{}, Mat<float>::Zero(10, 300), 9);
  const auto& bias = p[ParamId::LstmFwdBias];
  CHECK(bias.block(0, 128, 1, 128).isOnes());
  CHECK(bias.block(0, 0, 1, 128).isZero());
  CHECK(bias.block(0, 256, 1, 256).isZero());
  const Mat<double> rec = p[ParamId::LstmFwdRecurrent].cast<double>();
  // orthogonal rows of the 128 x 512 recurrent kernel
  CHECK((rec * rec.transpose() - Mat<double>::Identity(128, 128)).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(p[ParamId::BnGamma].isOnes());
  CHECK(p[ParamId::BnBeta].isZero());
  CHECK(p.bn_moving_var.isOnes());
  const double limit = std::sqrt(6.0 / (1500.0 + 64.0 * 5.0));
  CHECK(p[ParamId::ConvKernel].cwiseAbs().maxCoeff() <= limit + 1e-7);

  const auto q = init_params(ModelConfig{}, Mat<float>::Zero(10, 300), 9);
  for (int i = 0; i < kNumTrainable; ++i) CHECK(p.trainable[i] == q.trainable[i]);
}

TEST_CASE("shape chain at batch size 2") {
  for (bool attention : {true, false}) {
    ModelConfig cfg;
    cfg.use_attention = attention;
    auto params = init_params(cfg, Mat<float>::Random(50, 300), 1);
    Network<float> net(params);
    std::mt19937_64 rng(1);
    const IdMatrix ids = toy::random_ids(2, 30, 50, 2);
    for (Mode mode : {Mode::Infer, Mode::Train}) {
      ForwardOptions opt;
      opt.mode = mode;
      opt.rng = &rng;
      net.forward(ids, opt);
      const std::vector<std::vector<Eigen::Index>> want = {
          {2, 30}, {2, 30, 300}, {2, 26, 64}, {2, 13, 64}, {2, 13, 256}, {2, 256}, {2, 128}, {2, 28}};
      CHECK(net.shape_trace().shapes == want);
    }
    if (attention) CHECK(net.cache().attention_weights.cols() == 13);
  }
}

TEST_CASE("network inference is bit-identical across passes") {
  const auto params = init_params(ModelConfig{}, Mat<float>::Random(40, 300), 4);
  const IdMatrix ids = toy::random_ids(3, 30, 40, 5);
  Network<float> net(params);
  const Mat<float> a = net.forward(ids);
  const Mat<float> b = net.forward(ids);
  CHECK(a == b);
  IdMatrix bad = ids;
  bad(0, 0) = 40;
  CHECK_THROWS_AS(net.forward(bad), DataError);
  CHECK_THROWS_AS(net.forward(ids.leftCols(29).eval()), DataError);
}

TEST_CASE("mixed-precision forward stays close to full precision") {
  const auto params = init_params(ModelConfig{}, Mat<float>::Random(40, 300) * 0.05f, 4);
  const IdMatrix ids = toy::random_ids(4, 30, 40, 6);
  const auto full = predict(params, ids);
  const auto half = predict(params, ids, 256, true);
  CHECK((full - half).cwiseAbs().maxCoeff() < 5e-3);
}
