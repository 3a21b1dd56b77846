// SPDX-License-Identifier: Apache-2.0
#include "emotag/netcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <vector>

#include "emotag/artifact_io.hpp"

namespace emotag {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'F', 'G'};

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
    std::memcpy(&v, b, sizeof(U));
  }
  return v;
}

class Writer {
 public:
  template <typename U>
  void put(U v) {
    v = to_little(v);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void put_tensor(const std::string& name, const Mat<float>& m) {
    put_string(name);
    put(static_cast<std::uint32_t>(m.rows()));
    put(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) put(m.data()[i]);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}
  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return to_little(v);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Mat<float>> get_tensor() {
    std::string name = get_string();
    const auto rows = get<std::uint32_t>();
    const auto cols = get<std::uint32_t>();
    need(static_cast<std::size_t>(rows) * cols * sizeof(float));
    Mat<float> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get<float>();
    return {std::move(name), std::move(m)};
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DataError("unexpected end of checkpoint");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

void put_config(Writer& w, const ModelConfig& c) {
  for (int v : {c.seq_len, c.embed_dim, c.conv_filters, c.conv_kernel, c.pool_size, c.lstm_units,
                c.dense_units, c.num_labels})
    w.put(static_cast<std::uint32_t>(v));
  w.put(static_cast<std::uint32_t>(c.use_attention));
  w.put(c.dropout_rate);
  w.put(c.bn_momentum);
  w.put(c.bn_epsilon);
}

ModelConfig get_config(Reader& r) {
  ModelConfig c;
  for (int* v : {&c.seq_len, &c.embed_dim, &c.conv_filters, &c.conv_kernel, &c.pool_size,
                 &c.lstm_units, &c.dense_units, &c.num_labels})
    *v = static_cast<int>(r.get<std::uint32_t>());
  c.use_attention = r.get<std::uint32_t>() != 0;
  c.dropout_rate = r.get<double>();
  c.bn_momentum = r.get<double>();
  c.bn_epsilon = r.get<double>();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const ModelParams<float>& p) {
  Writer w;
  for (char ch : kMagic) w.put(ch);
  w.put(kCheckpointVersion);
  put_config(w, p.config);
  w.put(static_cast<std::uint32_t>(kNumTrainable + 3));
  w.put_tensor("embedding", p.embedding);
  w.put_tensor("batch_norm/moving_mean", p.bn_moving_mean);
  w.put_tensor("batch_norm/moving_var", p.bn_moving_var);
  for (int i = 0; i < kNumTrainable; ++i)
    w.put_tensor(std::string(param_name(param_id(i))), p.trainable[static_cast<std::size_t>(i)]);
  return w.take();
}

ModelParams<float> deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& ch : magic) ch = r.get<char>();
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  ModelParams<float> p;
  p.config = get_config(r);
  try {
    p.config.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint config block: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  if (count != kNumTrainable + 3)
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                    std::to_string(kNumTrainable + 3));

  auto expect = [&](const std::string& want, Eigen::Index rows, Eigen::Index cols) {
    auto [name, m] = r.get_tensor();
    if (name != want) throw DataError("checkpoint tensor '" + name + "' where '" + want + "' expected");
    if (rows >= 0 && (m.rows() != rows || m.cols() != cols))
      throw DataError("checkpoint tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()));
    return std::move(m);
  };
  p.embedding = expect("embedding", -1, -1);
  if (p.embedding.cols() != p.config.embed_dim)
    throw DataError("checkpoint tensor 'embedding' has width " + std::to_string(p.embedding.cols()));
  p.bn_moving_mean = expect("batch_norm/moving_mean", 1, p.config.conv_filters);
  p.bn_moving_var = expect("batch_norm/moving_var", 1, p.config.conv_filters);
  for (int i = 0; i < kNumTrainable; ++i) {
    auto [rows, cols] = param_shape(p.config, param_id(i));
    p.trainable[static_cast<std::size_t>(i)] = expect(std::string(param_name(param_id(i))), rows, cols);
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint payload");
  return p;
}

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(params));
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

void load_checkpoint_into(ModelParams<float>& params, const std::filesystem::path& path) {
  ModelParams<float> loaded = load_checkpoint(path);
  auto mismatch = [](std::string_view name, const Mat<float>& want, const Mat<float>& got) {
    return DataError("config mismatch on tensor '" + std::string(name) + "': model " +
                     std::to_string(want.rows()) + "x" + std::to_string(want.cols()) +
                     ", checkpoint " + std::to_string(got.rows()) + "x" + std::to_string(got.cols()));
  };
  if (loaded.embedding.rows() != params.embedding.rows() ||
      loaded.embedding.cols() != params.embedding.cols())
    throw mismatch("embedding", params.embedding, loaded.embedding);
  for (int i = 0; i < kNumTrainable; ++i) {
    const auto& want = params.trainable[static_cast<std::size_t>(i)];
    const auto& got = loaded.trainable[static_cast<std::size_t>(i)];
    if (want.rows() != got.rows() || want.cols() != got.cols())
      throw mismatch(param_name(param_id(i)), want, got);
  }
  if (!(loaded.config == params.config))
    throw DataError("config mismatch: checkpoint model configuration differs (tensor shapes agree)");
  params = std::move(loaded);
}

}  // namespace emotag
