// SPDX-License-Identifier: Apache-2.0
#include "emotag/cli/run_config.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace emotag {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed"}},
      {"paths", {"corpus", "train", "val", "test", "embeddings", "labels", "weak_samples", "votes", "output_dir"}},
      {"model",
       {"embed_dim", "conv_filters", "conv_kernel", "lstm_units", "dense_units", "dropout_rate",
        "use_attention", "bn_momentum", "bn_epsilon"}},
      {"training",
       {"lr", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience", "precision", "loss_scale"}},
      {"balance", {"enabled", "target", "max_duplication_factor"}},
      {"eval", {"grid_step", "top_k"}},
      {"augment", {"weak_cutoff", "alignment_threshold"}},
  };
  return keys;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (v) return *v;
    return std::nullopt;
  }

  std::string required(const std::string& key) const {
    auto v = raw(key);
    if (!v || v->empty()) throw UsageError("missing config key '" + key + "'");
    return *v;
  }

  template <typename T>
  void number(const std::string& key, T& out) const {
    auto v = raw(key);
    if (!v) return;
    try {
      if constexpr (std::is_floating_point_v<T>)
        out = static_cast<T>(parse_double(*v, key));
      else
        out = static_cast<T>(parse_int(*v, key));
    } catch (const DataError& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }

  void flag(const std::string& key, bool& out) const {
    auto v = raw(key);
    if (!v) return;
    if (*v == "true" || *v == "1" || *v == "yes")
      out = true;
    else if (*v == "false" || *v == "0" || *v == "no")
      out = false;
    else
      throw UsageError("config key '" + key + "' expects true or false, got '" + *v + "'");
  }

  void path(const std::string& key, fs::path& out, const fs::path& base) const {
    auto v = raw(key);
    if (!v || v->empty()) return;
    fs::path p(*v);
    out = p.is_relative() && !base.empty() ? base / p : p;
  }

 private:
  const pt::ptree& tree_;
};

std::string render(double v) { return format_g9(v); }
std::string render(const fs::path& p) { return p.generic_string(); }

}  // namespace

Precision parse_precision(std::string_view s) {
  if (s == "full") return Precision::Full;
  if (s == "mixed") return Precision::Mixed;
  throw UsageError("precision must be 'full' or 'mixed', got '" + std::string(s) + "'");
}

RunConfig RunConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
  return parse(read_file(path), path.parent_path());
}

RunConfig RunConfig::parse(std::string_view content, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(content)};
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) throw UsageError("unknown config section '" + section + "'");
    for (const auto& [key, value] : body)
      if (!it->second.count(key)) throw UsageError("unknown config key '" + section + "." + key + "'");
  }

  const Reader r(tree);
  RunConfig c;
  c.seed = static_cast<std::uint64_t>(parse_int(r.required("run.seed"), "run.seed"));

  c.paths.output_dir = fs::path(r.required("paths.output_dir"));
  if (c.paths.output_dir.is_relative() && !base_dir.empty()) c.paths.output_dir = base_dir / c.paths.output_dir;
  for (auto [key, member] : {std::pair{"paths.corpus", &RunPaths::corpus}, std::pair{"paths.train", &RunPaths::train},
                             std::pair{"paths.val", &RunPaths::val}, std::pair{"paths.test", &RunPaths::test},
                             std::pair{"paths.embeddings", &RunPaths::embeddings},
                             std::pair{"paths.labels", &RunPaths::labels},
                             std::pair{"paths.weak_samples", &RunPaths::weak_samples},
                             std::pair{"paths.votes", &RunPaths::votes}})
    r.path(key, c.paths.*member, base_dir);

  r.number("model.embed_dim", c.model.embed_dim);
  r.number("model.conv_filters", c.model.conv_filters);
  r.number("model.conv_kernel", c.model.conv_kernel);
  r.number("model.lstm_units", c.model.lstm_units);
  r.number("model.dense_units", c.model.dense_units);
  r.number("model.dropout_rate", c.model.dropout_rate);
  r.number("model.bn_momentum", c.model.bn_momentum);
  r.number("model.bn_epsilon", c.model.bn_epsilon);
  r.flag("model.use_attention", c.model.use_attention);

  r.number("training.lr", c.training.lr);
  r.number("training.beta1", c.training.beta1);
  r.number("training.beta2", c.training.beta2);
  r.number("training.epsilon", c.training.epsilon);
  r.number("training.batch_size", c.training.batch_size);
  r.number("training.max_epochs", c.training.max_epochs);
  r.number("training.patience", c.training.patience);
  r.number("training.loss_scale", c.training.loss_scale);
  if (auto p = r.raw("training.precision")) c.training.precision = parse_precision(*p);

  r.flag("balance.enabled", c.balance_enabled);
  r.number("balance.target", c.balance.target);
  r.number("balance.max_duplication_factor", c.balance.max_duplication_factor);

  r.number("eval.grid_step", c.eval.grid_step);
  r.number("eval.top_k", c.eval.top_k);
  r.number("augment.weak_cutoff", c.augment.weak_cutoff);
  r.number("augment.alignment_threshold", c.augment.alignment_threshold);

  apply_overrides(c, {});
  return c;
}

void apply_overrides(RunConfig& c, const ConfigOverrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.output_dir) c.paths.output_dir = *o.output_dir;
  if (o.max_epochs) c.training.max_epochs = *o.max_epochs;
  if (o.batch_size) c.training.batch_size = *o.batch_size;
  if (o.precision) c.training.precision = parse_precision(*o.precision);
  if (o.no_attention) c.model.use_attention = false;

  c.training.seed = c.seed;
  c.balance.seed = c.seed;
  c.model.validate();
  c.training.validate();
  if (!(c.eval.grid_step > 0.0 && c.eval.grid_step < 1.0)) throw UsageError("eval.grid_step must be in (0,1)");
  if (c.eval.top_k < 1) throw UsageError("eval.top_k must be >= 1");
  if (c.balance.target < 0 || c.balance.max_duplication_factor < 1)
    throw UsageError("balance.target must be >= 0 and balance.max_duplication_factor >= 1");
}

std::vector<double> RunConfig::threshold_grid() const {
  const double inv = 1.0 / eval.grid_step;
  const auto steps = static_cast<long>(std::llround(inv));
  std::vector<double> grid;
  if (std::abs(inv - static_cast<double>(steps)) < 1e-9) {
    for (long k = 1; k < steps; ++k) grid.push_back(static_cast<double>(k) / static_cast<double>(steps));
  } else {
    for (long k = 1; k * eval.grid_step < 1.0 - 1e-12; ++k) grid.push_back(static_cast<double>(k) * eval.grid_step);
  }
  return grid;
}

LabelVocabulary RunConfig::vocabulary() const {
  return paths.labels.empty() ? LabelVocabulary::go_emotions() : LabelVocabulary::load(paths.labels);
}

std::string RunConfig::canonical() const {
  std::ostringstream s;
  s << "run.seed=" << seed << '\n';
  s << "paths.corpus=" << render(paths.corpus) << '\n'
    << "paths.train=" << render(paths.train) << '\n'
    << "paths.val=" << render(paths.val) << '\n'
    << "paths.test=" << render(paths.test) << '\n'
    << "paths.embeddings=" << render(paths.embeddings) << '\n'
    << "paths.labels=" << render(paths.labels) << '\n'
    << "paths.weak_samples=" << render(paths.weak_samples) << '\n'
    << "paths.votes=" << render(paths.votes) << '\n';
  const auto& m = model;
  s << "model.seq_len=" << m.seq_len << '\n'
    << "model.embed_dim=" << m.embed_dim << '\n'
    << "model.conv_filters=" << m.conv_filters << '\n'
    << "model.conv_kernel=" << m.conv_kernel << '\n'
    << "model.pool_size=" << m.pool_size << '\n'
    << "model.lstm_units=" << m.lstm_units << '\n'
    << "model.dense_units=" << m.dense_units << '\n'
    << "model.dropout_rate=" << render(m.dropout_rate) << '\n'
    << "model.num_labels=" << m.num_labels << '\n'
    << "model.use_attention=" << (m.use_attention ? "true" : "false") << '\n'
    << "model.bn_momentum=" << render(m.bn_momentum) << '\n'
    << "model.bn_epsilon=" << render(m.bn_epsilon) << '\n';
  const auto& t = training;
  s << "training.lr=" << render(t.lr) << '\n'
    << "training.beta1=" << render(t.beta1) << '\n'
    << "training.beta2=" << render(t.beta2) << '\n'
    << "training.epsilon=" << render(t.epsilon) << '\n'
    << "training.batch_size=" << t.batch_size << '\n'
    << "training.max_epochs=" << t.max_epochs << '\n'
    << "training.patience=" << t.patience << '\n'
    << "training.precision=" << (t.precision == Precision::Mixed ? "mixed" : "full") << '\n'
    << "training.loss_scale=" << render(t.loss_scale) << '\n';
  s << "balance.enabled=" << (balance_enabled ? "true" : "false") << '\n'
    << "balance.target=" << balance.target << '\n'
    << "balance.max_duplication_factor=" << balance.max_duplication_factor << '\n';
  s << "eval.grid_step=" << render(eval.grid_step) << '\n' << "eval.top_k=" << eval.top_k << '\n';
  s << "augment.weak_cutoff=" << render(augment.weak_cutoff) << '\n'
    << "augment.alignment_threshold=" << render(augment.alignment_threshold) << '\n';
  return s.str();
}

ArtifactHeader RunConfig::header(std::string kind) const {
  ArtifactHeader h;
  h.kind = std::move(kind);
  h.config_hash = hash();
  h.seed = seed;
  return h;
}

}  // namespace emotag
