// SPDX-License-Identifier: Apache-2.0
#include "emotag/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "emotag/augment.hpp"
#include "emotag/embeddings.hpp"
#include "emotag/netcore/checkpoint.hpp"
#include "emotag/netcore/network.hpp"
#include "emotag/trainer.hpp"

namespace emotag {

namespace fs = std::filesystem;

namespace {

fs::path out(const RunConfig& cfg, const char* name) { return cfg.paths.output_dir / name; }

const fs::path& require_input(const fs::path& p, std::string_view key) {
  if (p.empty()) throw UsageError("missing config key '" + std::string(key) + "'");
  if (!fs::exists(p)) throw DataError("input file not found: " + p.string() + " (" + std::string(key) + ")");
  return p;
}

fs::path require_artifact(const RunConfig& cfg, const char* name, std::string_view producer) {
  fs::path p = out(cfg, name);
  if (!fs::exists(p))
    throw DataError("missing " + p.string() + "; run `emotag " + std::string(producer) + "` first");
  return p;
}

std::vector<Sample> normalized(std::vector<Sample> samples) {
  for (auto& s : samples) s.text = normalize_text(s.text);
  return samples;
}

struct Written {
  CommandResult& result;

  void operator()(const fs::path& p, std::string_view content) {
    write_file(p, content);
    result.written.push_back(p);
  }
  void record(const fs::path& p) { result.written.push_back(p); }
};

EmbeddingMatrix load_embeddings(const RunConfig& cfg, const TokenizerState& tok) {
  WordVectors vecs;
  if (!cfg.paths.embeddings.empty())
    vecs = load_vec(require_input(cfg.paths.embeddings, "paths.embeddings"), cfg.model.embed_dim);
  return build_matrix(vecs, tok, cfg.model.embed_dim, cfg.seed);
}

ModelParams<float> load_model(const RunConfig& cfg) {
  return load_checkpoint(require_artifact(cfg, artifact::kCheckpoint, "train"));
}

bool half(const RunConfig& cfg) { return cfg.training.precision == Precision::Mixed; }

std::string label_distribution_csv(const LabelVocabulary& vocab, const std::vector<EncodedDataset*>& splits) {
  std::string s = "label";
  for (const auto* d : splits) s += "," + std::string(to_string(d->split));
  s += '\n';
  std::vector<std::vector<std::int64_t>> counts;
  for (const auto* d : splits) counts.push_back(label_distribution(*d));
  for (int j = 0; j < vocab.size(); ++j) {
    s += vocab.name(j);
    for (const auto& c : counts) s += "," + std::to_string(c[static_cast<std::size_t>(j)]);
    s += '\n';
  }
  return s;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::vector<std::string> text_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

std::map<std::string, std::string> key_value_csv(const fs::path& path) {
  std::map<std::string, std::string> kv;
  const auto lines = data_lines(read_file(path));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() == 2) kv[f[0]] = f[1];
  }
  return kv;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 2;
}

// ---------------------------------------------------------------------------

CommandResult run_preprocess(const RunConfig& cfg) {
  CommandResult result;
  Written write{result};
  const auto vocab = cfg.vocabulary();

  SplitSamples raw;
  if (!cfg.paths.corpus.empty()) {
    raw = split_samples(load_dataset(require_input(cfg.paths.corpus, "paths.corpus"), vocab), cfg.seed);
  } else {
    raw.train = load_dataset(require_input(cfg.paths.train, "paths.train"), vocab);
    raw.val = load_dataset(require_input(cfg.paths.val, "paths.val"), vocab);
    raw.test = load_dataset(require_input(cfg.paths.test, "paths.test"), vocab);
  }
  const auto train = normalized(std::move(raw.train));
  const auto val = normalized(std::move(raw.val));
  const auto test = normalized(std::move(raw.test));

  const TokenizerState tok = fit_tokenizer(train);
  tok.save(out(cfg, artifact::kTokenizer), cfg.header("tokenizer").render());
  write.record(out(cfg, artifact::kTokenizer));

  save_dataset(out(cfg, artifact::kTrainSamples), train, cfg.header("samples").render());
  save_dataset(out(cfg, artifact::kValSamples), val, cfg.header("samples").render());
  save_dataset(out(cfg, artifact::kTestSamples), test, cfg.header("samples").render());
  for (const char* n : {artifact::kTrainSamples, artifact::kValSamples, artifact::kTestSamples})
    write.record(out(cfg, n));

  EncodedDataset etrain = encode(train, tok, vocab, Split::Train);
  EncodedDataset eval = encode(val, tok, vocab, Split::Val);
  EncodedDataset etest = encode(test, tok, vocab, Split::Test);
  etrain.save(out(cfg, artifact::kTrainEncoded), cfg.header("encoded").render());
  eval.save(out(cfg, artifact::kValEncoded), cfg.header("encoded").render());
  etest.save(out(cfg, artifact::kTestEncoded), cfg.header("encoded").render());
  for (const char* n : {artifact::kTrainEncoded, artifact::kValEncoded, artifact::kTestEncoded})
    write.record(out(cfg, n));

  write(out(cfg, artifact::kLabelDistribution),
        cfg.header("label_distribution").render() + label_distribution_csv(vocab, {&etrain, &eval, &etest}));

  std::string words = cfg.header("word_frequency").render() + "word,count\n";
  for (const auto& [w, n] : top_k_words(train, 50)) words += w + "," + std::to_string(n) + "\n";
  write(out(cfg, artifact::kWordFrequency), words);

  if (!cfg.paths.embeddings.empty()) {
    const auto emb = load_embeddings(cfg, tok);
    std::vector<std::vector<double>> vectors;
    for (const auto& name : vocab.names()) vectors.push_back(label_vector(name, emb, tok));
    write(out(cfg, artifact::kLabelSimilarity),
          cfg.header("label_similarity").render() + cosine_matrix_csv(cosine_similarity_matrix(vectors), vocab.names()));
  }

  std::ostringstream s;
  s << "preprocess: train=" << train.size() << " val=" << val.size() << " test=" << test.size()
    << " vocab_size=" << tok.vocab_size << '\n';
  result.summary = s.str();
  return result;
}

CommandResult run_balance(const RunConfig& cfg) {
  CommandResult result;
  Written write{result};
  const auto vocab = cfg.vocabulary();
  const TokenizerState tok = TokenizerState::load(require_artifact(cfg, artifact::kTokenizer, "preprocess"));
  std::vector<Sample> train = load_dataset(require_artifact(cfg, artifact::kTrainSamples, "preprocess"), vocab);
  const auto before = label_distribution(encode(train, tok, vocab, Split::Train));

  std::ostringstream s;
  if (!cfg.paths.weak_samples.empty()) {
    const auto weak = load_weak_csv(require_input(cfg.paths.weak_samples, "paths.weak_samples"), cfg.augment.weak_cutoff);
    std::map<std::size_t, std::vector<AnnotatorVote>> votes;
    if (!cfg.paths.votes.empty()) votes = load_votes_csv(require_input(cfg.paths.votes, "paths.votes"));
    auto merged = merge_weak_samples(weak, votes, cfg.augment.alignment_threshold);
    for (auto& sample : merged.accepted) sample.text = normalize_text(sample.text);
    s << "balance: weak samples accepted=" << merged.accepted.size()
      << " rejected_alignment=" << merged.rejected_alignment << " rejected_review=" << merged.rejected_review << '\n';
    train.insert(train.end(), merged.accepted.begin(), merged.accepted.end());
  }

  const std::vector<Sample> balanced =
      cfg.balance_enabled ? oversample_balance(train, Split::Train, cfg.balance) : train;
  save_dataset(out(cfg, artifact::kBalancedSamples), balanced, cfg.header("samples").render());
  write.record(out(cfg, artifact::kBalancedSamples));
  const EncodedDataset enc = encode(balanced, tok, vocab, Split::Train);
  enc.save(out(cfg, artifact::kBalancedEncoded), cfg.header("encoded").render());
  write.record(out(cfg, artifact::kBalancedEncoded));

  const auto after = label_distribution(enc);
  std::string summary = cfg.header("balance_summary").render() + "label,before,after\n";
  for (int j = 0; j < vocab.size(); ++j)
    summary += vocab.name(j) + "," + std::to_string(before[static_cast<std::size_t>(j)]) + "," +
               std::to_string(after[static_cast<std::size_t>(j)]) + "\n";
  write(out(cfg, artifact::kBalanceSummary), summary);

  s << "balance: rows " << train.size() << " -> " << balanced.size()
    << (cfg.balance_enabled ? "" : " (oversampling disabled)") << '\n';
  result.summary = s.str();
  return result;
}

CommandResult run_train(const RunConfig& cfg) {
  CommandResult result;
  Written write{result};
  const TokenizerState tok = TokenizerState::load(require_artifact(cfg, artifact::kTokenizer, "preprocess"));
  const bool balanced = fs::exists(out(cfg, artifact::kBalancedEncoded));
  const EncodedDataset train_ds = EncodedDataset::load(
      balanced ? out(cfg, artifact::kBalancedEncoded) : require_artifact(cfg, artifact::kTrainEncoded, "preprocess"));
  const EncodedDataset val_ds = EncodedDataset::load(require_artifact(cfg, artifact::kValEncoded, "preprocess"));

  const EmbeddingMatrix emb = load_embeddings(cfg, tok);
  ModelParams<float> init = init_params(cfg.model, emb.values, cfg.seed);

  const fs::path ckpt = out(cfg, artifact::kCheckpoint);
  TrainHooks hooks;
  hooks.on_improvement = [&](int, const ModelParams<float>& p) { save_checkpoint(p, ckpt); };
  hooks.on_epoch_end = [](int epoch, const ModelParams<float>&) { std::cerr << "epoch " << epoch << " done\n"; };
  const TrainResult r = train(std::move(init), train_ds, val_ds, cfg.training, hooks);

  save_checkpoint(r.best, ckpt);
  write.record(ckpt);
  write(out(cfg, artifact::kHistory), cfg.header("history").render() + r.history.csv(true));

  std::ostringstream s;
  s << "train: " << (balanced ? "balanced" : "unbalanced") << " split of " << train_ds.size() << " rows, "
    << (cfg.model.use_attention ? "attention" : "average pooling") << ", "
    << (half(cfg) ? "mixed" : "full") << " precision\n";
  for (const auto& e : r.history.epochs)
    s << "  epoch " << e.epoch << " train_loss=" << fixed4(e.train_loss) << " val_loss=" << fixed4(e.val_loss) << '\n';
  s << "train: best epoch " << r.history.best_epoch << " of " << r.history.stopped_epoch;
  if (half(cfg)) s << ", final loss scale " << r.final_loss_scale << ", skipped steps " << r.skipped_steps;
  s << '\n';
  result.summary = s.str();
  return result;
}

CommandResult run_tune_thresholds(const RunConfig& cfg) {
  CommandResult result;
  Written write{result};
  const auto vocab = cfg.vocabulary();
  const auto params = load_model(cfg);
  const auto val = EncodedDataset::load(require_artifact(cfg, artifact::kValEncoded, "preprocess"));
  const Mat<double> probs = predict(params, val.sequences, 256, half(cfg));
  const ThresholdVector tau = tune_thresholds(probs, val.labels, cfg.threshold_grid());
  write(out(cfg, artifact::kValPredictions), cfg.header("predictions").render() + predictions_csv(probs));
  write(out(cfg, artifact::kThresholds), cfg.header("thresholds").render() + thresholds_csv(tau, vocab));
  result.summary = "tune-thresholds: " + std::to_string(tau.size()) + " thresholds from " +
                   std::to_string(val.size()) + " validation rows\n";
  return result;
}

CommandResult run_evaluate(const RunConfig& cfg, const EvaluateOptions& opt) {
  CommandResult result;
  Written write{result};
  const auto vocab = cfg.vocabulary();
  const auto test = EncodedDataset::load(require_artifact(cfg, artifact::kTestEncoded, "preprocess"));

  Mat<double> probs;
  if (opt.predictions) {
    if (!fs::exists(*opt.predictions)) throw DataError("predictions file not found: " + opt.predictions->string());
    probs = parse_predictions_csv(read_file(*opt.predictions)).probs;
    if (probs.rows() != test.size() || probs.cols() != vocab.size())
      throw DataError("predictions are " + std::to_string(probs.rows()) + "x" + std::to_string(probs.cols()) +
                      ", test split is " + std::to_string(test.size()) + "x" + std::to_string(vocab.size()));
  } else {
    probs = predict(load_model(cfg), test.sequences, 256, half(cfg));
    write(out(cfg, artifact::kTestPredictions), cfg.header("predictions").render() + predictions_csv(probs));
  }

  ThresholdVector tau;
  if (opt.threshold) {
    if (!(*opt.threshold > 0.0 && *opt.threshold < 1.0)) throw UsageError("--threshold must be in (0,1)");
    tau.assign(static_cast<std::size_t>(vocab.size()), *opt.threshold);
  } else {
    tau = parse_thresholds_csv(read_file(require_artifact(cfg, artifact::kThresholds, "tune-thresholds")), vocab);
  }

  const MetricsReport report = evaluate_all(probs, test.labels, tau, vocab);
  write(out(cfg, artifact::kMetrics), cfg.header("metrics").render() + aggregate_csv(report));
  write(out(cfg, artifact::kPerLabel), cfg.header("per_label").render() + per_label_csv(report.per_label));
  if (opt.svg) write(*opt.svg, f1_bar_chart_svg(report.per_label, cfg.header("f1_chart"), "Per-label F1"));

  std::ostringstream s;
  s << "evaluate: " << test.size() << " test rows, "
    << (opt.threshold ? "fixed threshold " + format_g9(*opt.threshold) : std::string("tuned thresholds")) << '\n'
    << "  subset_accuracy=" << fixed4(report.subset_accuracy) << " jaccard=" << fixed4(report.jaccard)
    << " hamming_loss=" << fixed4(report.hamming_loss) << '\n'
    << "  micro_f1=" << fixed4(report.micro.f1) << " macro_f1=" << fixed4(report.macro.f1)
    << " macro_auc=" << fixed4(report.macro_auc.value) << '\n';
  result.summary = s.str();
  return result;
}

CommandResult run_predict(const RunConfig& cfg, const PredictOptions& opt) {
  CommandResult result;
  Written write{result};
  const auto vocab = cfg.vocabulary();
  if (opt.input.empty()) throw UsageError("predict needs --input");
  if (!fs::exists(opt.input)) throw DataError("input file not found: " + opt.input.string());
  const TokenizerState tok = TokenizerState::load(require_artifact(cfg, artifact::kTokenizer, "preprocess"));
  const auto params = load_model(cfg);

  const auto sentences = text_lines(opt.input);
  IdMatrix ids(static_cast<Eigen::Index>(sentences.size()), kSeqLen);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto row = encode_text(normalize_text(sentences[i]), tok);
    for (int t = 0; t < kSeqLen; ++t) ids(static_cast<Eigen::Index>(i), t) = row[static_cast<std::size_t>(t)];
  }
  const Mat<double> probs = predict(params, ids, 256, half(cfg));

  ThresholdVector tau;
  std::string tau_source;
  if (opt.threshold) {
    tau.assign(static_cast<std::size_t>(vocab.size()), *opt.threshold);
    tau_source = "fixed threshold " + format_g9(*opt.threshold);
  } else if (fs::exists(out(cfg, artifact::kThresholds))) {
    tau = parse_thresholds_csv(read_file(out(cfg, artifact::kThresholds)), vocab);
    tau_source = "tuned thresholds";
  } else {
    tau.assign(static_cast<std::size_t>(vocab.size()), 0.5);
    tau_source = "default threshold 0.5";
  }

  static const char* kRankNames[] = {"primary", "secondary", "tertiary", "quaternary"};
  const auto k = static_cast<std::size_t>(cfg.eval.top_k);
  std::string tsv = cfg.header("ranked_predictions").render() + "sentence";
  for (std::size_t r = 0; r < k; ++r) tsv += '\t' + (r < 4 ? std::string(kRankNames[r]) : "rank" + std::to_string(r + 1));
  tsv += "\tbelow_threshold\n";
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(probs.cols()));
    for (Eigen::Index j = 0; j < probs.cols(); ++j) row[static_cast<std::size_t>(j)] = probs(static_cast<Eigen::Index>(i), j);
    const auto ranked = rank_sentence_labels(row, tau, k);
    std::string sentence = sentences[i];
    std::replace(sentence.begin(), sentence.end(), '\t', ' ');
    tsv += sentence;
    for (std::size_t r = 0; r < k; ++r) {
      tsv += '\t';
      if (r < ranked.labels.size())
        tsv += vocab.name(ranked.labels[r].first) + ": " + fixed2(ranked.labels[r].second);
    }
    tsv += ranked.below_threshold ? "\tyes\n" : "\tno\n";
  }
  write(opt.output ? *opt.output : out(cfg, artifact::kRanked), tsv);
  if (opt.probabilities) write(*opt.probabilities, cfg.header("predictions").render() + predictions_csv(probs));

  result.summary = "predict: " + std::to_string(sentences.size()) + " sentences, " + tau_source + "\n";
  return result;
}

CommandResult run_report(const RunConfig& cfg) {
  CommandResult result;
  Written write{result};
  std::ostringstream md;
  md << cfg.header("report").render() << '\n';
  md << "## Run\n\n"
     << "- seed: " << cfg.seed << '\n'
     << "- config hash: " << cfg.hash() << '\n'
     << "- pooling: " << (cfg.model.use_attention ? "attention" : "temporal average") << '\n'
     << "- precision: " << (half(cfg) ? "mixed" : "full") << "\n\n";

  bool any = false;
  if (fs::exists(out(cfg, artifact::kCheckpoint))) {
    any = true;
    const auto counts = count_params(load_model(cfg));
    md << "## Model\n\n| layer | parameters |\n|---|---|\n";
    for (const auto& [name, n] : counts.per_layer) md << "| " << name << " | " << n << " |\n";
    md << "\n- total: " << counts.total << "\n- trainable: " << counts.trainable
       << "\n- non-trainable: " << counts.frozen << "\n\n";
  }
  if (fs::exists(out(cfg, artifact::kHistory))) {
    any = true;
    const auto lines = data_lines(read_file(out(cfg, artifact::kHistory)));
    int best_epoch = 0;
    double best = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split(lines[i], ',');
      if (f.size() < 3) throw DataError("malformed history line " + std::to_string(i + 1));
      const double v = parse_double(f[2], "val_loss");
      if (best_epoch == 0 || v < best) best = v, best_epoch = static_cast<int>(parse_int(f[0], "epoch"));
    }
    md << "## Training\n\n- epochs run: " << (lines.empty() ? 0 : lines.size() - 1) << "\n- best epoch: " << best_epoch
       << "\n- best validation loss: " << fixed4(best) << "\n\n";
  }
  if (fs::exists(out(cfg, artifact::kMetrics))) {
    any = true;
    md << "## Test metrics\n\n| metric | value |\n|---|---|\n";
    for (const auto& [k, v] : key_value_csv(out(cfg, artifact::kMetrics))) md << "| " << k << " | " << v << " |\n";
    md << '\n';
  }
  if (fs::exists(out(cfg, artifact::kPerLabel))) {
    any = true;
    const auto lines = data_lines(read_file(out(cfg, artifact::kPerLabel)));
    md << "## Per-label results\n\n";
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto f = split(lines[i], ',');
      md << '|';
      for (const auto& cell : f) md << ' ' << cell << " |";
      md << '\n';
      if (i == 0) {
        md << '|';
        for (std::size_t c = 0; c < f.size(); ++c) md << "---|";
        md << '\n';
      }
    }
    md << '\n';
  }
  if (!any) throw DataError("nothing to report in " + cfg.paths.output_dir.string() + "; run `emotag train` first");
  write(out(cfg, artifact::kReport), md.str());
  result.summary = md.str();
  return result;
}

}  // namespace emotag
