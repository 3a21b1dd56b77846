// SPDX-License-Identifier: Apache-2.0
#include "emotag/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>

#include "emotag/artifact_io.hpp"

namespace emotag {

namespace {

using Eigen::Index;
// Averages of per-row or per-label fractions are accumulated exactly and
// rounded once.
using Rational = boost::multiprecision::cpp_rational;

double to_double(const Rational& r) { return static_cast<double>(r); }

void require_same_shape(const LabelMatrix& y, const LabelMatrix& p) {
  if (y.rows() != p.rows() || y.cols() != p.cols())
    throw DataError("truth " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()) +
                    " vs prediction " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()));
}

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  PRF prf() const {
    return {ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn)};
  }
};

Counts column_counts(const LabelMatrix& y, const LabelMatrix& p, Index j) {
  Counts c;
  for (Index i = 0; i < y.rows(); ++i) {
    const bool t = y(i, j) != 0, q = p(i, j) != 0;
    c.tp += t && q;
    c.fp += !t && q;
    c.fn += t && !q;
    c.tn += !t && !q;
  }
  return c;
}

}  // namespace

void PredictionMatrix::validate() const {
  for (Index i = 0; i < probs.size(); ++i) {
    const double v = probs.data()[i];
    if (!(v >= 0.0 && v <= 1.0))
      throw DataError("prediction entry outside [0,1] at row " + std::to_string(i / probs.cols()));
  }
}

LabelMatrix binarize(const Mat<double>& probs, const ThresholdVector& tau) {
  if (static_cast<Index>(tau.size()) != probs.cols())
    throw DataError("threshold vector has " + std::to_string(tau.size()) + " entries for " +
                    std::to_string(probs.cols()) + " labels");
  LabelMatrix out(probs.rows(), probs.cols());
  for (Index i = 0; i < probs.rows(); ++i)
    for (Index j = 0; j < probs.cols(); ++j) out(i, j) = probs(i, j) >= tau[static_cast<std::size_t>(j)];
  return out;
}

LabelMatrix binarize(const Mat<double>& probs, double tau) {
  return binarize(probs, ThresholdVector(static_cast<std::size_t>(probs.cols()), tau));
}

double subset_accuracy(const LabelMatrix& y, const LabelMatrix& p) {
  require_same_shape(y, p);
  std::int64_t exact = 0;
  for (Index i = 0; i < y.rows(); ++i) exact += (y.row(i) == p.row(i));
  return ratio(exact, y.rows());
}

double jaccard(const LabelMatrix& y, const LabelMatrix& p) {
  require_same_shape(y, p);
  if (y.rows() == 0) return 0.0;
  Rational total = 0;
  for (Index i = 0; i < y.rows(); ++i) {
    std::int64_t inter = 0, uni = 0;
    for (Index j = 0; j < y.cols(); ++j) {
      inter += y(i, j) && p(i, j);
      uni += y(i, j) || p(i, j);
    }
    total += uni == 0 ? Rational(1) : Rational(inter, uni);
  }
  return to_double(total / y.rows());
}

double hamming_loss(const LabelMatrix& y, const LabelMatrix& p) {
  require_same_shape(y, p);
  std::int64_t wrong = 0;
  for (Index i = 0; i < y.size(); ++i) wrong += (y.data()[i] != 0) != (p.data()[i] != 0);
  return ratio(wrong, y.size());
}

PRF micro_prf(const LabelMatrix& y, const LabelMatrix& p) {
  require_same_shape(y, p);
  Counts total;
  for (Index j = 0; j < y.cols(); ++j) {
    const Counts c = column_counts(y, p, j);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return total.prf();
}

PRF macro_prf(const LabelMatrix& y, const LabelMatrix& p) {
  require_same_shape(y, p);
  if (y.cols() == 0) return {};
  auto frac = [](std::int64_t num, std::int64_t den) { return den == 0 ? Rational(0) : Rational(num, den); };
  Rational prec = 0, rec = 0, f1 = 0;
  for (Index j = 0; j < y.cols(); ++j) {
    const Counts c = column_counts(y, p, j);
    prec += frac(c.tp, c.tp + c.fp);
    rec += frac(c.tp, c.tp + c.fn);
    f1 += frac(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  }
  const auto n = static_cast<std::int64_t>(y.cols());
  return {to_double(prec / n), to_double(rec / n), to_double(f1 / n)};
}

std::optional<double> auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth) {
  if (scores.size() != truth.size()) throw DataError("auc: scores and truth differ in length");
  const std::size_t n = scores.size();
  std::int64_t n_pos = 0;
  for (auto t : truth) n_pos += t != 0;
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 2*rank over positives keeps tied average ranks integral.
  std::int64_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const auto twice_avg = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (truth[idx[k]]) twice_rank_sum += twice_avg;
    i = j + 1;
  }
  const double u = static_cast<double>(twice_rank_sum - n_pos * (n_pos + 1)) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MacroAuc macro_auc(const Mat<double>& probs, const LabelMatrix& y) {
  if (probs.rows() != y.rows() || probs.cols() != y.cols())
    throw DataError("macro_auc: probabilities and truth differ in shape");
  MacroAuc out;
  double sum = 0.0;
  std::vector<double> s(static_cast<std::size_t>(y.rows()));
  std::vector<std::uint8_t> t(static_cast<std::size_t>(y.rows()));
  for (Index j = 0; j < y.cols(); ++j) {
    for (Index i = 0; i < y.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = probs(i, j);
      t[static_cast<std::size_t>(i)] = y(i, j);
    }
    if (auto a = auc(s, t)) {
      sum += *a;
      ++out.defined;
    } else {
      ++out.undefined;
    }
  }
  out.value = out.defined ? sum / out.defined : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 19; ++k) g.push_back(k / 20.0);
  return g;
}

ThresholdVector tune_thresholds(const Mat<double>& val_probs, const LabelMatrix& val_y,
                                std::vector<double> grid) {
  if (grid.empty()) throw UsageError("empty threshold grid");
  if (val_probs.rows() != val_y.rows() || val_probs.cols() != val_y.cols())
    throw DataError("tune_thresholds: probabilities and truth differ in shape");
  std::sort(grid.begin(), grid.end());
  ThresholdVector tau(static_cast<std::size_t>(val_y.cols()));
  for (Index j = 0; j < val_y.cols(); ++j) {
    // F1 = 2tp / (2tp + fp + fn), compared as exact fractions.
    std::int64_t best_num = -1, best_den = 1;
    double best_tau = grid.front();
    for (double g : grid) {
      std::int64_t tp = 0, fp = 0, fn = 0;
      for (Index i = 0; i < val_y.rows(); ++i) {
        const bool t = val_y(i, j) != 0, q = val_probs(i, j) >= g;
        tp += t && q;
        fp += !t && q;
        fn += t && !q;
      }
      std::int64_t num = 2 * tp, den = 2 * tp + fp + fn;
      if (den == 0) num = 0, den = 1;
      if (best_num < 0 || num * best_den > best_num * den) {
        best_num = num;
        best_den = den;
        best_tau = g;
      }
    }
    tau[static_cast<std::size_t>(j)] = best_tau;
  }
  return tau;
}

std::vector<LabelReportRow> per_label_report(const Mat<double>& probs, const LabelMatrix& y,
                                             const ThresholdVector& tau, const LabelVocabulary& vocab) {
  const LabelMatrix p = binarize(probs, tau);
  require_same_shape(y, p);
  std::vector<LabelReportRow> rows;
  std::vector<double> s(static_cast<std::size_t>(y.rows()));
  std::vector<std::uint8_t> t(static_cast<std::size_t>(y.rows()));
  for (Index j = 0; j < y.cols(); ++j) {
    const Counts c = column_counts(y, p, j);
    const PRF prf = c.prf();
    for (Index i = 0; i < y.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = probs(i, j);
      t[static_cast<std::size_t>(i)] = y(i, j);
    }
    LabelReportRow row;
    row.label = vocab.name(static_cast<int>(j));
    row.accuracy = ratio(c.tp + c.tn, y.rows());
    row.precision = prf.precision;
    row.recall = prf.recall;
    row.f1 = prf.f1;
    row.auc = auc(s, t);
    row.support = c.tp + c.fn;
    row.threshold = tau[static_cast<std::size_t>(j)];
    rows.push_back(std::move(row));
  }
  return rows;
}

MetricsReport evaluate_all(const Mat<double>& probs, const LabelMatrix& y, const ThresholdVector& tau,
                           const LabelVocabulary& vocab) {
  const LabelMatrix p = binarize(probs, tau);
  MetricsReport r;
  r.subset_accuracy = subset_accuracy(y, p);
  r.jaccard = jaccard(y, p);
  r.hamming_loss = hamming_loss(y, p);
  r.micro = micro_prf(y, p);
  r.macro = macro_prf(y, p);
  r.macro_auc = macro_auc(probs, y);
  r.per_label = per_label_report(probs, y, tau, vocab);
  return r;
}

RankedLabels rank_sentence_labels(const std::vector<double>& probs_row, const ThresholdVector& tau,
                                  std::size_t k) {
  if (probs_row.size() != tau.size())
    throw DataError("rank_sentence_labels: probability row and thresholds differ in length");
  if (probs_row.empty()) return {};
  RankedLabels out;
  for (std::size_t j = 0; j < probs_row.size(); ++j)
    if (probs_row[j] >= tau[j]) out.labels.emplace_back(static_cast<int>(j), probs_row[j]);
  std::stable_sort(out.labels.begin(), out.labels.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (out.labels.size() > k) out.labels.resize(k);
  if (out.labels.empty()) {
    const auto top = static_cast<std::size_t>(
        std::max_element(probs_row.begin(), probs_row.end()) - probs_row.begin());
    out.labels.emplace_back(static_cast<int>(top), probs_row[top]);
    out.below_threshold = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV surfaces

std::string predictions_csv(const Mat<double>& probs, int num_labels) {
  std::string out = "id";
  for (int j = 0; j < num_labels; ++j) out += ",p" + std::to_string(j);
  out += '\n';
  for (Index i = 0; i < probs.rows(); ++i) {
    out += std::to_string(i);
    for (Index j = 0; j < probs.cols(); ++j) out += ',' + format_g9(probs(i, j));
    out += '\n';
  }
  return out;
}

PredictionMatrix parse_predictions_csv(std::string_view content, Split source) {
  const auto lines = data_lines(content);
  if (lines.empty() || !lines[0].starts_with("id,")) throw DataError("predictions CSV missing header");
  const auto header = split(lines[0], ',');
  const auto cols = static_cast<Index>(header.size() - 1);
  PredictionMatrix pm;
  pm.source = source;
  pm.probs.resize(static_cast<Index>(lines.size() - 1), cols);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (static_cast<Index>(f.size()) != cols + 1)
      throw DataError("predictions CSV row has wrong arity at line " + std::to_string(i + 1));
    for (Index j = 0; j < cols; ++j)
      pm.probs(static_cast<Index>(i - 1), j) = parse_double(f[static_cast<std::size_t>(j + 1)], "probability");
  }
  pm.validate();
  return pm;
}

std::string thresholds_csv(const ThresholdVector& tau, const LabelVocabulary& vocab) {
  std::string out = "label,tau\n";
  for (std::size_t j = 0; j < tau.size(); ++j)
    out += vocab.name(static_cast<int>(j)) + ',' + format_g9(tau[j]) + '\n';
  return out;
}

ThresholdVector parse_thresholds_csv(std::string_view content, const LabelVocabulary& vocab) {
  const auto lines = data_lines(content);
  ThresholdVector tau(static_cast<std::size_t>(vocab.size()), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0 && lines[i] == "label,tau") continue;
    const auto f = split(lines[i], ',');
    if (f.size() != 2) throw DataError("thresholds CSV malformed at line " + std::to_string(i + 1));
    const double t = parse_double(f[1], "threshold");
    if (!(t > 0.0 && t < 1.0)) throw DataError("threshold outside (0,1) at line " + std::to_string(i + 1));
    tau[static_cast<std::size_t>(vocab.index_of(f[0]))] = t;
  }
  for (std::size_t j = 0; j < tau.size(); ++j)
    if (std::isnan(tau[j])) throw DataError("thresholds CSV lacks label '" + vocab.name(static_cast<int>(j)) + "'");
  return tau;
}

std::string aggregate_csv(const MetricsReport& r) {
  std::string out = "metric,value\n";
  auto row = [&out](std::string_view name, double v) { out += std::string(name) + ',' + format_g9(v) + '\n'; };
  row("subset_accuracy", r.subset_accuracy);
  row("jaccard", r.jaccard);
  row("hamming_loss", r.hamming_loss);
  row("micro_precision", r.micro.precision);
  row("micro_recall", r.micro.recall);
  row("micro_f1", r.micro.f1);
  row("macro_precision", r.macro.precision);
  row("macro_recall", r.macro.recall);
  row("macro_f1", r.macro.f1);
  row("macro_auc", r.macro_auc.value);
  row("macro_auc_labels_defined", r.macro_auc.defined);
  row("macro_auc_labels_undefined", r.macro_auc.undefined);
  return out;
}

std::string per_label_csv(const std::vector<LabelReportRow>& rows) {
  std::string out = "emotion,accuracy,precision,recall,f1_score,auc,support,threshold\n";
  for (const auto& r : rows) {
    out += r.label + ',' + format_g9(r.accuracy) + ',' + format_g9(r.precision) + ',' +
           format_g9(r.recall) + ',' + format_g9(r.f1) + ',' + (r.auc ? format_g9(*r.auc) : "nan") + ',' +
           std::to_string(r.support) + ',' + format_g9(r.threshold) + '\n';
  }
  return out;
}

}  // namespace emotag
