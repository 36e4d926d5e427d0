#include "mcanet/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <spdlog/spdlog.h>

#include "mcanet/errors.hpp"

namespace mcanet {

namespace {

double safe_ratio(double num, double den, const char* what) {
  if (den == 0) {
    spdlog::warn("{} has a zero denominator; reporting 0", what);
    return 0;
  }
  return num / den;
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0; }

std::string fmt4(double v) { return fmt::format("{:.4f}", v); }

}  // namespace

std::vector<double> PredictionSet::score_column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = score(r, c);
  return out;
}

std::vector<std::uint8_t> PredictionSet::label_column(std::size_t c) const {
  std::vector<std::uint8_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = labels.at(r, c);
  return out;
}

void PredictionSet::validate() const {
  if (scores.size() != rows * cols) {
    throw DataError(fmt::format("score matrix holds {} values, expected {}x{}", scores.size(), rows, cols));
  }
  if (labels.rows != rows || labels.cols != cols) {
    throw DataError(fmt::format("label matrix is {}x{}, scores are {}x{}", labels.rows, labels.cols, rows, cols));
  }
  if (class_names.size() != cols) {
    throw DataError(fmt::format("{} class names for {} classes", class_names.size(), cols));
  }
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    if (labels.values[i] > 1) {
      throw DataError(fmt::format("label at row {} class {} is {}", i / cols, i % cols, labels.values[i]));
    }
  }
}

template <typename T>
PredictionSet make_prediction_set(const Tensor<T>& scores, const LabelMatrix& labels,
                                  std::vector<std::string> class_names) {
  if (scores.rank() != 2) throw DataError("scores must be [N,C], got " + dims_to_string(scores.dims()));
  PredictionSet p;
  p.rows = scores.dim(0);
  p.cols = scores.dim(1);
  p.scores.assign(scores.data().begin(), scores.data().end());
  p.labels = labels;
  p.class_names = std::move(class_names);
  p.validate();
  return p;
}

template PredictionSet make_prediction_set(const Tensor<float>&, const LabelMatrix&, std::vector<std::string>);
template PredictionSet make_prediction_set(const Tensor<double>&, const LabelMatrix&, std::vector<std::string>);

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DataError(fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

double mean_average_precision(const PredictionSet& pred) {
  pred.validate();
  double sum = 0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < pred.cols; ++c) {
    const auto s = pred.score_column(c);
    const auto l = pred.label_column(c);
    if (auto ap = average_precision(s, l)) {
      sum += *ap;
      ++defined;
    } else {
      spdlog::warn("class '{}' has no positives; excluded from mAP", pred.class_names[c]);
    }
  }
  if (defined == 0) throw DataError("no class has a positive label; mAP is undefined");
  return sum / static_cast<double>(defined);
}

OverallMetrics overall_metrics(const PredictionSet& pred, double threshold) {
  pred.validate();
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.scores.size(); ++i) {
    const bool predicted = pred.scores[i] >= threshold;
    const bool actual = pred.labels.values[i] == 1;
    tp += predicted && actual;
    fp += predicted && !actual;
    fn += !predicted && actual;
  }
  OverallMetrics m;
  m.precision = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp), "OP");
  m.recall = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn), "OR");
  m.f1 = harmonic(m.precision, m.recall);
  return m;
}

EvalReport per_class_report(const PredictionSet& pred, double threshold) {
  pred.validate();
  EvalReport report;
  for (std::size_t c = 0; c < pred.cols; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < pred.rows; ++r) {
      const bool predicted = pred.score(r, c) >= threshold;
      const bool actual = pred.labels.at(r, c) == 1;
      tp += predicted && actual;
      fp += predicted && !actual;
      fn += !predicted && actual;
    }
    ClassReport row;
    row.name = pred.class_names[c];
    row.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0;
    row.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0;
    row.f1 = harmonic(row.precision, row.recall);
    const auto s = pred.score_column(c);
    const auto l = pred.label_column(c);
    row.ap = average_precision(s, l);
    report.classes.push_back(std::move(row));
  }
  report.map = mean_average_precision(pred);
  report.overall = overall_metrics(pred, threshold);
  return report;
}

std::string EvalReport::to_table() const {
  std::size_t width = 5;
  for (const auto& c : classes) width = std::max(width, c.name.size());
  std::string out = fmt::format("{:<{}}  {:>9}  {:>9}  {:>9}  {:>9}\n", "class", width, "precision",
                                "recall", "f1", "ap");
  for (const auto& c : classes) {
    out += fmt::format("{:<{}}  {:>9.4f}  {:>9.4f}  {:>9.4f}  {:>9}\n", c.name, width, c.precision,
                       c.recall, c.f1, c.ap ? fmt4(*c.ap) : "n/a");
  }
  out += fmt::format("{:<{}}  {:>9}  {:>9}  {:>9}  {:>9.4f}\n", "mAP", width, "", "", "", map);
  out += fmt::format("{:<{}}  {:>9.4f}  {:>9.4f}  {:>9.4f}\n", "OP/OR/OF1", width, overall.precision,
                     overall.recall, overall.f1);
  return out;
}

std::string EvalReport::to_csv() const {
  std::string out = "class,precision,recall,f1,ap\n";
  for (const auto& c : classes) {
    out += fmt::format("{},{:.4f},{:.4f},{:.4f},{}\n", c.name, c.precision, c.recall, c.f1,
                       c.ap ? fmt4(*c.ap) : "");
  }
  out += fmt::format("mAP,,,,{:.4f}\n", map);
  out += fmt::format("OP/OR/OF1,{:.4f},{:.4f},{:.4f},\n", overall.precision, overall.recall, overall.f1);
  return out;
}

std::string render_head_sweep_table(std::span<const HeadSweepRow> rows) {
  std::string out = fmt::format("{:>5}  {:>7}\n", "heads", "mAP");
  for (const auto& r : rows) out += fmt::format("{:>5}  {:>7.4f}\n", r.heads, r.map);
  return out;
}

std::string render_head_sweep_csv(std::span<const HeadSweepRow> rows) {
  std::string out = "heads,map\n";
  for (const auto& r : rows) out += fmt::format("{},{:.4f}\n", r.heads, r.map);
  return out;
}

}  // namespace mcanet
