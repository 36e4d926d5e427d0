#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcanet/label_matrix.hpp"
#include "mcanet/tensor.hpp"

namespace mcanet {

// Scores are probabilities (sigmoid outputs), row-major [rows, cols].
struct PredictionSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;
  LabelMatrix labels;
  std::vector<std::string> class_names;

  double score(std::size_t r, std::size_t c) const { return scores[r * cols + c]; }
  std::vector<double> score_column(std::size_t c) const;
  std::vector<std::uint8_t> label_column(std::size_t c) const;

  // Throws DataError on dimension mismatch or non-binary labels.
  void validate() const;
};

template <typename T>
PredictionSet make_prediction_set(const Tensor<T>& scores, const LabelMatrix& labels,
                                  std::vector<std::string> class_names);

// Mean of precision@k over the ranks of the positives, with a stable
// descending sort (ties keep the original order). nullopt when there are no
// positives.
std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels);

// Unweighted mean of the defined per-class APs. Classes without positives are
// skipped with a warning; DataError when no class has a positive.
double mean_average_precision(const PredictionSet& pred);

struct OverallMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Micro-averaged over every (sample, class) pair; a prediction is positive
// when score >= threshold.
OverallMetrics overall_metrics(const PredictionSet& pred, double threshold = 0.5);

struct ClassReport {
  std::string name;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::optional<double> ap;
};

struct EvalReport {
  std::vector<ClassReport> classes;
  double map = 0;
  OverallMetrics overall;

  std::string to_table() const;
  std::string to_csv() const;
};

EvalReport per_class_report(const PredictionSet& pred, double threshold = 0.5);

// Rows of (head count, mAP) rendered as a table and as CSV "heads,map".
struct HeadSweepRow {
  std::size_t heads = 0;
  double map = 0;
};
std::string render_head_sweep_table(std::span<const HeadSweepRow> rows);
std::string render_head_sweep_csv(std::span<const HeadSweepRow> rows);

}  // namespace mcanet
