#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scriptbmi/tensor.hpp"

namespace scriptbmi {

// True-class rows, predicted-class columns.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes);

  void add(std::size_t truth, std::size_t predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;
  std::size_t num_classes() const { return k_; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;     // class support
  std::uint64_t col_sum(std::size_t predicted) const;
  std::uint64_t diagonal_sum() const;

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision_weighted = 0.0;
  double recall_weighted = 0.0;
  double f1_weighted = 0.0;
  std::vector<double> precision_per_class;
  std::vector<double> recall_per_class;
  std::vector<double> f1_per_class;

  // Percentages with two decimals: "accuracy,precision,recall,f1".
  std::string csv_row() const;
  static std::string csv_header();
};

// Mean over the batch of -ln(probs[i, label_i]); probabilities are clamped
// below at 1e-12 before the log, so the value is reproducible bit for bit.
double cross_entropy(const Tensor& probs, std::span<const int> labels);

// Gradient of cross_entropy(softmax(logits)) w.r.t. logits: (p - onehot)/B.
Tensor softmax_ce_backward(const Tensor& probs, std::span<const int> labels);

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels,
                          std::size_t num_classes);

// Support-weighted precision/recall/F1; classes with a zero denominator
// score 0 for that metric. Weighted recall equals accuracy identically.
MetricsReport weighted_metrics(const ConfusionMatrix& cm);

}  // namespace scriptbmi
