#include "scriptbmi/metrics.hpp"

#include <cmath>
#include <cstdio>

namespace scriptbmi {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes) {
  if (k_ == 0) {
    throw RangeError("confusion matrix needs at least one class");
  }
  counts_.assign(k_ * k_, 0);
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= k_ || predicted >= k_) {
    throw RangeError("confusion index out of range for " + std::to_string(k_) + " classes");
  }
  ++counts_[truth * k_ + predicted];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  return counts_.at(truth * k_ + predicted);
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t t = 0;
  for (std::size_t p = 0; p < k_; ++p) t += counts_[truth * k_ + p];
  return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::uint64_t t = 0;
  for (std::size_t r = 0; r < k_; ++r) t += counts_[r * k_ + predicted];
  return t;
}

std::uint64_t ConfusionMatrix::diagonal_sum() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < k_; ++i) t += counts_[i * k_ + i];
  return t;
}

std::string MetricsReport::csv_header() { return "accuracy,precision,recall,f1"; }

std::string MetricsReport::csv_row() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.2f", accuracy * 100.0,
                precision_weighted * 100.0, recall_weighted * 100.0, f1_weighted * 100.0);
  return buf;
}

double cross_entropy(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2) {
    throw ShapeError("cross_entropy expects probs [B,K], got " + shape_to_string(probs.shape()));
  }
  const std::size_t batch = probs.extent(0), k = probs.extent(1);
  if (labels.size() != batch) {
    throw ShapeError("cross_entropy got " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw RangeError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(k) + " classes");
    }
    const double p = std::max(probs[b * k + static_cast<std::size_t>(label)], 1e-12);
    total -= std::log(p);
  }
  return total / static_cast<double>(batch);
}

Tensor softmax_ce_backward(const Tensor& probs, std::span<const int> labels) {
  if (probs.rank() != 2) {
    throw ShapeError("softmax_ce_backward expects probs [B,K]");
  }
  const std::size_t batch = probs.extent(0), k = probs.extent(1);
  if (labels.size() != batch) {
    throw ShapeError("softmax_ce_backward label count does not match batch");
  }
  Tensor grad = probs;
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw RangeError("label " + std::to_string(label) + " out of range");
    }
    grad[b * k + static_cast<std::size_t>(label)] -= 1.0;
    for (std::size_t j = 0; j < k; ++j) grad[b * k + j] *= inv_b;
  }
  return grad;
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels,
                          std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw RangeError("confusion needs equal-length predictions and labels");
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || predictions[i] < 0) {
      throw RangeError("confusion indices must be non-negative");
    }
    cm.add(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(predictions[i]));
  }
  return cm;
}

MetricsReport weighted_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  const std::uint64_t total = cm.total();
  if (k == 0 || total == 0) {
    throw RangeError("weighted_metrics needs at least one evaluated sample");
  }
  MetricsReport rep;
  rep.precision_per_class.resize(k, 0.0);
  rep.recall_per_class.resize(k, 0.0);
  rep.f1_per_class.resize(k, 0.0);

  rep.accuracy = static_cast<double>(cm.diagonal_sum()) / static_cast<double>(total);

  double wp = 0.0, wr = 0.0, wf = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double support = static_cast<double>(cm.row_sum(c));
    const double predicted = static_cast<double>(cm.col_sum(c));
    const double precision = predicted > 0.0 ? tp / predicted : 0.0;
    const double recall = support > 0.0 ? tp / support : 0.0;
    const double f1 =
        (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    rep.precision_per_class[c] = precision;
    rep.recall_per_class[c] = recall;
    rep.f1_per_class[c] = f1;
    wp += support * precision;
    wr += support * recall;
    wf += support * f1;
  }
  const double n = static_cast<double>(total);
  rep.precision_weighted = wp / n;
  rep.recall_weighted = wr / n;
  rep.f1_weighted = wf / n;
  return rep;
}

}  // namespace scriptbmi
