#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scriptbmi/metrics.hpp"
#include "scriptbmi/model.hpp"
#include "scriptbmi/tensor.hpp"

namespace scriptbmi {

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 100;
  double learning_rate = 1e-4;
  int patience = 10;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Optional goal stop: end training once validation accuracy reaches this
  // level, keeping the weights of that epoch. Values above 1 disable it.
  double stop_at_val_accuracy = 2.0;
};

// Per-parameter Adam moments plus the shared step counter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState adam_init(const std::vector<Tensor*>& params, double learning_rate, double beta1 = 0.9,
                    double beta2 = 0.999, double epsilon = 1e-8);

// Standard bias-corrected update, in place.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
               AdamState& state);

// Stops once the running-best validation loss has gone `patience` consecutive
// epochs without a strict improvement. Epochs are 1-based.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);
  bool observe(double val_loss);  // true once training should stop
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int epochs_seen() const { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
};

struct EarlyStopDecision {
  bool stop = false;
  int best_epoch = 0;
};

EarlyStopDecision early_stop(std::span<const double> val_loss_history, int patience);

struct Sample {
  Tensor input;  // [C, H, W]
  int label = 0;
};

// Read-only sample source; sample(i) must be pure so batches can be
// assembled from any thread.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  virtual Sample sample(std::size_t index) const = 0;
};

class MemoryDataset final : public Dataset {
 public:
  MemoryDataset() = default;
  explicit MemoryDataset(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  void add(Sample s) { samples_.push_back(std::move(s)); }
  std::size_t size() const override { return samples_.size(); }
  Sample sample(std::size_t index) const override { return samples_.at(index); }

 private:
  std::vector<Sample> samples_;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  int best_epoch = 0;
  int stopped_epoch = 0;
  MetricsReport test_metrics;
  ConfusionMatrix test_confusion;
  double test_loss = 0.0;
  double wall_seconds = 0.0;

  // "epoch,train_loss,val_loss,val_acc", one row per trained epoch.
  void write_loss_csv(const std::filesystem::path& file) const;
  // Two-polyline chart of train and validation loss.
  void write_loss_svg(const std::filesystem::path& file) const;
  void write_metrics_csv(const std::filesystem::path& file) const;
};

struct EvalResult {
  double loss = 0.0;
  MetricsReport metrics;
  ConfusionMatrix cm;
};

// Dropout forced to eval mode; deterministic for a fixed model and split.
EvalResult evaluate(Model& model, const Dataset& data, int batch_size = 32);

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size);

// Full loop: seeded per-epoch shuffle, forward/backward/adam per batch,
// validation each epoch, early stopping, best-weights restore, then final
// test-split metrics. The optional callback sees each finished epoch.
using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss,
                                         double val_accuracy)>;
TrainReport train(Model& model, const Dataset& train_split, const Dataset& val_split,
                  const Dataset& test_split, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = nullptr);

}  // namespace scriptbmi
