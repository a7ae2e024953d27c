#include "scriptbmi/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "scriptbmi/parallel.hpp"
#include "scriptbmi/rng.hpp"

namespace scriptbmi {

AdamState adam_init(const std::vector<Tensor*>& params, double learning_rate, double beta1,
                    double beta2, double epsilon) {
  AdamState state;
  state.learning_rate = learning_rate;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.epsilon = epsilon;
  for (const Tensor* p : params) {
    state.m.emplace_back(p->shape());
    state.v.emplace_back(p->shape());
  }
  return state;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ShapeError("adam_step got mismatched parameter/gradient/state counts");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    if (!p.same_shape(g) || !p.same_shape(state.m[i])) {
      throw ShapeError("adam_step tensor " + std::to_string(i) + " shape mismatch");
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const double lr = state.learning_rate;
    const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
    double* pp = p.data();
    const double* pg = g.data();
    double* pm = m.data();
    double* pv = v.data();
    const std::size_t n = p.size();
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t j = lo; j < hi; ++j) {
        pm[j] = b1 * pm[j] + (1.0 - b1) * pg[j];
        pv[j] = b2 * pv[j] + (1.0 - b2) * pg[j] * pg[j];
        const double m_hat = pm[j] / bc1;
        const double v_hat = pv[j] / bc2;
        pp[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    });
  }
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) {
    throw RangeError("early-stop patience must be >= 1");
  }
}

bool EarlyStopper::observe(double val_loss) {
  ++epoch_;
  if (best_epoch_ == 0 || val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    return false;
  }
  return epoch_ - best_epoch_ >= patience_;
}

EarlyStopDecision early_stop(std::span<const double> val_loss_history, int patience) {
  EarlyStopper stopper(patience);
  EarlyStopDecision decision;
  for (double loss : val_loss_history) {
    decision.stop = stopper.observe(loss);
    if (decision.stop) break;
  }
  decision.best_epoch = stopper.best_epoch();
  return decision;
}

namespace {

std::string format_metric(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// Stacks dataset samples into one [B,C,H,W] batch tensor.
Tensor assemble_batch(const Dataset& data, std::span<const std::size_t> order, std::size_t begin,
                      std::size_t end, std::vector<int>& labels) {
  const Sample first = data.sample(order[begin]);
  if (first.input.rank() != 3) {
    throw ShapeError("dataset samples must be [C,H,W], got " +
                     shape_to_string(first.input.shape()));
  }
  const std::size_t batch = end - begin;
  const std::size_t c = first.input.extent(0), h = first.input.extent(1),
                    w = first.input.extent(2);
  Tensor x({batch, c, h, w});
  labels.assign(batch, 0);
  const std::size_t item = c * h * w;
  std::copy(first.input.data(), first.input.data() + item, x.data());
  labels[0] = first.label;
  for (std::size_t i = 1; i < batch; ++i) {
    const Sample s = data.sample(order[begin + i]);
    if (!s.input.same_shape(first.input)) {
      throw ShapeError("dataset sample shapes differ within one batch");
    }
    std::copy(s.input.data(), s.input.data() + item, x.data() + i * item);
    labels[i] = s.label;
  }
  return x;
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  return order;
}

}  // namespace

std::size_t steps_per_epoch(std::size_t train_size, std::size_t batch_size) {
  return (train_size + batch_size - 1) / batch_size;
}

EvalResult evaluate(Model& model, const Dataset& data, int batch_size) {
  const std::size_t n = data.size();
  if (n == 0) {
    throw DataError("evaluate called on an empty split");
  }
  const std::size_t bs = static_cast<std::size_t>(std::max(1, batch_size));
  const auto order = identity_order(n);
  std::vector<int> labels;
  std::vector<int> all_labels, all_preds;
  all_labels.reserve(n);
  all_preds.reserve(n);
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < n; begin += bs) {
    const std::size_t end = std::min(n, begin + bs);
    Tensor x = assemble_batch(data, order, begin, end, labels);
    Tensor probs = model.forward(x, nn::Mode::Eval);
    loss_sum += cross_entropy(probs, labels) * static_cast<double>(end - begin);
    const std::size_t k = probs.extent(1);
    for (std::size_t b = 0; b < end - begin; ++b) {
      const double* row = probs.data() + b * k;
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (row[j] > row[best]) best = j;
      }
      all_preds.push_back(static_cast<int>(best));
      all_labels.push_back(labels[b]);
    }
  }
  EvalResult result;
  result.loss = loss_sum / static_cast<double>(n);
  result.cm = confusion(all_preds, all_labels, model.num_classes());
  result.metrics = weighted_metrics(result.cm);
  return result;
}

TrainReport train(Model& model, const Dataset& train_split, const Dataset& val_split,
                  const Dataset& test_split, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (train_split.size() == 0) {
    throw DataError("train split is empty");
  }
  if (val_split.size() == 0 || test_split.size() == 0) {
    throw DataError("validation and test splits must be non-empty");
  }
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1) {
    throw RangeError("batch_size, max_epochs and patience must all be >= 1");
  }

  const auto t_start = std::chrono::steady_clock::now();
  auto params = model.parameters();
  auto grads = model.gradients();
  AdamState adam = adam_init(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  RngStream shuffle_base(cfg.seed, "shuffle");
  RngStream dropout_stream(cfg.seed, "dropout");
  EarlyStopper stopper(cfg.patience);

  TrainReport report;
  std::vector<Tensor> best_params = model.snapshot_parameters();
  double best_val_loss = 0.0;
  bool have_best = false;
  int goal_epoch = 0;

  const std::size_t n = train_split.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<int> labels;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    RngStream epoch_stream = shuffle_base.derive(static_cast<std::uint64_t>(epoch));
    const std::vector<std::size_t> order = shuffled_indices(n, epoch_stream);

    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t begin = 0; begin < n; begin += bs, ++step) {
      const std::size_t end = std::min(n, begin + bs);
      Tensor x = assemble_batch(train_split, order, begin, end, labels);
      Tensor probs = model.forward(x, nn::Mode::Train, &dropout_stream);
      const double loss = cross_entropy(probs, labels);
      if (!std::isfinite(loss)) {
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step + 1));
      }
      loss_sum += loss * static_cast<double>(end - begin);
      model.backward(probs, labels);
      adam_step(params, grads, adam);
    }
    const double train_loss = loss_sum / static_cast<double>(n);

    const EvalResult val = evaluate(model, val_split, cfg.batch_size);
    report.train_loss.push_back(train_loss);
    report.val_loss.push_back(val.loss);
    report.val_accuracy.push_back(val.metrics.accuracy);
    if (on_epoch) {
      on_epoch(epoch, train_loss, val.loss, val.metrics.accuracy);
    }
    report.stopped_epoch = epoch;

    if (cfg.stop_at_val_accuracy <= 1.0 && val.metrics.accuracy >= cfg.stop_at_val_accuracy) {
      best_params = model.snapshot_parameters();
      goal_epoch = epoch;
      break;
    }
    if (!have_best || val.loss < best_val_loss) {
      best_val_loss = val.loss;
      best_params = model.snapshot_parameters();
      have_best = true;
    }
    if (stopper.observe(val.loss)) {
      break;
    }
  }
  report.best_epoch = goal_epoch > 0 ? goal_epoch : stopper.best_epoch();

  model.restore_parameters(best_params);
  const EvalResult test = evaluate(model, test_split, cfg.batch_size);
  report.test_loss = test.loss;
  report.test_metrics = test.metrics;
  report.test_confusion = test.cm;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

void TrainReport::write_loss_csv(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) {
    throw IoError("cannot write loss csv " + file.string());
  }
  out << "epoch,train_loss,val_loss,val_acc\n";
  for (std::size_t i = 0; i < train_loss.size(); ++i) {
    out << (i + 1) << "," << format_metric(train_loss[i]) << "," << format_metric(val_loss[i])
        << "," << format_metric(val_accuracy[i]) << "\n";
  }
}

void TrainReport::write_metrics_csv(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) {
    throw IoError("cannot write metrics csv " + file.string());
  }
  out << MetricsReport::csv_header() << "\n" << test_metrics.csv_row() << "\n";
}

void TrainReport::write_loss_svg(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) {
    throw IoError("cannot write loss svg " + file.string());
  }
  const int width = 640, height = 400, margin = 48;
  double max_loss = 1e-9;
  for (double v : train_loss) max_loss = std::max(max_loss, v);
  for (double v : val_loss) max_loss = std::max(max_loss, v);
  const std::size_t epochs = train_loss.size();

  auto x_of = [&](std::size_t i) {
    const double span = epochs > 1 ? static_cast<double>(epochs - 1) : 1.0;
    return margin + (width - 2.0 * margin) * static_cast<double>(i) / span;
  };
  auto y_of = [&](double v) { return height - margin - (height - 2.0 * margin) * v / max_loss; };
  auto polyline = [&](const std::vector<double>& series, const char* color) {
    out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", x_of(i), y_of(series[i]));
      out << buf;
    }
    out << "\"/>\n";
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
      << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  out << "  <line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << height - margin << "\" stroke=\"black\"/>\n";
  polyline(train_loss, "#1f77b4");
  polyline(val_loss, "#d62728");
  out << "  <text x=\"" << width - margin - 150 << "\" y=\"" << margin
      << "\" fill=\"#1f77b4\">train loss</text>\n";
  out << "  <text x=\"" << width - margin - 150 << "\" y=\"" << margin + 18
      << "\" fill=\"#d62728\">validation loss</text>\n";
  out << "  <text x=\"" << width / 2 - 20 << "\" y=\"" << height - 12 << "\">epoch</text>\n";
  out << "</svg>\n";
}

}  // namespace scriptbmi
