#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scriptbmi/layers.hpp"
#include "scriptbmi/rng.hpp"
#include "scriptbmi/tensor.hpp"

namespace scriptbmi {

// One CNN configuration: conv stack, dropout schedule, hidden stack.
struct ModelConfig {
  std::string name = "custom";
  std::vector<int> conv_kernels;
  std::vector<int> conv_dropout_pct;
  std::vector<int> hidden_units;
  std::vector<int> hidden_dropout_pct;
  int num_classes = 2;
  int channels = 3;
  int height = 224;
  int width = 224;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  static ModelConfig load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
};

struct LayerShape {
  std::string name;
  std::vector<std::size_t> dims;  // {C,H,W} for image layers, {width} for vectors
};

// Validates the config and walks the shape recurrence (same-padding conv
// keeps H,W; each pool floor-halves them). Throws ConfigError naming the
// first layer whose input can no longer be pooled.
std::vector<LayerShape> resolve_model_shapes(const ModelConfig& cfg);

// Layer stack: [conv3x3 -> relu -> maxpool2x2 -> dropout] per conv entry,
// flatten, [dense -> relu -> dropout] per hidden entry, dense(num_classes),
// softmax. Construction resolves every shape but allocates no parameter
// data; call init_params (or load weights) before the first forward pass.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  void init_params(RngStream& stream);  // He weights, zero biases
  void init_zeros();                    // all-zero parameters (tests, probes)
  bool initialized() const;

  // Returns class probabilities [B, num_classes]. Train mode records the
  // caches consumed by backward(); it needs `dropout_stream` whenever any
  // dropout rate is positive.
  Tensor forward(const Tensor& x, nn::Mode mode, RngStream* dropout_stream = nullptr);

  // Backpropagates cross-entropy-over-softmax from the probabilities of the
  // latest train-mode forward pass; fills the gradient tensors.
  void backward(const Tensor& probs, std::span<const int> labels);

  std::vector<Tensor*> parameters();
  std::vector<Tensor*> gradients();
  std::vector<Tensor> snapshot_parameters() const;
  void restore_parameters(const std::vector<Tensor>& snapshot);
  std::vector<std::vector<std::size_t>> parameter_shapes() const;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<LayerShape>& shape_trace() const { return trace_; }
  const LayerShape& shape_of(const std::string& layer_name) const;
  std::size_t flatten_width() const { return flatten_width_; }
  std::size_t num_classes() const { return static_cast<std::size_t>(cfg_.num_classes); }

 private:
  void ensure_initialized() const;

  ModelConfig cfg_;
  std::vector<LayerShape> trace_;
  std::size_t flatten_width_ = 0;

  std::vector<nn::ConvParams> conv_;
  std::vector<nn::DenseParams> dense_;  // hidden layers then the output layer
  std::vector<nn::ConvParams> conv_grads_;
  std::vector<nn::DenseParams> dense_grads_;

  // Per-forward caches (train mode).
  std::vector<nn::ConvCache> conv_cache_;
  std::vector<nn::ReluCache> conv_relu_cache_;
  std::vector<nn::PoolCache> pool_cache_;
  std::vector<nn::DropoutCache> conv_drop_cache_;
  std::vector<nn::DenseCache> dense_cache_;
  std::vector<nn::ReluCache> dense_relu_cache_;
  std::vector<nn::DropoutCache> dense_drop_cache_;
  std::vector<std::size_t> pre_flatten_shape_;
};

// The eight ablation-grid configurations, in table order. Row 4 is tagged
// "best" and row 8 "base"; input geometry and class count are inherited from
// the arguments.
std::vector<ModelConfig> table1_presets(int num_classes = 48, int channels = 3, int height = 224,
                                        int width = 224);

// Versioned binary weights: magic "SBMI", u32 version, embedded config JSON,
// then per-tensor rank/extents and little-endian 64-bit floats.
void save_model(const Model& model, const std::filesystem::path& file);
Model load_model(const std::filesystem::path& file);

}  // namespace scriptbmi
