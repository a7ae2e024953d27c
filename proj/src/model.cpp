#include "scriptbmi/model.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "scriptbmi/metrics.hpp"

namespace scriptbmi {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ModelConfig::to_json() const {
  json j;
  j["name"] = name;
  j["conv_kernels"] = conv_kernels;
  j["conv_dropout_pct"] = conv_dropout_pct;
  j["hidden_units"] = hidden_units;
  j["hidden_dropout_pct"] = hidden_dropout_pct;
  j["num_classes"] = num_classes;
  j["input"] = {{"channels", channels}, {"height", height}, {"width", width}};
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model config is not valid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.name = j.value("name", std::string("custom"));
    cfg.conv_kernels = j.at("conv_kernels").get<std::vector<int>>();
    cfg.conv_dropout_pct = j.at("conv_dropout_pct").get<std::vector<int>>();
    cfg.hidden_units = j.at("hidden_units").get<std::vector<int>>();
    cfg.hidden_dropout_pct = j.at("hidden_dropout_pct").get<std::vector<int>>();
    cfg.num_classes = j.at("num_classes").get<int>();
    const json& in = j.at("input");
    cfg.channels = in.at("channels").get<int>();
    cfg.height = in.at("height").get<int>();
    cfg.width = in.at("width").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config missing field: ") + e.what());
  }
  return cfg;
}

ModelConfig ModelConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw IoError("cannot open model config " + file.string());
  }
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void ModelConfig::save(const fs::path& file) const {
  std::ofstream out(file);
  if (!out) {
    throw IoError("cannot write model config " + file.string());
  }
  out << to_json() << "\n";
}

std::vector<LayerShape> resolve_model_shapes(const ModelConfig& cfg) {
  if (cfg.conv_kernels.size() != cfg.conv_dropout_pct.size()) {
    throw ConfigError("conv_kernels and conv_dropout_pct lengths differ");
  }
  if (cfg.hidden_units.size() != cfg.hidden_dropout_pct.size()) {
    throw ConfigError("hidden_units and hidden_dropout_pct lengths differ");
  }
  if (cfg.conv_kernels.empty()) {
    throw ConfigError("model needs at least one conv layer");
  }
  for (int k : cfg.conv_kernels) {
    if (k < 1) throw ConfigError("conv kernel counts must be >= 1");
  }
  for (int u : cfg.hidden_units) {
    if (u < 1) throw ConfigError("hidden unit counts must be >= 1");
  }
  for (int d : cfg.conv_dropout_pct) {
    if (d < 0 || d >= 100) throw ConfigError("conv dropout percent must lie in [0,100)");
  }
  for (int d : cfg.hidden_dropout_pct) {
    if (d < 0 || d >= 100) throw ConfigError("hidden dropout percent must lie in [0,100)");
  }
  if (cfg.num_classes < 2) {
    throw ConfigError("num_classes must be >= 2");
  }
  if (cfg.channels < 1 || cfg.height < 1 || cfg.width < 1) {
    throw ConfigError("input geometry must be positive");
  }

  std::vector<LayerShape> trace;
  std::size_t c = static_cast<std::size_t>(cfg.channels);
  std::size_t h = static_cast<std::size_t>(cfg.height);
  std::size_t w = static_cast<std::size_t>(cfg.width);
  trace.push_back({"input", {c, h, w}});
  for (std::size_t i = 0; i < cfg.conv_kernels.size(); ++i) {
    c = static_cast<std::size_t>(cfg.conv_kernels[i]);
    trace.push_back({"conv" + std::to_string(i + 1), {c, h, w}});
    if (h < 2 || w < 2) {
      throw ConfigError("pool" + std::to_string(i + 1) + ": spatial size " + std::to_string(h) +
                        "x" + std::to_string(w) + " cannot be pooled");
    }
    h /= 2;
    w /= 2;
    trace.push_back({"pool" + std::to_string(i + 1), {c, h, w}});
  }
  trace.push_back({"flatten", {c * h * w}});
  for (std::size_t j = 0; j < cfg.hidden_units.size(); ++j) {
    trace.push_back(
        {"dense" + std::to_string(j + 1), {static_cast<std::size_t>(cfg.hidden_units[j])}});
  }
  trace.push_back({"output", {static_cast<std::size_t>(cfg.num_classes)}});
  return trace;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  trace_ = resolve_model_shapes(cfg_);
  flatten_width_ = shape_of("flatten").dims[0];

  // Parameter tensors stay empty until init_params or a weights load.
  conv_.resize(cfg_.conv_kernels.size());
  conv_grads_.resize(conv_.size());
  dense_.resize(cfg_.hidden_units.size() + 1);
  dense_grads_.resize(dense_.size());

  conv_cache_.resize(conv_.size());
  conv_relu_cache_.resize(conv_.size());
  pool_cache_.resize(conv_.size());
  conv_drop_cache_.resize(conv_.size());
  dense_cache_.resize(dense_.size());
  dense_relu_cache_.resize(cfg_.hidden_units.size());
  dense_drop_cache_.resize(cfg_.hidden_units.size());
}

std::vector<std::vector<std::size_t>> Model::parameter_shapes() const {
  std::vector<std::vector<std::size_t>> shapes;
  std::size_t in_ch = static_cast<std::size_t>(cfg_.channels);
  for (int k : cfg_.conv_kernels) {
    const std::size_t out_ch = static_cast<std::size_t>(k);
    shapes.push_back({out_ch, in_ch, 3, 3});
    shapes.push_back({out_ch});
    in_ch = out_ch;
  }
  std::size_t in_units = flatten_width_;
  for (int u : cfg_.hidden_units) {
    const std::size_t out_units = static_cast<std::size_t>(u);
    shapes.push_back({out_units, in_units});
    shapes.push_back({out_units});
    in_units = out_units;
  }
  shapes.push_back({static_cast<std::size_t>(cfg_.num_classes), in_units});
  shapes.push_back({static_cast<std::size_t>(cfg_.num_classes)});
  return shapes;
}

bool Model::initialized() const {
  for (const auto& p : conv_) {
    if (p.weights.empty()) return false;
  }
  for (const auto& p : dense_) {
    if (p.weights.empty()) return false;
  }
  return true;
}

void Model::ensure_initialized() const {
  if (!initialized()) {
    throw ConfigError("model parameters are not initialized; call init_params or load weights");
  }
}

void Model::init_params(RngStream& stream) {
  const auto shapes = parameter_shapes();
  std::size_t s = 0;
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    auto layer_stream = stream.derive("conv" + std::to_string(i));
    const std::size_t fan_in = shapes[s][1] * 9;
    conv_[i].weights = nn::he_init(shapes[s], fan_in, layer_stream);
    conv_[i].bias = Tensor(shapes[s + 1]);
    s += 2;
  }
  for (std::size_t j = 0; j < dense_.size(); ++j) {
    auto layer_stream = stream.derive("dense" + std::to_string(j));
    const std::size_t fan_in = shapes[s][1];
    dense_[j].weights = nn::he_init(shapes[s], fan_in, layer_stream);
    dense_[j].bias = Tensor(shapes[s + 1]);
    s += 2;
  }
}

void Model::init_zeros() {
  const auto shapes = parameter_shapes();
  std::size_t s = 0;
  for (auto& p : conv_) {
    p.weights = Tensor(shapes[s]);
    p.bias = Tensor(shapes[s + 1]);
    s += 2;
  }
  for (auto& p : dense_) {
    p.weights = Tensor(shapes[s]);
    p.bias = Tensor(shapes[s + 1]);
    s += 2;
  }
}

const LayerShape& Model::shape_of(const std::string& layer_name) const {
  for (const auto& entry : trace_) {
    if (entry.name == layer_name) return entry;
  }
  throw ConfigError("no layer named " + layer_name + " in this model");
}

Tensor Model::forward(const Tensor& x, nn::Mode mode, RngStream* dropout_stream) {
  ensure_initialized();
  if (x.rank() != 4 || x.extent(1) != static_cast<std::size_t>(cfg_.channels) ||
      x.extent(2) != static_cast<std::size_t>(cfg_.height) ||
      x.extent(3) != static_cast<std::size_t>(cfg_.width)) {
    throw ShapeError("model input must be [B," + std::to_string(cfg_.channels) + "," +
                     std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "], got " +
                     shape_to_string(x.shape()));
  }
  if (mode == nn::Mode::Train && dropout_stream == nullptr) {
    for (int d : cfg_.conv_dropout_pct) {
      if (d > 0) throw RangeError("train-mode forward needs a dropout stream");
    }
    for (int d : cfg_.hidden_dropout_pct) {
      if (d > 0) throw RangeError("train-mode forward needs a dropout stream");
    }
  }
  // Rate-zero dropout draws nothing, so a throwaway stream is safe here.
  RngStream unused(0, "unused");
  RngStream& drop = dropout_stream ? *dropout_stream : unused;

  Tensor t = x;
  for (std::size_t i = 0; i < conv_.size(); ++i) {
    t = nn::conv2d_forward(t, conv_[i], conv_cache_[i]);
    t = nn::relu(t, &conv_relu_cache_[i]);
    t = nn::maxpool_forward(t, pool_cache_[i]);
    t = nn::dropout(t, cfg_.conv_dropout_pct[i] / 100.0, mode, drop, conv_drop_cache_[i]);
  }
  pre_flatten_shape_ = t.shape();
  t = nn::flatten(t);
  for (std::size_t j = 0; j < dense_.size() - 1; ++j) {
    t = nn::dense_forward(t, dense_[j], dense_cache_[j]);
    t = nn::relu(t, &dense_relu_cache_[j]);
    t = nn::dropout(t, cfg_.hidden_dropout_pct[j] / 100.0, mode, drop, dense_drop_cache_[j]);
  }
  t = nn::dense_forward(t, dense_.back(), dense_cache_.back());
  return nn::softmax(t);
}

void Model::backward(const Tensor& probs, std::span<const int> labels) {
  Tensor grad = softmax_ce_backward(probs, labels);

  {
    nn::DenseGrads g = nn::dense_backward(grad, dense_cache_.back(), dense_.back());
    dense_grads_.back().weights = std::move(g.weights);
    dense_grads_.back().bias = std::move(g.bias);
    grad = std::move(g.input);
  }
  for (std::size_t j = dense_.size() - 1; j-- > 0;) {
    grad = nn::dropout_backward(grad, dense_drop_cache_[j]);
    grad = nn::relu_backward(grad, dense_relu_cache_[j]);
    nn::DenseGrads g = nn::dense_backward(grad, dense_cache_[j], dense_[j]);
    dense_grads_[j].weights = std::move(g.weights);
    dense_grads_[j].bias = std::move(g.bias);
    grad = std::move(g.input);
  }

  grad = nn::unflatten(grad, pre_flatten_shape_);
  for (std::size_t i = conv_.size(); i-- > 0;) {
    grad = nn::dropout_backward(grad, conv_drop_cache_[i]);
    grad = nn::maxpool_backward(grad, pool_cache_[i]);
    grad = nn::relu_backward(grad, conv_relu_cache_[i]);
    nn::ConvGrads g = nn::conv2d_backward(grad, conv_cache_[i], conv_[i]);
    conv_grads_[i].weights = std::move(g.weights);
    conv_grads_[i].bias = std::move(g.bias);
    grad = std::move(g.input);
  }
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& p : conv_) {
    out.push_back(&p.weights);
    out.push_back(&p.bias);
  }
  for (auto& p : dense_) {
    out.push_back(&p.weights);
    out.push_back(&p.bias);
  }
  return out;
}

std::vector<Tensor*> Model::gradients() {
  std::vector<Tensor*> out;
  for (auto& p : conv_grads_) {
    out.push_back(&p.weights);
    out.push_back(&p.bias);
  }
  for (auto& p : dense_grads_) {
    out.push_back(&p.weights);
    out.push_back(&p.bias);
  }
  return out;
}

std::vector<Tensor> Model::snapshot_parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : conv_) {
    out.push_back(p.weights);
    out.push_back(p.bias);
  }
  for (const auto& p : dense_) {
    out.push_back(p.weights);
    out.push_back(p.bias);
  }
  return out;
}

void Model::restore_parameters(const std::vector<Tensor>& snapshot) {
  auto params = parameters();
  if (snapshot.size() != params.size()) {
    throw ShapeError("parameter snapshot size mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(snapshot[i])) {
      throw ShapeError("parameter snapshot shape mismatch at tensor " + std::to_string(i));
    }
    *params[i] = snapshot[i];
  }
}

std::vector<ModelConfig> table1_presets(int num_classes, int channels, int height, int width) {
  struct Row {
    const char* name;
    std::vector<int> conv, conv_drop, hidden, hidden_drop;
  };
  const std::vector<Row> rows = {
      {"row1", {32, 64, 128, 256, 512}, {0, 0, 0, 0, 50}, {2048, 1024, 512, 256}, {30, 40, 50, 40}},
      {"row2", {64, 128, 256, 512}, {0, 0, 0, 0}, {2048}, {50}},
      {"row3", {32, 64}, {20, 30}, {256, 128}, {40, 50}},
      {"best", {64, 128, 256}, {0, 0, 0}, {512, 256, 128}, {50, 50, 50}},
      {"row5", {64, 128, 256}, {0, 0, 0}, {2048}, {50}},
      {"row6", {64, 128, 256, 512}, {0, 0, 0, 0}, {4096}, {50}},
      {"row7", {64, 128, 256}, {30, 40, 50}, {256, 128}, {50, 50}},
      {"base", {32, 64}, {20, 30}, {256, 128}, {0, 0}},
  };
  std::vector<ModelConfig> presets;
  presets.reserve(rows.size());
  for (const Row& r : rows) {
    ModelConfig cfg;
    cfg.name = r.name;
    cfg.conv_kernels = r.conv;
    cfg.conv_dropout_pct = r.conv_drop;
    cfg.hidden_units = r.hidden;
    cfg.hidden_dropout_pct = r.hidden_drop;
    cfg.num_classes = num_classes;
    cfg.channels = channels;
    cfg.height = height;
    cfg.width = width;
    presets.push_back(std::move(cfg));
  }
  return presets;
}

namespace {

constexpr char kMagic[4] = {'S', 'B', 'M', 'I'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("weights file truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw FormatError("weights file truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_model(const Model& model, const fs::path& file) {
  if (!model.initialized()) {
    throw ConfigError("cannot save an uninitialized model");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw IoError("cannot write weights file " + file.string());
  }
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  const std::string cfg = model.config().to_json();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  const std::vector<Tensor> params = model.snapshot_parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Tensor& t : params) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(out, e);
    for (std::size_t i = 0; i < t.size(); ++i) {
      put_u64(out, std::bit_cast<std::uint64_t>(t[i]));
    }
  }
  if (!out) {
    throw IoError("failed while writing weights file " + file.string());
  }
}

Model load_model(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError("cannot open weights file " + file.string());
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("weights file " + file.string() + " has a bad magic value");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw FormatError("weights file version " + std::to_string(version) + " is not supported");
  }
  const std::uint32_t cfg_len = get_u32(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw FormatError("weights file truncated in config block");

  Model model(ModelConfig::from_json(cfg_text));
  const auto expected = model.parameter_shapes();
  auto params = model.parameters();
  const std::uint32_t count = get_u32(in);
  if (count != params.size()) {
    throw FormatError("weights file holds " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(params.size()));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    const std::uint32_t rank = get_u32(in);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = get_u64(in);
    if (shape != expected[p]) {
      throw FormatError("weights tensor shape " + shape_to_string(shape) +
                        " does not match model shape " + shape_to_string(expected[p]));
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = std::bit_cast<double>(get_u64(in));
    }
    *params[p] = std::move(t);
  }
  return model;
}

}  // namespace scriptbmi
