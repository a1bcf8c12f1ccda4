// Copyright 2026 The lid-crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lid/crnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lid/error.hpp"

namespace lid {
namespace {

// Independent seed streams so the conv stack initialization depends only on
// the seed, whichever head is attached.
constexpr std::uint64_t kConvStream = 0x0;
constexpr std::uint64_t kLstmStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kHeadStream = 0xC2B2AE3D27D4EB4FULL;

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

Tensor filled(Shape shape, float value) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = value;
  return t;
}

std::string block_order_name(BlockOrder order) {
  return order == BlockOrder::kReluThenNorm ? "relu_bn" : "bn_relu";
}

std::string fusion_name(Fusion fusion) { return fusion == Fusion::kLastStep ? "last" : "mean"; }

}  // namespace

void CrnnConfig::validate() const {
  if (conv_blocks.empty()) throw ConfigError("model: at least one conv block is required");
  for (const auto& b : conv_blocks) {
    if (b.kernel < 1 || b.filters < 1) throw ConfigError("model: conv kernel and filters must be positive");
  }
  if (lstm_units < 1) throw ConfigError("model: lstm_units must be positive");
  if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
  if (!labels.empty() && static_cast<int>(labels.size()) != num_classes) {
    throw ConfigError("model: " + std::to_string(labels.size()) + " labels for " + std::to_string(num_classes) +
                      " classes");
  }
  int h = input_height;
  int w = input_width;
  for (std::size_t i = 0; i < conv_blocks.size(); ++i) {
    if (h < 2 || w < 2) {
      throw ConfigError("model: input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                        " pools to zero before block " + std::to_string(i + 1));
    }
    h /= 2;
    w /= 2;
  }
}

std::string CrnnConfig::label(int index) const {
  if (index >= 0 && static_cast<std::size_t>(index) < labels.size()) return labels[static_cast<std::size_t>(index)];
  return "class_" + std::to_string(index);
}

void to_json(nlohmann::json& j, const CrnnConfig& c) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : c.conv_blocks) blocks.push_back({{"kernel", b.kernel}, {"filters", b.filters}});
  j = nlohmann::json{{"conv_blocks", blocks},
                     {"lstm_units", c.lstm_units},
                     {"num_classes", c.num_classes},
                     {"input_height", c.input_height},
                     {"input_width", c.input_width},
                     {"head_only", c.head_only},
                     {"block_order", block_order_name(c.block_order)},
                     {"fusion", fusion_name(c.fusion)},
                     {"bn_momentum", c.bn_momentum},
                     {"bn_eps", c.bn_eps},
                     {"seed", c.seed},
                     {"labels", c.labels}};
}

void from_json(const nlohmann::json& j, CrnnConfig& c) {
  static const std::vector<std::string> kKeys = {"conv_blocks", "lstm_units",  "num_classes", "input_height",
                                                 "input_width", "head_only",   "block_order", "fusion",
                                                 "bn_momentum", "bn_eps",      "seed",        "labels"};
  if (!j.is_object()) throw ConfigError("model: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) throw ConfigError("model: unknown key '" + key + "'");
  }
  try {
    if (j.contains("conv_blocks")) {
      c.conv_blocks.clear();
      for (const auto& b : j.at("conv_blocks")) {
        c.conv_blocks.push_back({b.at("kernel").get<int>(), b.at("filters").get<int>()});
      }
    }
    if (j.contains("lstm_units")) c.lstm_units = j.at("lstm_units").get<int>();
    if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int>();
    if (j.contains("input_height")) c.input_height = j.at("input_height").get<int>();
    if (j.contains("input_width")) c.input_width = j.at("input_width").get<int>();
    if (j.contains("head_only")) c.head_only = j.at("head_only").get<bool>();
    if (j.contains("block_order")) {
      const auto name = j.at("block_order").get<std::string>();
      if (name == "relu_bn") {
        c.block_order = BlockOrder::kReluThenNorm;
      } else if (name == "bn_relu") {
        c.block_order = BlockOrder::kNormThenRelu;
      } else {
        throw ConfigError("model.block_order: expected relu_bn or bn_relu, got '" + name + "'");
      }
    }
    if (j.contains("fusion")) {
      const auto name = j.at("fusion").get<std::string>();
      if (name == "last") {
        c.fusion = Fusion::kLastStep;
      } else if (name == "mean") {
        c.fusion = Fusion::kMean;
      } else {
        throw ConfigError("model.fusion: expected last or mean, got '" + name + "'");
      }
    }
    if (j.contains("bn_momentum")) c.bn_momentum = j.at("bn_momentum").get<double>();
    if (j.contains("bn_eps")) c.bn_eps = j.at("bn_eps").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("labels")) c.labels = j.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

FeatureMapShape feature_map_shape(const CrnnConfig& config) {
  config.validate();
  std::size_t h = static_cast<std::size_t>(config.input_height);
  std::size_t w = static_cast<std::size_t>(config.input_width);
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    h /= 2;
    w /= 2;
  }
  return {static_cast<std::size_t>(config.conv_blocks.back().filters), h, w};
}

CrnnModel::CrnnModel(CrnnConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 conv_rng(config_.seed ^ kConvStream);
  std::size_t in_channels = 1;
  for (std::size_t i = 0; i < config_.conv_blocks.size(); ++i) {
    const auto& spec = config_.conv_blocks[i];
    const auto k = static_cast<std::size_t>(spec.kernel);
    const auto f = static_cast<std::size_t>(spec.filters);
    const double fan_in = static_cast<double>(in_channels * k * k);
    const std::string idx = std::to_string(i + 1);
    ConvBlock block{
        Parameter("conv" + idx + ".weight", uniform_tensor({f, in_channels, k, k}, std::sqrt(6.0 / fan_in), conv_rng)),
        Parameter("conv" + idx + ".bias", Tensor(Shape{f})),
        Parameter("bn" + idx + ".gamma", filled({f}, 1.0f)),
        Parameter("bn" + idx + ".beta", Tensor(Shape{f})),
        BatchNormStats<float>(f)};
    blocks_.push_back(std::move(block));
    in_channels = f;
  }

  const auto fm = feature_map_shape(config_);
  if (!config_.head_only) {
    std::mt19937_64 lstm_rng(config_.seed ^ kLstmStream);
    const auto hid = static_cast<std::size_t>(config_.lstm_units);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hid));
    auto make_layer = [&](const std::string& prefix) {
      Tensor bias(Shape{4 * hid});
      for (std::size_t k = 0; k < hid; ++k) bias.data()[hid + k] = 1.0f;  // forget gate
      return LstmLayer{Parameter(prefix + ".w_input", uniform_tensor({fm.step_dim(), 4 * hid}, bound, lstm_rng)),
                       Parameter(prefix + ".w_recurrent", uniform_tensor({hid, 4 * hid}, bound, lstm_rng)),
                       Parameter(prefix + ".bias", std::move(bias))};
    };
    forward_lstm_ = make_layer("lstm_fwd");
    backward_lstm_ = make_layer("lstm_bwd");
  }
  init_head(config_.seed ^ kHeadStream);
}

void CrnnModel::init_head(std::uint64_t seed) {
  const auto fm = feature_map_shape(config_);
  const std::size_t in = config_.head_only ? fm.channels * fm.height * fm.width
                                           : 2 * static_cast<std::size_t>(config_.lstm_units);
  const auto k = static_cast<std::size_t>(config_.num_classes);
  std::mt19937_64 rng(seed);
  head_weight_ = Parameter("head.weight", uniform_tensor({in, k}, std::sqrt(6.0 / static_cast<double>(in)), rng));
  head_bias_ = Parameter("head.bias", Tensor(Shape{k}));
}

Tensor CrnnModel::conv_features(Tape<float>* tape, const Tensor& images, const ForwardOptions& options) {
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != static_cast<std::size_t>(config_.input_height) ||
      images.dim(3) != static_cast<std::size_t>(config_.input_width)) {
    throw ShapeError("model: expected images [N, 1, " + std::to_string(config_.input_height) + ", " +
                     std::to_string(config_.input_width) + "], got " + shape_string(images.shape()));
  }
  Tape<float>* conv_tape = options.freeze_conv ? nullptr : tape;
  const Mode bn_mode = options.freeze_conv ? Mode::kInfer : options.mode;
  const BatchNormOptions bn{config_.bn_momentum, config_.bn_eps};
  Tensor x = images;
  for (auto& block : blocks_) {
    x = conv2d(conv_tape, x, block.weight.tensor, block.bias.tensor);
    if (config_.block_order == BlockOrder::kReluThenNorm) {
      x = relu(conv_tape, x);
      x = batchnorm2d(conv_tape, x, block.gamma.tensor, block.beta.tensor, block.stats, bn_mode, bn);
    } else {
      x = batchnorm2d(conv_tape, x, block.gamma.tensor, block.beta.tensor, block.stats, bn_mode, bn);
      x = relu(conv_tape, x);
    }
    x = maxpool2x2(conv_tape, x);
  }
  return x;
}

Tensor CrnnModel::fused_features(Tape<float>* tape, const Tensor& images, const ForwardOptions& options) {
  Tensor fm = conv_features(tape, images, options);
  if (config_.head_only) return flatten(tape, fm);
  Tensor seq = feature_sequence(tape, fm);
  Tensor fwd = lstm_sequence(tape, seq, forward_lstm_.weights(), Direction::kForward);
  Tensor bwd = lstm_sequence(tape, seq, backward_lstm_.weights(), Direction::kBackward);
  if (config_.fusion == Fusion::kMean) return concat_features(tape, time_mean(tape, fwd), time_mean(tape, bwd));
  // The forward LSTM ends at the last step, the backward one at step 0.
  return concat_features(tape, time_step(tape, fwd, seq.dim(0) - 1), time_step(tape, bwd, 0));
}

Tensor CrnnModel::forward(Tape<float>* tape, const Tensor& images, const ForwardOptions& options) {
  return dense(tape, fused_features(tape, images, options), head_weight_.tensor, head_bias_.tensor);
}

std::vector<Parameter*> CrnnModel::conv_parameters() {
  std::vector<Parameter*> out;
  for (auto& b : blocks_) {
    out.insert(out.end(), {&b.weight, &b.bias, &b.gamma, &b.beta});
  }
  return out;
}

std::vector<Parameter*> CrnnModel::head_parameters() { return {&head_weight_, &head_bias_}; }

std::vector<Parameter*> CrnnModel::parameters() {
  auto out = conv_parameters();
  if (!config_.head_only) {
    for (auto* layer : {&forward_lstm_, &backward_lstm_}) {
      out.insert(out.end(), {&layer->w_input, &layer->w_recurrent, &layer->bias});
    }
  }
  out.insert(out.end(), {&head_weight_, &head_bias_});
  return out;
}

std::vector<const Parameter*> CrnnModel::parameters() const {
  auto mutable_params = const_cast<CrnnModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

CrnnModel::CrnnModel(const CrnnModel& other)
    : config_(other.config_),
      blocks_(other.blocks_),
      forward_lstm_(other.forward_lstm_),
      backward_lstm_(other.backward_lstm_),
      head_weight_(other.head_weight_),
      head_bias_(other.head_bias_) {
  for (auto* p : parameters()) p->tensor = p->tensor.clone();
  for (auto& [name, t] : buffers()) *t = t->clone();
}

CrnnModel& CrnnModel::operator=(const CrnnModel& other) {
  if (this != &other) *this = CrnnModel(other);
  return *this;
}

std::vector<std::pair<std::string, Tensor*>> CrnnModel::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string idx = std::to_string(i + 1);
    out.emplace_back("bn" + idx + ".running_mean", &blocks_[i].stats.running_mean);
    out.emplace_back("bn" + idx + ".running_var", &blocks_[i].stats.running_var);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> CrnnModel::buffers() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<CrnnModel*>(this)->buffers()) out.emplace_back(name, t);
  return out;
}

std::size_t CrnnModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto* p : parameters()) total += p->tensor.numel();
  return total;
}

std::size_t CrnnModel::conv_parameter_count() const {
  std::size_t total = 0;
  for (const auto& b : blocks_) {
    total += b.weight.tensor.numel() + b.bias.tensor.numel() + b.gamma.tensor.numel() + b.beta.tensor.numel();
  }
  return total;
}

void CrnnModel::extend_head(int new_num_classes, std::uint64_t seed, const std::vector<std::string>& new_labels) {
  if (new_num_classes <= config_.num_classes) {
    throw ConfigError("extend_head: new class count " + std::to_string(new_num_classes) + " must exceed current " +
                      std::to_string(config_.num_classes));
  }
  const auto added = static_cast<std::size_t>(new_num_classes - config_.num_classes);
  if (!new_labels.empty() && new_labels.size() != added) {
    throw ConfigError("extend_head: " + std::to_string(new_labels.size()) + " new labels for " +
                      std::to_string(added) + " new classes");
  }
  if (!config_.labels.empty() || !new_labels.empty()) {
    std::vector<std::string> labels;
    for (int i = 0; i < config_.num_classes; ++i) labels.push_back(config_.label(i));
    for (std::size_t i = 0; i < added; ++i) {
      labels.push_back(new_labels.empty() ? "class_" + std::to_string(config_.num_classes + static_cast<int>(i))
                                          : new_labels[i]);
    }
    config_.labels = std::move(labels);
  }
  config_.num_classes = new_num_classes;
  init_head(seed);
}

CrnnModel build_crnn(CrnnConfig config) {
  config.head_only = false;
  return CrnnModel(std::move(config));
}

CrnnModel build_cnn_baseline(CrnnConfig config) {
  config.head_only = true;
  return CrnnModel(std::move(config));
}

}  // namespace lid
