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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lid/ops.hpp"
#include "lid/tensor.hpp"

namespace lid {

struct ConvBlockSpec {
  int kernel = 3;
  int filters = 16;
  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

// Order of the activation and normalization inside a conv block. The
// default follows the published description literally (ReLU first).
enum class BlockOrder { kReluThenNorm, kNormThenRelu };

// How the two LSTM directions are reduced to one vector each.
enum class Fusion { kLastStep, kMean };

struct CrnnConfig {
  std::vector<ConvBlockSpec> conv_blocks = {{7, 16}, {5, 32}, {3, 64}, {3, 128}, {3, 256}};
  int lstm_units = 256;
  int num_classes = 4;
  int input_height = 129;
  int input_width = 500;
  // CNN-only baseline: flatten the feature map straight into the classifier.
  bool head_only = false;
  BlockOrder block_order = BlockOrder::kReluThenNorm;
  Fusion fusion = Fusion::kLastStep;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  std::uint64_t seed = 0;
  // Class names by index; empty means "class_<i>".
  std::vector<std::string> labels;

  // Throws ConfigError when the layer stack cannot process the input.
  void validate() const;
  std::string label(int index) const;
  friend bool operator==(const CrnnConfig&, const CrnnConfig&) = default;
};

void to_json(nlohmann::json& j, const CrnnConfig& c);
void from_json(const nlohmann::json& j, CrnnConfig& c);

// Output of the convolutional stack for one image: channels x height x width.
struct FeatureMapShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  // Time steps after slicing along width, and the per-step feature size.
  std::size_t steps() const { return width; }
  std::size_t step_dim() const { return channels * height; }
};

FeatureMapShape feature_map_shape(const CrnnConfig& config);

struct ForwardOptions {
  Mode mode = Mode::kInfer;
  // Run the conv stack without recording and with BatchNorm in infer mode, so
  // none of its parameters or running statistics change.
  bool freeze_conv = false;
};

// Five conv blocks (conv -> ReLU -> BatchNorm -> 2x2 max pool), then either
//  - CRNN: slice the feature map along width into time steps, run a forward
//    and a backward LSTM, concatenate their final outputs and classify; or
//  - CNN baseline (head_only): flatten the feature map and classify.
class CrnnModel {
 public:
  explicit CrnnModel(CrnnConfig config);

  // Copies are deep: the copy owns its own parameters and statistics.
  CrnnModel(const CrnnModel& other);
  CrnnModel& operator=(const CrnnModel& other);
  CrnnModel(CrnnModel&&) noexcept = default;
  CrnnModel& operator=(CrnnModel&&) noexcept = default;

  const CrnnConfig& config() const { return config_; }

  // images [N, 1, H, W] -> logits [N, K].
  Tensor forward(Tape<float>* tape, const Tensor& images, const ForwardOptions& options = {});

  // [N, C, H', W'] after the last block.
  Tensor conv_features(Tape<float>* tape, const Tensor& images, const ForwardOptions& options = {});
  // [N, 2 * lstm_units] for the CRNN, [N, C * H' * W'] for the baseline.
  Tensor fused_features(Tape<float>* tape, const Tensor& images, const ForwardOptions& options = {});

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> conv_parameters();
  std::vector<Parameter*> head_parameters();

  // BatchNorm running statistics, by name.
  std::vector<std::pair<std::string, Tensor*>> buffers();
  std::vector<std::pair<std::string, const Tensor*>> buffers() const;

  std::size_t parameter_count() const;
  std::size_t conv_parameter_count() const;

  // Replaces the classifier with a wider, freshly initialized one (moments
  // reset). Everything else is kept bit-exactly. new_labels names the added
  // classes and may be empty.
  void extend_head(int new_num_classes, std::uint64_t seed, const std::vector<std::string>& new_labels = {});

 private:
  struct ConvBlock {
    Parameter weight;
    Parameter bias;
    Parameter gamma;
    Parameter beta;
    BatchNormStats<float> stats;
  };
  struct LstmLayer {
    Parameter w_input;
    Parameter w_recurrent;
    Parameter bias;
    LstmWeights<float> weights() const { return {w_input.tensor, w_recurrent.tensor, bias.tensor}; }
  };

  void init_head(std::uint64_t seed);

  CrnnConfig config_;
  std::vector<ConvBlock> blocks_;
  LstmLayer forward_lstm_;
  LstmLayer backward_lstm_;
  Parameter head_weight_;
  Parameter head_bias_;
};

CrnnModel build_crnn(CrnnConfig config);
CrnnModel build_cnn_baseline(CrnnConfig config);

}  // namespace lid
