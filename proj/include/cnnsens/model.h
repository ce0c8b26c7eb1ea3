// Copyright 2026 The cnnsens Authors. All Rights Reserved.
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

#ifndef CNNSENS_MODEL_H_
#define CNNSENS_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cnnsens/dataset.h"
#include "cnnsens/image.h"
#include "cnnsens/rng.h"

namespace cnnsens {

/// Fixed affine input normalization y = (x - offset) * factor. Not trained.
struct ScaleLayer {
  double offset = 127.5;
  double factor = 1.0 / 127.5;

  friend bool operator==(const ScaleLayer&, const ScaleLayer&) = default;
};

/// Stride-1 convolution with zero "same" padding and an odd square kernel.
/// Weights are laid out [ky][kx][in][out].
struct ConvLayer {
  int kernel = 3;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};

/// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.
struct MaxPoolLayer {
  friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};

/// Mean over all spatial positions per channel; output is 1 x 1 x channels.
struct GlobalAvgPoolLayer {
  friend bool operator==(const GlobalAvgPoolLayer&, const GlobalAvgPoolLayer&) = default;
};

/// Fully connected layer on the (y, x, c)-flattened input. Weights [out][in].
struct DenseLayer {
  int in_features = 0;
  int out_features = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

using Layer =
    std::variant<ScaleLayer, ConvLayer, ReluLayer, MaxPoolLayer, GlobalAvgPoolLayer, DenseLayer>;

/// A feed-forward classifier: input shape plus an ordered layer stack ending
/// in a dense layer producing the class scores.
struct ModelParams {
  Shape input;
  std::vector<Layer> layers;

  int num_classes() const;
  std::size_t num_parameters() const;

  /// Trainable blocks (weights then bias, per layer, in stack order).
  std::vector<std::span<double>> parameter_blocks();
  std::vector<std::span<const double>> parameter_blocks() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Throws std::invalid_argument if shapes do not chain or weights are not finite.
void check_model(const ModelParams& params);

/// Reference architecture:
/// scale -> conv kxk (conv1) -> relu -> pool -> conv kxk (conv2) -> relu -> pool
/// -> global average pool (optional) -> dense.
struct ArchitectureConfig {
  int height = 32;
  int width = 32;
  int channels = 3;
  int conv1_channels = 12;
  int conv2_channels = 24;
  int kernel = 3;
  int num_classes = 10;
  // Global average pooling before the dense head instead of flattening.
  bool global_pool = true;
};

/// He-initialized reference network; biases start at zero.
ModelParams make_reference_model(const ArchitectureConfig& arch, std::uint64_t seed);

/// Single dense layer f = W x + b applied directly to the raw input.
ModelParams make_linear_model(Shape input, std::vector<double> weights, std::vector<double> bias);

/// Pre-softmax class scores.
std::vector<double> forward(const ModelParams& params, const Tensor<double>& input);
std::vector<double> forward(const ModelParams& params, const ImageTensor& img);

/// argmax of the scores, lowest index on ties.
int argmax(std::span<const double> scores);
int predict(const ModelParams& params, const ImageTensor& img);

/// Exact reverse-mode derivative of scores[output_index] w.r.t. every input element.
GradientMap input_gradient(const ModelParams& params, const Tensor<double>& input,
                           int output_index);
GradientMap input_gradient(const ModelParams& params, const ImageTensor& img, int output_index);

/// Gradient of the loss with respect to every parameter block.
struct ParamGradients {
  std::vector<std::vector<double>> blocks;

  static ParamGradients zeros_like(const ModelParams& params);
  void add(const ParamGradients& other);
};

/// Softmax cross-entropy loss for one sample, accumulating parameter
/// gradients into `grads`. Returns the loss.
double loss_and_gradients(const ModelParams& params, const Tensor<double>& input, int label,
                          ParamGradients& grads);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 32;
  /// Probability of zeroing each raw input element during training. No rescaling.
  double input_dropout_p = 0.0;
  Seed seed{1};
  /// Threads for per-sample gradients inside a batch; results do not depend on it.
  int threads = 1;
};

void validate(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 0 = before any update
  double loss = 0.0;
  double train_accuracy = 0.0;
};

/// Raised when the training loss becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minibatch SGD with momentum on softmax cross-entropy over `train_split`.
/// The optional callback sees clean (no dropout) loss and accuracy on the
/// training split after every epoch, and once before training as epoch 0.
ModelParams train(ModelParams params, std::span<const Sample> train_split,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochStats&, const ModelParams&)>& on_epoch = {});

/// Mean softmax cross-entropy and accuracy over a split.
EpochStats evaluate_loss(const ModelParams& params, std::span<const Sample> split, int threads = 1);

/// Fraction of samples whose prediction equals the label.
double evaluate_accuracy(const ModelParams& params, std::span<const Sample> split, int threads = 1);

/// Binary format: "SNSM", version, input shape, layer headers, then weights
/// as float32 LE in stack order (weights then bias per trainable layer).
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

/// Rounds every weight to the nearest float32, matching what save_model stores.
void round_to_float(ModelParams& params);

Tensor<double> to_double(const ImageTensor& img);

}  // namespace cnnsens

#endif  // CNNSENS_MODEL_H_
