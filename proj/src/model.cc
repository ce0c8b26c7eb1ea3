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

#include "cnnsens/model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binary_io.h"
#include "cnnsens/parallel.h"

namespace cnnsens {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const ScaleLayer&) { return in; },
          [&](const ConvLayer& c) {
            if (c.in_channels != in.channels) {
              throw std::invalid_argument("conv expects " + std::to_string(c.in_channels) +
                                          " input channels, got " + std::to_string(in.channels));
            }
            return Shape{in.height, in.width, c.out_channels};
          },
          [&](const ReluLayer&) { return in; },
          [&](const MaxPoolLayer&) {
            if (in.height < 2 || in.width < 2) {
              throw std::invalid_argument("max pool input smaller than 2x2");
            }
            return Shape{in.height / 2, in.width / 2, in.channels};
          },
          [&](const GlobalAvgPoolLayer&) { return Shape{1, 1, in.channels}; },
          [&](const DenseLayer& d) {
            if (static_cast<std::size_t>(d.in_features) != in.elements()) {
              throw std::invalid_argument("dense expects " + std::to_string(d.in_features) +
                                          " inputs, got " + std::to_string(in.elements()));
            }
            return Shape{1, 1, d.out_features};
          },
      },
      layer);
}

// Activations of every layer boundary plus pooling argmax routes.
struct ForwardTrace {
  std::vector<Tensor<double>> acts;              // acts[0] = input, acts[i+1] = layer i output
  std::vector<std::vector<std::uint32_t>> route;  // per layer; pool layers only
};

void conv_forward(const ConvLayer& c, const Tensor<double>& in, Tensor<double>& out) {
  const int h = in.height();
  const int w = in.width();
  const int k = c.kernel;
  const int r = k / 2;
  const int cin = c.in_channels;
  const int cout = c.out_channels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* o = out.pixel(y, x);
      std::copy(c.bias.begin(), c.bias.end(), o);
      for (int ky = 0; ky < k; ++ky) {
        const int yy = y + ky - r;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int xx = x + kx - r;
          if (xx < 0 || xx >= w) continue;
          const double* src = in.pixel(yy, xx);
          const double* wk = c.weights.data() + static_cast<std::size_t>((ky * k + kx) * cin) * cout;
          for (int i = 0; i < cin; ++i) {
            const double v = src[i];
            if (v == 0.0) continue;
            const double* wi = wk + static_cast<std::size_t>(i) * cout;
            for (int j = 0; j < cout; ++j) o[j] += v * wi[j];
          }
        }
      }
    }
  }
}

// Accumulates into din; weight/bias gradients only when gw/gb are non-null.
void conv_backward(const ConvLayer& c, const Tensor<double>& in, const Tensor<double>& dout,
                   Tensor<double>& din, double* gw, double* gb) {
  const int h = in.height();
  const int w = in.width();
  const int k = c.kernel;
  const int r = k / 2;
  const int cin = c.in_channels;
  const int cout = c.out_channels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* d = dout.pixel(y, x);
      if (std::all_of(d, d + cout, [](double v) { return v == 0.0; })) continue;
      if (gb != nullptr) {
        for (int j = 0; j < cout; ++j) gb[j] += d[j];
      }
      for (int ky = 0; ky < k; ++ky) {
        const int yy = y + ky - r;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int xx = x + kx - r;
          if (xx < 0 || xx >= w) continue;
          const double* src = in.pixel(yy, xx);
          double* dsrc = din.pixel(yy, xx);
          const std::size_t base = static_cast<std::size_t>((ky * k + kx) * cin) * cout;
          const double* wk = c.weights.data() + base;
          for (int i = 0; i < cin; ++i) {
            const double* wi = wk + static_cast<std::size_t>(i) * cout;
            double acc = 0.0;
            for (int j = 0; j < cout; ++j) acc += d[j] * wi[j];
            dsrc[i] += acc;
            if (gw != nullptr && src[i] != 0.0) {
              double* gwi = gw + base + static_cast<std::size_t>(i) * cout;
              const double v = src[i];
              for (int j = 0; j < cout; ++j) gwi[j] += v * d[j];
            }
          }
        }
      }
    }
  }
}

void pool_forward(const Tensor<double>& in, Tensor<double>& out, std::vector<std::uint32_t>& route) {
  const int c = in.channels();
  route.assign(out.size(), 0);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int ch = 0; ch < c; ++ch) {
        // Scan order (0,0), (0,1), (1,0), (1,1); first maximum wins ties.
        std::size_t best = in.index(2 * y, 2 * x, ch);
        double best_v = in[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in.index(2 * y + dy, 2 * x + dx, ch);
            if (in[idx] > best_v) {
              best_v = in[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = out.index(y, x, ch);
        out[o] = best_v;
        route[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

ForwardTrace run_forward(const ModelParams& params, const Tensor<double>& input) {
  if (input.shape() != params.input) {
    throw std::invalid_argument("input shape " + to_string(input.shape()) +
                                " does not match model input " + to_string(params.input));
  }
  ForwardTrace trace;
  trace.acts.reserve(params.layers.size() + 1);
  trace.route.resize(params.layers.size());
  trace.acts.push_back(input);
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const Layer& layer = params.layers[li];
    const Tensor<double>& in = trace.acts.back();
    Tensor<double> out(output_shape(layer, in.shape()));
    std::visit(Overloaded{
                   [&](const ScaleLayer& s) {
                     for (std::size_t i = 0; i < in.size(); ++i) {
                       out[i] = (in[i] - s.offset) * s.factor;
                     }
                   },
                   [&](const ConvLayer& c) { conv_forward(c, in, out); },
                   [&](const ReluLayer&) {
                     for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
                   },
                   [&](const MaxPoolLayer&) { pool_forward(in, out, trace.route[li]); },
                   [&](const GlobalAvgPoolLayer&) {
                     const int c = in.channels();
                     const std::size_t positions = in.shape().pixels();
                     for (std::size_t p = 0; p < positions; ++p) {
                       for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(ch)] += in[p * c + ch];
                     }
                     for (double& v : out.storage()) v /= static_cast<double>(positions);
                   },
                   [&](const DenseLayer& d) {
                     const std::size_t n = static_cast<std::size_t>(d.in_features);
                     for (int o = 0; o < d.out_features; ++o) {
                       const double* wr = d.weights.data() + static_cast<std::size_t>(o) * n;
                       double acc = d.bias[static_cast<std::size_t>(o)];
                       for (std::size_t i = 0; i < n; ++i) acc += wr[i] * in[i];
                       out[static_cast<std::size_t>(o)] = acc;
                     }
                   },
               },
               layer);
    trace.acts.push_back(std::move(out));
  }
  return trace;
}

// Propagates dscores back to the input. If grads is non-null, parameter
// gradients are accumulated into it.
Tensor<double> run_backward(const ModelParams& params, const ForwardTrace& trace,
                            std::span<const double> dscores, ParamGradients* grads) {
  Tensor<double> d(trace.acts.back().shape());
  std::copy(dscores.begin(), dscores.end(), d.storage().begin());
  // Trainable blocks are numbered in stack order; walk them backwards.
  std::size_t block = grads != nullptr ? grads->blocks.size() : 0;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const Tensor<double>& in = trace.acts[li];
    const Tensor<double>& out = trace.acts[li + 1];
    Tensor<double> din(in.shape());
    std::visit(
        Overloaded{
            [&](const ScaleLayer& s) {
              for (std::size_t i = 0; i < din.size(); ++i) din[i] = d[i] * s.factor;
            },
            [&](const ConvLayer& c) {
              double* gw = nullptr;
              double* gb = nullptr;
              if (grads != nullptr) {
                block -= 2;
                gw = grads->blocks[block].data();
                gb = grads->blocks[block + 1].data();
              }
              conv_backward(c, in, d, din, gw, gb);
            },
            [&](const ReluLayer&) {
              for (std::size_t i = 0; i < din.size(); ++i) din[i] = out[i] > 0.0 ? d[i] : 0.0;
            },
            [&](const MaxPoolLayer&) {
              const auto& route = trace.route[li];
              for (std::size_t o = 0; o < d.size(); ++o) din[route[o]] += d[o];
            },
            [&](const GlobalAvgPoolLayer&) {
              const int c = in.channels();
              const std::size_t positions = in.shape().pixels();
              for (std::size_t p = 0; p < positions; ++p) {
                for (int ch = 0; ch < c; ++ch) {
                  din[p * c + ch] = d[static_cast<std::size_t>(ch)] / static_cast<double>(positions);
                }
              }
            },
            [&](const DenseLayer& dl) {
              const std::size_t n = static_cast<std::size_t>(dl.in_features);
              double* gw = nullptr;
              double* gb = nullptr;
              if (grads != nullptr) {
                block -= 2;
                gw = grads->blocks[block].data();
                gb = grads->blocks[block + 1].data();
              }
              for (int o = 0; o < dl.out_features; ++o) {
                const double g = d[static_cast<std::size_t>(o)];
                if (g == 0.0) continue;
                const double* wr = dl.weights.data() + static_cast<std::size_t>(o) * n;
                for (std::size_t i = 0; i < n; ++i) din[i] += wr[i] * g;
                if (gw != nullptr) {
                  double* gr = gw + static_cast<std::size_t>(o) * n;
                  for (std::size_t i = 0; i < n; ++i) gr[i] += in[i] * g;
                  gb[o] += g;
                }
              }
            },
        },
        params.layers[li]);
    d = std::move(din);
  }
  return d;
}

void fill_normal(std::vector<double>& v, double stddev, NoiseStream& rng) {
  for (double& x : v) x = stddev * rng.normal();
}

std::vector<double> softmax(std::span<const double> scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> scores, int label) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  return std::log(sum) + mx - scores[static_cast<std::size_t>(label)];
}

// Deterministic in-place Fisher-Yates shuffle.
void shuffle(std::vector<std::size_t>& order, NoiseStream& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
}

enum : std::uint32_t {
  kTagScale = 0,
  kTagConv = 1,
  kTagRelu = 2,
  kTagPool = 3,
  kTagDense = 4,
  kTagGlobalPool = 5,
};

constexpr std::uint32_t kModelVersion = 1;

}  // namespace

int ModelParams::num_classes() const {
  if (layers.empty()) return 0;
  if (const auto* d = std::get_if<DenseLayer>(&layers.back())) return d->out_features;
  return 0;
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (auto block : parameter_blocks()) n += block.size();
  return n;
}

std::vector<std::span<double>> ModelParams::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (Layer& layer : layers) {
    if (auto* c = std::get_if<ConvLayer>(&layer)) {
      blocks.emplace_back(c->weights);
      blocks.emplace_back(c->bias);
    } else if (auto* d = std::get_if<DenseLayer>(&layer)) {
      blocks.emplace_back(d->weights);
      blocks.emplace_back(d->bias);
    }
  }
  return blocks;
}

std::vector<std::span<const double>> ModelParams::parameter_blocks() const {
  std::vector<std::span<const double>> blocks;
  for (const Layer& layer : layers) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      blocks.emplace_back(c->weights);
      blocks.emplace_back(c->bias);
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      blocks.emplace_back(d->weights);
      blocks.emplace_back(d->bias);
    }
  }
  return blocks;
}

void check_model(const ModelParams& params) {
  if (params.input.height <= 0 || params.input.width <= 0 || params.input.channels <= 0) {
    throw std::invalid_argument("model input shape must be positive");
  }
  if (params.layers.empty() || !std::holds_alternative<DenseLayer>(params.layers.back())) {
    throw std::invalid_argument("model must end with a dense layer");
  }
  Shape shape = params.input;
  for (const Layer& layer : params.layers) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      if (c->kernel <= 0 || c->kernel % 2 == 0) {
        throw std::invalid_argument("conv kernel must be odd and positive");
      }
      const std::size_t expected = static_cast<std::size_t>(c->kernel) * c->kernel *
                                   c->in_channels * c->out_channels;
      if (c->weights.size() != expected ||
          c->bias.size() != static_cast<std::size_t>(c->out_channels)) {
        throw std::invalid_argument("conv weight count does not match its header");
      }
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      if (d->weights.size() != static_cast<std::size_t>(d->in_features) * d->out_features ||
          d->bias.size() != static_cast<std::size_t>(d->out_features)) {
        throw std::invalid_argument("dense weight count does not match its header");
      }
    }
    shape = output_shape(layer, shape);
  }
  for (auto block : params.parameter_blocks()) {
    if (!std::all_of(block.begin(), block.end(), [](double v) { return std::isfinite(v); })) {
      throw std::invalid_argument("model has non-finite weights");
    }
  }
}

ModelParams make_reference_model(const ArchitectureConfig& arch, std::uint64_t seed) {
  if (arch.height < 4 || arch.width < 4 || arch.channels <= 0 || arch.conv1_channels <= 0 ||
      arch.conv2_channels <= 0 || arch.num_classes < 1 || arch.kernel <= 0 || arch.kernel % 2 == 0) {
    throw std::invalid_argument("invalid architecture config");
  }
  ModelParams m;
  m.input = Shape{arch.height, arch.width, arch.channels};
  auto conv = [&](int cin, int cout, std::uint64_t stream) {
    ConvLayer c;
    c.kernel = arch.kernel;
    c.in_channels = cin;
    c.out_channels = cout;
    c.weights.resize(static_cast<std::size_t>(arch.kernel) * arch.kernel * cin * cout);
    c.bias.assign(static_cast<std::size_t>(cout), 0.0);
    NoiseStream rng(mix(seed, stream));
    fill_normal(c.weights, std::sqrt(2.0 / (arch.kernel * arch.kernel * cin)), rng);
    return c;
  };
  m.layers.emplace_back(ScaleLayer{});
  m.layers.emplace_back(conv(arch.channels, arch.conv1_channels, 1));
  m.layers.emplace_back(ReluLayer{});
  m.layers.emplace_back(MaxPoolLayer{});
  m.layers.emplace_back(conv(arch.conv1_channels, arch.conv2_channels, 2));
  m.layers.emplace_back(ReluLayer{});
  m.layers.emplace_back(MaxPoolLayer{});
  if (arch.global_pool) m.layers.emplace_back(GlobalAvgPoolLayer{});
  DenseLayer d;
  d.in_features = arch.global_pool ? arch.conv2_channels
                                   : (arch.height / 4) * (arch.width / 4) * arch.conv2_channels;
  d.out_features = arch.num_classes;
  d.weights.resize(static_cast<std::size_t>(d.in_features) * d.out_features);
  d.bias.assign(static_cast<std::size_t>(d.out_features), 0.0);
  NoiseStream rng(mix(seed, 3));
  fill_normal(d.weights, std::sqrt(1.0 / d.in_features), rng);
  m.layers.emplace_back(std::move(d));
  check_model(m);
  return m;
}

ModelParams make_linear_model(Shape input, std::vector<double> weights, std::vector<double> bias) {
  ModelParams m;
  m.input = input;
  DenseLayer d;
  d.in_features = static_cast<int>(input.elements());
  d.out_features = static_cast<int>(bias.size());
  d.weights = std::move(weights);
  d.bias = std::move(bias);
  m.layers.emplace_back(std::move(d));
  check_model(m);
  return m;
}

Tensor<double> to_double(const ImageTensor& img) {
  Tensor<double> t(img.shape());
  std::copy(img.storage().begin(), img.storage().end(), t.storage().begin());
  return t;
}

std::vector<double> forward(const ModelParams& params, const Tensor<double>& input) {
  return run_forward(params, input).acts.back().storage();
}

std::vector<double> forward(const ModelParams& params, const ImageTensor& img) {
  return forward(params, to_double(img));
}

int argmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax of empty scores");
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

int predict(const ModelParams& params, const ImageTensor& img) {
  return argmax(forward(params, img));
}

GradientMap input_gradient(const ModelParams& params, const Tensor<double>& input,
                           int output_index) {
  const ForwardTrace trace = run_forward(params, input);
  const auto& scores = trace.acts.back();
  if (output_index < 0 || static_cast<std::size_t>(output_index) >= scores.size()) {
    throw std::invalid_argument("output index out of range");
  }
  std::vector<double> seed(scores.size(), 0.0);
  seed[static_cast<std::size_t>(output_index)] = 1.0;
  return run_backward(params, trace, seed, nullptr);
}

GradientMap input_gradient(const ModelParams& params, const ImageTensor& img, int output_index) {
  return input_gradient(params, to_double(img), output_index);
}

ParamGradients ParamGradients::zeros_like(const ModelParams& params) {
  ParamGradients g;
  for (auto block : params.parameter_blocks()) g.blocks.emplace_back(block.size(), 0.0);
  return g;
}

void ParamGradients::add(const ParamGradients& other) {
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) blocks[b][i] += other.blocks[b][i];
  }
}

double loss_and_gradients(const ModelParams& params, const Tensor<double>& input, int label,
                          ParamGradients& grads) {
  const ForwardTrace trace = run_forward(params, input);
  const auto& scores = trace.acts.back().storage();
  if (label < 0 || static_cast<std::size_t>(label) >= scores.size()) {
    throw std::invalid_argument("label out of range");
  }
  std::vector<double> d = softmax(scores);
  d[static_cast<std::size_t>(label)] -= 1.0;
  run_backward(params, trace, d, &grads);
  return cross_entropy(scores, label);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (cfg.epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (cfg.batch_size <= 0) throw std::invalid_argument("batch size must be positive");
  if (!(cfg.input_dropout_p >= 0.0 && cfg.input_dropout_p < 1.0)) {
    throw std::invalid_argument("input dropout probability must lie in [0, 1)");
  }
}

EpochStats evaluate_loss(const ModelParams& params, std::span<const Sample> split, int threads) {
  if (split.empty()) throw std::invalid_argument("cannot evaluate an empty split");
  std::vector<double> losses(split.size());
  std::vector<int> correct(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    const auto scores = forward(params, split[i].image);
    losses[i] = cross_entropy(scores, split[i].label);
    correct[i] = argmax(scores) == split[i].label ? 1 : 0;
  });
  EpochStats s;
  s.loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(split.size());
  s.train_accuracy =
      static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) / split.size();
  return s;
}

double evaluate_accuracy(const ModelParams& params, std::span<const Sample> split, int threads) {
  if (split.empty()) throw std::invalid_argument("cannot evaluate an empty split");
  std::vector<int> correct(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    correct[i] = predict(params, split[i].image) == split[i].label ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) / split.size();
}

ModelParams train(ModelParams params, std::span<const Sample> train_split, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&, const ModelParams&)>& on_epoch) {
  validate(cfg);
  check_model(params);
  if (train_split.empty()) throw std::invalid_argument("training split is empty");

  auto report = [&](int epoch) {
    EpochStats s = evaluate_loss(params, train_split, cfg.threads);
    s.epoch = epoch;
    if (!std::isfinite(s.loss)) {
      throw TrainingDiverged("training diverged: non-finite loss after epoch " +
                             std::to_string(epoch) + " (learning rate " +
                             std::to_string(cfg.learning_rate) + ")");
    }
    if (on_epoch) on_epoch(s, params);
  };
  report(0);

  const std::uint64_t shuffle_key = mix(cfg.seed.base, 0x5348u);
  const std::uint64_t dropout_key = mix(cfg.seed.base, 0x4452u);
  std::vector<std::size_t> order(train_split.size());
  ParamGradients velocity = ParamGradients::zeros_like(params);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<ParamGradients> per_sample(std::min(batch, train_split.size()),
                                         ParamGradients::zeros_like(params));
  std::vector<double> losses(per_sample.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    NoiseStream shuffle_rng(mix(shuffle_key, static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);
    const std::uint64_t epoch_dropout = mix(dropout_key, static_cast<std::uint64_t>(epoch));

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      parallel_for(count, cfg.threads, [&](std::size_t j) {
        const std::size_t idx = order[start + j];
        const Sample& s = train_split[idx];
        Tensor<double> input = to_double(s.image);
        if (cfg.input_dropout_p > 0.0) {
          NoiseStream drop(mix(epoch_dropout, idx));
          for (double& v : input.storage()) {
            if (drop.bernoulli(cfg.input_dropout_p)) v = 0.0;
          }
        }
        for (auto& b : per_sample[j].blocks) std::fill(b.begin(), b.end(), 0.0);
        losses[j] = loss_and_gradients(params, input, s.label, per_sample[j]);
      });
      for (std::size_t j = 0; j < count; ++j) {
        if (!std::isfinite(losses[j])) {
          throw TrainingDiverged("training diverged: non-finite loss in epoch " +
                                 std::to_string(epoch) + " (learning rate " +
                                 std::to_string(cfg.learning_rate) + ")");
        }
      }
      for (std::size_t j = 1; j < count; ++j) per_sample[0].add(per_sample[j]);
      const double scale = cfg.learning_rate / static_cast<double>(count);
      auto blocks = params.parameter_blocks();
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        auto& v = velocity.blocks[b];
        const auto& g = per_sample[0].blocks[b];
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] = cfg.momentum * v[i] - scale * g[i];
          blocks[b][i] += v[i];
        }
      }
    }
    report(epoch);
  }
  return params;
}

namespace {

// Kept out of line: GCC 11 at -O3 drops an adjacent pair of inlined
// double -> float -> double roundings.
[[gnu::noinline]] double narrow_to_float(double v) { return static_cast<float>(v); }

}  // namespace

void round_to_float(ModelParams& params) {
  auto round = [](std::vector<double>& v) {
    for (double& x : v) x = static_cast<float>(x);
  };
  for (Layer& layer : params.layers) {
    std::visit(Overloaded{
                   [](ScaleLayer& s) {
                     s.offset = narrow_to_float(s.offset);
                     s.factor = narrow_to_float(s.factor);
                   },
                   [&](ConvLayer& c) {
                     round(c.weights);
                     round(c.bias);
                   },
                   [&](DenseLayer& d) {
                     round(d.weights);
                     round(d.bias);
                   },
                   [](auto&) {},
               },
               layer);
  }
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  check_model(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("SNSM", 4);
  detail::put_u32(out, kModelVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(params.input.height));
  detail::put_u32(out, static_cast<std::uint32_t>(params.input.width));
  detail::put_u32(out, static_cast<std::uint32_t>(params.input.channels));
  detail::put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const Layer& layer : params.layers) {
    std::visit(Overloaded{
                   [&](const ScaleLayer& s) {
                     detail::put_u32(out, kTagScale);
                     detail::put_f32(out, static_cast<float>(s.offset));
                     detail::put_f32(out, static_cast<float>(s.factor));
                   },
                   [&](const ConvLayer& c) {
                     detail::put_u32(out, kTagConv);
                     detail::put_u32(out, static_cast<std::uint32_t>(c.kernel));
                     detail::put_u32(out, static_cast<std::uint32_t>(c.in_channels));
                     detail::put_u32(out, static_cast<std::uint32_t>(c.out_channels));
                   },
                   [&](const ReluLayer&) { detail::put_u32(out, kTagRelu); },
                   [&](const MaxPoolLayer&) { detail::put_u32(out, kTagPool); },
                   [&](const GlobalAvgPoolLayer&) { detail::put_u32(out, kTagGlobalPool); },
                   [&](const DenseLayer& d) {
                     detail::put_u32(out, kTagDense);
                     detail::put_u32(out, static_cast<std::uint32_t>(d.in_features));
                     detail::put_u32(out, static_cast<std::uint32_t>(d.out_features));
                   },
               },
               layer);
  }
  for (auto block : params.parameter_blocks()) {
    for (double v : block) detail::put_f32(out, static_cast<float>(v));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file " + path.string());
  const std::string what = "model file " + path.string();
  detail::expect_magic(in, "SNSM", what);
  const std::uint32_t version = detail::get_u32(in, what);
  if (version != kModelVersion) {
    throw std::runtime_error(what + ": unsupported version " + std::to_string(version));
  }
  auto dim = [&](std::uint32_t limit) {
    const std::uint32_t v = detail::get_u32(in, what);
    if (v == 0 || v > limit) throw std::runtime_error("malformed header in " + what);
    return static_cast<int>(v);
  };
  ModelParams m;
  m.input.height = dim(1u << 16);
  m.input.width = dim(1u << 16);
  m.input.channels = dim(64);
  const int num_layers = dim(256);
  for (int i = 0; i < num_layers; ++i) {
    const std::uint32_t tag = detail::get_u32(in, what);
    switch (tag) {
      case kTagScale: {
        ScaleLayer s;
        s.offset = detail::get_f32(in, what);
        s.factor = detail::get_f32(in, what);
        m.layers.emplace_back(s);
        break;
      }
      case kTagConv: {
        ConvLayer c;
        c.kernel = dim(31);
        c.in_channels = dim(1u << 12);
        c.out_channels = dim(1u << 12);
        c.weights.resize(static_cast<std::size_t>(c.kernel) * c.kernel * c.in_channels *
                         c.out_channels);
        c.bias.resize(static_cast<std::size_t>(c.out_channels));
        m.layers.emplace_back(std::move(c));
        break;
      }
      case kTagRelu:
        m.layers.emplace_back(ReluLayer{});
        break;
      case kTagPool:
        m.layers.emplace_back(MaxPoolLayer{});
        break;
      case kTagGlobalPool:
        m.layers.emplace_back(GlobalAvgPoolLayer{});
        break;
      case kTagDense: {
        DenseLayer d;
        d.in_features = dim(1u << 24);
        d.out_features = dim(1u << 16);
        d.weights.resize(static_cast<std::size_t>(d.in_features) * d.out_features);
        d.bias.resize(static_cast<std::size_t>(d.out_features));
        m.layers.emplace_back(std::move(d));
        break;
      }
      default:
        throw std::runtime_error(what + ": unknown layer tag " + std::to_string(tag));
    }
  }
  for (auto block : m.parameter_blocks()) {
    for (double& v : block) v = detail::get_f32(in, what);
  }
  try {
    check_model(m);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(what + ": " + e.what());
  }
  return m;
}

}  // namespace cnnsens
