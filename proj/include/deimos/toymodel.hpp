// Copyright 2026 The Authors.
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


// Small fully-connected regression network with inverted dropout, trained by
// plain minibatch gradient descent, and fixed-mask MC-dropout sampling.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "deimos/error.hpp"
#include "deimos/samples.hpp"

namespace deimos::toy {

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

// ReLU on hidden layers, identity on the output. Dropout masks the input of
// every layer after the first.
struct DenseNet {
  std::vector<Index> layer_sizes;
  std::vector<DenseLayer> layers;
  double dropout_prob = 0.0;
  double weight_decay = 0.0;

  Index num_layers() const { return static_cast<Index>(layers.size()); }
  Index input_dim() const { return layer_sizes.front(); }
  Index output_dim() const { return layer_sizes.back(); }
};

// One mask realization: entry k covers the input of layer k + 1 and has
// length layer_sizes[k + 1]. Entries are 0 or 1.
struct DropoutMaskSet {
  std::vector<Eigen::VectorXd> layers;
};

// Per-layer masks for a batch: width x N (per example) or width x 1 (shared).
using MaskBatch = std::vector<Eigen::MatrixXd>;

inline void CheckShapes(const DenseNet& net) {
  if (net.layer_sizes.size() < 2 ||
      net.layers.size() + 1 != net.layer_sizes.size()) {
    throw Error(ErrorCode::kShapeMismatch, "layer list does not chain");
  }
  if (!(net.dropout_prob >= 0.0 && net.dropout_prob < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "dropout probability not in [0,1)");
  }
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const auto& layer = net.layers[k];
    if (layer.weights.rows() != net.layer_sizes[k + 1] ||
        layer.weights.cols() != net.layer_sizes[k] ||
        layer.bias.size() != net.layer_sizes[k + 1]) {
      throw Error(ErrorCode::kShapeMismatch,
                  "layer " + std::to_string(k) + " has the wrong shape");
    }
  }
}

// He-normal weights, zero biases.
inline DenseNet MakeDenseNet(std::vector<Index> layer_sizes,
                             double dropout_prob, double weight_decay,
                             std::mt19937_64& rng) {
  DenseNet net;
  net.layer_sizes = std::move(layer_sizes);
  net.dropout_prob = dropout_prob;
  net.weight_decay = weight_decay;
  for (std::size_t k = 0; k + 1 < net.layer_sizes.size(); ++k) {
    const Index in = net.layer_sizes[k];
    const Index out = net.layer_sizes[k + 1];
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / static_cast<double>(in)));
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (Index r = 0; r < out; ++r) {
      for (Index c = 0; c < in; ++c) layer.weights(r, c) = normal(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    net.layers.push_back(std::move(layer));
  }
  CheckShapes(net);
  return net;
}

// Every weight and bias i.i.d. N(0, sd^2).
inline DenseNet MakeGaussianNet(std::vector<Index> layer_sizes, double sd,
                                std::mt19937_64& rng) {
  DenseNet net;
  net.layer_sizes = std::move(layer_sizes);
  std::normal_distribution<double> normal(0.0, sd);
  for (std::size_t k = 0; k + 1 < net.layer_sizes.size(); ++k) {
    DenseLayer layer;
    layer.weights.resize(net.layer_sizes[k + 1], net.layer_sizes[k]);
    layer.bias.resize(net.layer_sizes[k + 1]);
    for (Index r = 0; r < layer.weights.rows(); ++r) {
      for (Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = normal(rng);
      }
    }
    for (Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = normal(rng);
    net.layers.push_back(std::move(layer));
  }
  CheckShapes(net);
  return net;
}

inline DropoutMaskSet DrawMasks(const DenseNet& net, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - net.dropout_prob);
  DropoutMaskSet masks;
  for (std::size_t k = 1; k < net.layer_sizes.size() - 1; ++k) {
    Eigen::VectorXd m(net.layer_sizes[k]);
    for (Index i = 0; i < m.size(); ++i) m(i) = keep(rng) ? 1.0 : 0.0;
    masks.layers.push_back(std::move(m));
  }
  return masks;
}

inline MaskBatch DrawMaskBatch(const DenseNet& net, Index batch,
                               std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - net.dropout_prob);
  MaskBatch masks;
  for (std::size_t k = 1; k < net.layer_sizes.size() - 1; ++k) {
    Eigen::MatrixXd m(net.layer_sizes[k], batch);
    for (Index c = 0; c < batch; ++c) {
      for (Index r = 0; r < m.rows(); ++r) m(r, c) = keep(rng) ? 1.0 : 0.0;
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

inline MaskBatch AsBatch(const DropoutMaskSet& masks) {
  MaskBatch batch;
  for (const auto& m : masks.layers) batch.emplace_back(m);
  return batch;
}

namespace detail {

struct Trace {
  std::vector<Eigen::MatrixXd> inputs;  // masked input of each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activations
};

inline void CheckMasks(const DenseNet& net, const MaskBatch& masks, Index n) {
  if (masks.empty()) return;
  if (static_cast<Index>(masks.size()) != net.num_layers() - 1) {
    throw Error(ErrorCode::kShapeMismatch, "wrong number of mask layers");
  }
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].rows() != net.layer_sizes[k + 1] ||
        (masks[k].cols() != 1 && masks[k].cols() != n)) {
      throw Error(ErrorCode::kShapeMismatch,
                  "mask " + std::to_string(k) + " has the wrong shape");
    }
  }
}

inline void ApplyMask(Eigen::MatrixXd& h, const Eigen::MatrixXd& mask,
                      double scale) {
  if (mask.cols() == 1) {
    h.array().colwise() *= (mask.col(0) * scale).array();
  } else {
    h.array() *= mask.array() * scale;
  }
}

inline Trace ForwardTrace(const DenseNet& net, const Eigen::MatrixXd& inputs,
                          const MaskBatch& masks) {
  if (inputs.rows() != net.input_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "input width does not match net");
  }
  CheckMasks(net, masks, inputs.cols());
  const double scale = 1.0 / (1.0 - net.dropout_prob);
  Trace trace;
  trace.inputs.push_back(inputs);
  for (Index k = 0; k < net.num_layers(); ++k) {
    const auto& layer = net.layers[static_cast<std::size_t>(k)];
    Eigen::MatrixXd z = layer.weights * trace.inputs.back();
    z.colwise() += layer.bias;
    trace.pre.push_back(z);
    if (k + 1 == net.num_layers()) break;
    Eigen::MatrixXd h = z.cwiseMax(0.0);
    if (!masks.empty()) ApplyMask(h, masks[static_cast<std::size_t>(k)], scale);
    trace.inputs.push_back(std::move(h));
  }
  return trace;
}

}  // namespace detail

// Columns of `inputs` are examples. Without masks no dropout is applied.
inline Eigen::MatrixXd Forward(const DenseNet& net,
                               const Eigen::MatrixXd& inputs,
                               const MaskBatch& masks = {}) {
  return detail::ForwardTrace(net, inputs, masks).pre.back();
}

inline Eigen::MatrixXd Forward(const DenseNet& net,
                               const Eigen::MatrixXd& inputs,
                               const DropoutMaskSet& masks) {
  return Forward(net, inputs, AsBatch(masks));
}

inline double SquaredWeightNorm(const DenseNet& net) {
  double total = 0.0;
  for (const auto& layer : net.layers) total += layer.weights.squaredNorm();
  return total;
}

// Mean squared error plus weight_decay * sum of squared weights (biases are
// not penalized).
inline double Loss(const DenseNet& net, const Eigen::MatrixXd& inputs,
                   const Eigen::MatrixXd& targets, const MaskBatch& masks = {}) {
  const Eigen::MatrixXd out = Forward(net, inputs, masks);
  return (out - targets).squaredNorm() / static_cast<double>(inputs.cols()) +
         net.weight_decay * SquaredWeightNorm(net);
}

struct LossGradient {
  double loss = 0.0;
  std::vector<DenseLayer> grads;  // same shapes as net.layers
};

inline LossGradient ComputeLossGradient(const DenseNet& net,
                                        const Eigen::MatrixXd& inputs,
                                        const Eigen::MatrixXd& targets,
                                        const MaskBatch& masks = {}) {
  if (targets.rows() != net.output_dim() || targets.cols() != inputs.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "targets do not match outputs");
  }
  const auto trace = detail::ForwardTrace(net, inputs, masks);
  const double n = static_cast<double>(inputs.cols());
  const double scale = 1.0 / (1.0 - net.dropout_prob);

  LossGradient result;
  const Eigen::MatrixXd residual = trace.pre.back() - targets;
  result.loss = residual.squaredNorm() / n +
                net.weight_decay * SquaredWeightNorm(net);
  result.grads.resize(net.layers.size());

  Eigen::MatrixXd delta = (2.0 / n) * residual;
  for (Index k = net.num_layers() - 1; k >= 0; --k) {
    const auto uk = static_cast<std::size_t>(k);
    const auto& layer = net.layers[uk];
    result.grads[uk].weights = delta * trace.inputs[uk].transpose() +
                               2.0 * net.weight_decay * layer.weights;
    result.grads[uk].bias = delta.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd upstream = layer.weights.transpose() * delta;
    if (!masks.empty()) detail::ApplyMask(upstream, masks[uk - 1], scale);
    delta = upstream.cwiseProduct(
        (trace.pre[uk - 1].array() > 0.0).cast<double>().matrix());
  }
  return result;
}

struct Dataset {
  Eigen::MatrixXd inputs;   // in x N
  Eigen::MatrixXd targets;  // out x N

  Index size() const { return inputs.cols(); }
};

struct TrainConfig {
  Index epochs = 1000;
  double learning_rate = 0.01;
  Index batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  DenseNet net;
  // Deterministic (dropout-free) objective before training and after each
  // epoch.
  std::vector<double> loss_curve;
};

inline TrainResult Train(DenseNet net, const Dataset& data,
                         const TrainConfig& config) {
  CheckShapes(net);
  if (data.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "empty training set");
  }
  if (config.epochs < 1 || config.batch_size < 1 ||
      !(config.learning_rate >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad training configuration");
  }
  std::mt19937_64 rng(config.seed);
  TrainResult result;
  result.loss_curve.push_back(Loss(net, data.inputs, data.targets));

  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const bool dropout = net.dropout_prob > 0.0;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < data.size(); start += config.batch_size) {
      const Index count = std::min(config.batch_size, data.size() - start);
      std::vector<Index> idx(order.begin() + start,
                             order.begin() + start + count);
      const Eigen::MatrixXd x = data.inputs(Eigen::all, idx);
      const Eigen::MatrixXd y = data.targets(Eigen::all, idx);
      const MaskBatch masks = dropout ? DrawMaskBatch(net, count, rng)
                                      : MaskBatch{};
      const auto lg = ComputeLossGradient(net, x, y, masks);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::kTrainingDiverged,
                    "non-finite loss in epoch " + std::to_string(epoch));
      }
      for (std::size_t k = 0; k < net.layers.size(); ++k) {
        net.layers[k].weights -= config.learning_rate * lg.grads[k].weights;
        net.layers[k].bias -= config.learning_rate * lg.grads[k].bias;
      }
    }
    const double loss = Loss(net, data.inputs, data.targets);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::kTrainingDiverged,
                  "non-finite loss after epoch " + std::to_string(epoch));
    }
    result.loss_curve.push_back(loss);
  }
  result.net = std::move(net);
  return result;
}

// Draws J mask sets up front, then row j of the result is the prediction for
// every input under mask set j. Single-output nets only.
inline PredictionSamples McPredictSharedMasks(const DenseNet& net,
                                              const Eigen::MatrixXd& inputs,
                                              Index masks_count,
                                              std::uint64_t seed) {
  if (masks_count < 2) {
    throw Error(ErrorCode::kInsufficientSamples, "need J >= 2");
  }
  if (net.output_dim() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "expected a single-output net");
  }
  std::mt19937_64 rng(seed);
  std::vector<DropoutMaskSet> masks;
  masks.reserve(static_cast<std::size_t>(masks_count));
  for (Index j = 0; j < masks_count; ++j) masks.push_back(DrawMasks(net, rng));

  PredictionSamples samples;
  samples.kind = TaskKind::kRegression;
  samples.num_points = inputs.cols();
  samples.seed = seed;
  samples.values.resize(masks_count, inputs.cols());
  for (Index j = 0; j < masks_count; ++j) {
    samples.values.row(j) =
        Forward(net, inputs, masks[static_cast<std::size_t>(j)]).row(0);
  }
  return samples;
}

// Model precision tau = (1 - p) l^2 / (2 N lambda).
inline double TauFromHyperparams(double dropout_prob, double length_scale,
                                 double train_size, double weight_decay) {
  if (!(train_size > 0.0) || !(weight_decay > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "training-set size and weight decay must be positive");
  }
  if (!(length_scale > 0.0) || !(dropout_prob >= 0.0 && dropout_prob < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "need length scale > 0 and dropout probability in [0,1)");
  }
  return (1.0 - dropout_prob) * length_scale * length_scale /
         (2.0 * train_size * weight_decay);
}

// Random generator network mapping 1-D inputs to 1-D outputs, optionally
// rescaled to zero mean / unit spread over a dense grid of its domain.
struct Generator1d {
  DenseNet net;
  double offset = 0.0;
  double scale = 1.0;
  double x_min = -10.0;
  double x_max = 10.0;

  Eigen::RowVectorXd operator()(const Eigen::RowVectorXd& x) const {
    Eigen::RowVectorXd y = Forward(net, x).row(0);
    return ((y.array() - offset) * scale).matrix();
  }
};

struct GeneratorConfig {
  std::vector<Index> hidden = {32, 32};
  double param_sd = 1.5;
  double x_min = -10.0;
  double x_max = 10.0;
  bool standardize = true;
  Index grid_size = 1001;
};

inline Eigen::RowVectorXd Grid(double lo, double hi, Index n) {
  return Eigen::RowVectorXd::LinSpaced(n, lo, hi);
}

inline Generator1d MakeGenerator1d(const GeneratorConfig& config,
                                   std::mt19937_64& rng) {
  std::vector<Index> sizes = {1};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  Generator1d gen;
  gen.net = MakeGaussianNet(sizes, config.param_sd, rng);
  gen.x_min = config.x_min;
  gen.x_max = config.x_max;
  if (config.standardize) {
    const Eigen::RowVectorXd y =
        Forward(gen.net, Grid(config.x_min, config.x_max, config.grid_size))
            .row(0);
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().mean());
    if (sd > 0.0) {
      gen.offset = mean;
      gen.scale = 1.0 / sd;
    }
  }
  return gen;
}

// Noisy observations of the generator at the given inputs.
inline Dataset Observe(const Generator1d& gen, const Eigen::RowVectorXd& x,
                       double noise_sd, std::mt19937_64& rng) {
  Dataset data;
  data.inputs = x;
  data.targets = gen(x);
  if (noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sd);
    for (Index i = 0; i < x.size(); ++i) data.targets(0, i) += noise(rng);
  }
  return data;
}

inline Eigen::RowVectorXd UniformInputs(const Generator1d& gen, Index n,
                                        std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(gen.x_min, gen.x_max);
  Eigen::RowVectorXd x(n);
  for (Index i = 0; i < n; ++i) x(i) = uniform(rng);
  return x;
}

// n uniform inputs from a freshly drawn generator, with Gaussian noise.
inline Dataset Generate1dData(std::mt19937_64& rng, Index n, double noise_sd,
                              const GeneratorConfig& config = {}) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "need n >= 1");
  const auto gen = MakeGenerator1d(config, rng);
  const auto x = UniformInputs(gen, n, rng);
  return Observe(gen, x, noise_sd, rng);
}

inline nlohmann::json ToJson(const DenseNet& net) {
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    std::vector<double> w;
    for (Index r = 0; r < layer.weights.rows(); ++r) {
      for (Index c = 0; c < layer.weights.cols(); ++c) {
        w.push_back(layer.weights(r, c));
      }
    }
    weights.push_back(w);
    biases.push_back(std::vector<double>(layer.bias.data(),
                                         layer.bias.data() + layer.bias.size()));
  }
  return {{"layer_sizes", net.layer_sizes},
          {"p", net.dropout_prob},
          {"lambda", net.weight_decay},
          {"weights", weights},
          {"biases", biases}};
}

inline DenseNet NetFromJson(const nlohmann::json& j) {
  DenseNet net;
  try {
    net.layer_sizes = j.at("layer_sizes").get<std::vector<Index>>();
    net.dropout_prob = j.at("p").get<double>();
    net.weight_decay = j.at("lambda").get<double>();
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (net.layer_sizes.size() < 2 ||
        weights.size() + 1 != net.layer_sizes.size() ||
        biases.size() != weights.size()) {
      throw Error(ErrorCode::kShapeMismatch, "layer arrays do not chain");
    }
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const auto w = weights[k].get<std::vector<double>>();
      const auto b = biases[k].get<std::vector<double>>();
      const Index out = net.layer_sizes[k + 1];
      const Index in = net.layer_sizes[k];
      if (static_cast<Index>(w.size()) != out * in ||
          static_cast<Index>(b.size()) != out) {
        throw Error(ErrorCode::kShapeMismatch,
                    "layer " + std::to_string(k) + " has the wrong size");
      }
      DenseLayer layer;
      layer.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                     Eigen::Dynamic,
                                                     Eigen::RowMajor>>(
          w.data(), out, in);
      layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
      net.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidData, e.what());
  }
  CheckShapes(net);
  return net;
}

}  // namespace deimos::toy
