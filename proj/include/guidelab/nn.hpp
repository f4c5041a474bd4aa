// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "guidelab/tensor.hpp"

namespace guidelab {

/// Named trainable tensor. Names are unique within one model.
struct Parameter {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

/// Throws ContractError if two parameters share a name.
void check_unique_names(const ParameterList& params);

enum class Activation { ReLU, SiLU };

Tensor activate(const Tensor& x, Activation act);

/// Affine layer y = x W + b with W stored as [in, out].
class Linear {
  public:
    Linear() = default;
    Linear(std::size_t in, std::size_t out, double gain, std::mt19937_64& rng);

    Tensor forward(const Tensor& x) const;
    std::size_t in_features() const { return weight_.rows(); }
    std::size_t out_features() const { return weight_.cols(); }

    void append_parameters(const std::string& prefix, ParameterList& out) const;
    Linear clone() const;

  private:
    Tensor weight_;
    Tensor bias_;
};

/// Plain multilayer perceptron: widths[0] -> ... -> widths.back(), with the
/// activation between layers and a linear output.
class Mlp {
  public:
    Mlp() = default;
    Mlp(const std::vector<std::size_t>& widths, Activation act, std::mt19937_64& rng);

    Tensor forward(const Tensor& x) const;
    /// Output of the last hidden layer (after its activation).
    Tensor features(const Tensor& x) const;
    /// Applies only the output layer to precomputed features.
    Tensor head(const Tensor& features) const;

    const std::vector<std::size_t>& widths() const { return widths_; }
    Activation activation() const { return act_; }
    void append_parameters(const std::string& prefix, ParameterList& out) const;
    Mlp clone() const;

  private:
    std::vector<std::size_t> widths_;
    Activation act_ = Activation::ReLU;
    std::vector<Linear> layers_;
};

// ---------------------------------------------------------------------------
// Optimisation

enum class OptimizerKind { SGD, AdamW };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::AdamW;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    double momentum = 0.0;  // SGD only
};

/// Holds per-parameter moment buffers for one model. A step applies the
/// selected rule to every parameter and then clears their gradients.
class Optimizer {
  public:
    Optimizer(OptimizerConfig config, ParameterList params);

    /// Throws ContractError if any parameter lacks a gradient.
    void step();
    void zero_grad();

    const OptimizerConfig& config() const { return config_; }
    void set_learning_rate(double lr);
    std::int64_t steps_taken() const { return steps_; }

  private:
    OptimizerConfig config_;
    ParameterList params_;
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
    std::int64_t steps_ = 0;
};

}  // namespace guidelab
