// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/nn.hpp"

#include <cmath>
#include <set>

#include "guidelab/errors.hpp"

namespace guidelab {

void check_unique_names(const ParameterList& params) {
    std::set<std::string> names;
    for (const auto& p : params) {
        if (!names.insert(p.name).second) throw ContractError("duplicate parameter name '" + p.name + "'");
    }
}

Tensor activate(const Tensor& x, Activation act) { return act == Activation::ReLU ? relu(x) : silu(x); }

Linear::Linear(std::size_t in, std::size_t out, double gain, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(in)));
    std::vector<double> w(in * out);
    for (auto& v : w) v = normal(rng);
    weight_ = Tensor::matrix(in, out, std::move(w));
    weight_.mark_parameter();
    bias_ = Tensor::zeros({out});
    bias_.mark_parameter();
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight_), bias_); }

void Linear::append_parameters(const std::string& prefix, ParameterList& out) const {
    out.push_back({prefix + ".weight", weight_});
    out.push_back({prefix + ".bias", bias_});
}

Linear Linear::clone() const {
    Linear copy;
    copy.weight_ = weight_.detach();
    copy.weight_.mark_parameter();
    copy.bias_ = bias_.detach();
    copy.bias_.mark_parameter();
    return copy;
}

Mlp::Mlp(const std::vector<std::size_t>& widths, Activation act, std::mt19937_64& rng) : widths_(widths), act_(act) {
    if (widths.size() < 2) throw ContractError("Mlp: need at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const bool last = i + 2 == widths.size();
        layers_.emplace_back(widths[i], widths[i + 1], last ? 1.0 : std::sqrt(2.0), rng);
    }
}

Tensor Mlp::features(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = activate(layers_[i].forward(h), act_);
    return h;
}

Tensor Mlp::head(const Tensor& features) const { return layers_.back().forward(features); }

Tensor Mlp::forward(const Tensor& x) const { return head(features(x)); }

void Mlp::append_parameters(const std::string& prefix, ParameterList& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].append_parameters(prefix + std::to_string(i), out);
}

Mlp Mlp::clone() const {
    Mlp copy;
    copy.widths_ = widths_;
    copy.act_ = act_;
    for (const auto& l : layers_) copy.layers_.push_back(l.clone());
    return copy;
}

// ---------------------------------------------------------------------------

Optimizer::Optimizer(OptimizerConfig config, ParameterList params) : config_(config), params_(std::move(params)) {
    if (!(config_.learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be positive", "learning_rate");
    if (!(config_.beta1 > 0.0 && config_.beta1 < 1.0) || !(config_.beta2 > 0.0 && config_.beta2 < 1.0)) {
        throw ConfigError("optimizer: betas must lie in (0,1)", "beta1");
    }
    if (config_.weight_decay < 0.0) throw ConfigError("optimizer: weight decay must be nonnegative", "weight_decay");
    check_unique_names(params_);
    for (const auto& p : params_) {
        first_moment_.emplace_back(p.tensor.size(), 0.0);
        second_moment_.emplace_back(config_.kind == OptimizerKind::AdamW ? p.tensor.size() : 0, 0.0);
    }
}

void Optimizer::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ConfigError("optimizer: learning rate must be positive", "learning_rate");
    config_.learning_rate = lr;
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.tensor.clear_grad();
}

void Optimizer::step() {
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) throw ContractError("optimizer_step: parameter '" + p.name + "' has no gradient");
    }
    ++steps_;
    const double lr = config_.learning_rate;
    const double wd = config_.weight_decay;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& param = params_[k].tensor;
        auto values = param.mutable_values();
        auto grad = param.grad();
        auto& m = first_moment_[k];
        if (config_.kind == OptimizerKind::SGD) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = grad[i] + wd * values[i];
                m[i] = config_.momentum * m[i] + g;
                values[i] -= lr * m[i];
            }
        } else {
            auto& v = second_moment_[k];
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = grad[i];
                values[i] -= lr * wd * values[i];
                m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
                v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                values[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
            }
        }
        param.clear_grad();
    }
}

}  // namespace guidelab
