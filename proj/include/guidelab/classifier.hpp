// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "guidelab/nn.hpp"
#include "guidelab/tensor.hpp"

namespace guidelab {

struct ClassifierConfig {
    std::size_t input_dim = 2;
    std::size_t num_classes = 2;
    std::vector<std::size_t> hidden = {64, 64};
};

/// Softmax classifier f(y|x): ReLU MLP with a single head over every class
/// of the scenario.
class Classifier {
  public:
    Classifier(ClassifierConfig config, std::uint64_t seed);

    Tensor logits(const Tensor& x) const;
    /// Penultimate-layer activations.
    Tensor features(const Tensor& x) const;
    Tensor head(const Tensor& features) const;

    const ClassifierConfig& config() const { return config_; }
    std::size_t num_classes() const { return config_.num_classes; }
    std::size_t feature_dim() const { return config_.hidden.back(); }
    ParameterList parameters() const;
    Classifier clone() const;

    nlohmann::json to_json() const;
    static Classifier from_json(const nlohmann::json& doc);

  private:
    ClassifierConfig config_;
    Mlp net_;
};

/// One cross-entropy step (mean over the batch). Throws TrainingError on NaN.
double classifier_train_step(Classifier& model, Optimizer& optimizer, const Tensor& x, std::span<const int> labels);

/// Argmax over `classes` of one row of logits; ties go to the lowest class id.
/// Throws ContractError when `classes` is empty.
int restricted_argmax(std::span<const double> logits_row, std::span<const int> classes);

/// Argmax over all classes, per row.
std::vector<int> predict(const Classifier& model, const Tensor& x);
/// Argmax restricted to `classes`, per row.
std::vector<int> predict_restricted(const Classifier& model, const Tensor& x, std::span<const int> classes);
/// Softmax probabilities, [rows, num_classes].
Tensor probabilities(const Classifier& model, const Tensor& x);
/// Softmax probability of `classes[r]` for each row r.
std::vector<double> confidence(const Classifier& model, const Tensor& x, std::span<const int> classes);
double accuracy(const Classifier& model, const Tensor& x, std::span<const int> labels);

struct ProbeConfig {
    double epsilon = 0.1;
};

/// x* = x - epsilon * sign(grad_x CE(f(x), y)) with y the argmax of f over
/// `current_classes`. sign(0) = 0.
Tensor fgsm_perturb(const Classifier& model, const Tensor& x_hat, const ProbeConfig& probe,
                    std::span<const int> current_classes);

struct BoundaryStats {
    double flip_rate = 0.0;
    double mean_conf_prev = 0.0;
    double mean_conf_curr = 0.0;
    std::size_t count = 0;
};

/// Fraction of samples whose current-classifier prediction changes under
/// fgsm_perturb, plus the mean previous- and current-classifier softmax
/// confidence on each sample's source label.
BoundaryStats boundary_flip_rate(const Classifier& current, const Classifier& previous, const Tensor& samples,
                                 std::span<const int> source_labels, const ProbeConfig& probe,
                                 std::span<const int> current_classes);

}  // namespace guidelab
