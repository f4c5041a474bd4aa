// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/classifier.hpp"

#include <cmath>
#include <string>

#include "guidelab/checkpoint.hpp"
#include "guidelab/errors.hpp"
#include "guidelab/random.hpp"

namespace guidelab {

Classifier::Classifier(ClassifierConfig config, std::uint64_t seed) : config_(std::move(config)) {
    if (config_.num_classes < 2) throw ConfigError("classifier: need at least two classes", "classes");
    if (config_.hidden.empty()) throw ConfigError("classifier: need at least one hidden layer", "classifier_hidden");
    Rng rng(seed);
    std::vector<std::size_t> widths{config_.input_dim};
    widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
    widths.push_back(config_.num_classes);
    net_ = Mlp(widths, Activation::ReLU, rng);
}

Tensor Classifier::logits(const Tensor& x) const {
    if (x.rank() != 2 || x.cols() != config_.input_dim) {
        throw DimensionError("classifier: input " + shape_to_string(x.shape()) + " does not match input dim " +
                             std::to_string(config_.input_dim));
    }
    return net_.forward(x);
}

Tensor Classifier::features(const Tensor& x) const { return net_.features(x); }
Tensor Classifier::head(const Tensor& features) const { return net_.head(features); }

ParameterList Classifier::parameters() const {
    ParameterList out;
    net_.append_parameters("mlp", out);
    return out;
}

Classifier Classifier::clone() const {
    Classifier copy = *this;
    copy.net_ = net_.clone();
    return copy;
}

nlohmann::json Classifier::to_json() const {
    return {{"format", kCheckpointFormat},
            {"kind", "classifier"},
            {"hyperparameters",
             {{"input_dim", config_.input_dim}, {"num_classes", config_.num_classes}, {"hidden", config_.hidden}}},
            {"parameters", parameters_to_json(parameters())}};
}

Classifier Classifier::from_json(const nlohmann::json& doc) {
    check_checkpoint_header(doc, "classifier");
    const auto& h = doc.at("hyperparameters");
    ClassifierConfig cfg;
    cfg.input_dim = h.at("input_dim").get<std::size_t>();
    cfg.num_classes = h.at("num_classes").get<std::size_t>();
    cfg.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    Classifier model(cfg, 0);
    load_parameters(doc, model.parameters());
    return model;
}

double classifier_train_step(Classifier& model, Optimizer& optimizer, const Tensor& x, std::span<const int> labels) {
    const Tensor loss = cross_entropy(model.logits(x), labels);
    const double value = loss.item();
    if (!std::isfinite(value)) {
        throw TrainingError("classifier_train_step: non-finite loss at optimizer step " +
                            std::to_string(optimizer.steps_taken() + 1));
    }
    backward(loss);
    optimizer.step();
    return value;
}

int restricted_argmax(std::span<const double> logits_row, std::span<const int> classes) {
    if (classes.empty()) throw ContractError("restricted_argmax: empty class set");
    int best = -1;
    double best_value = 0.0;
    for (int c : classes) {
        if (c < 0 || static_cast<std::size_t>(c) >= logits_row.size()) {
            throw ContractError("restricted_argmax: class " + std::to_string(c) + " out of range");
        }
        const double v = logits_row[static_cast<std::size_t>(c)];
        if (best < 0 || v > best_value || (v == best_value && c < best)) {
            best = c;
            best_value = v;
        }
    }
    return best;
}

std::vector<int> predict_restricted(const Classifier& model, const Tensor& x, std::span<const int> classes) {
    GradModeGuard no_grad(GradMode::Disabled);
    const Tensor out = model.logits(x);
    const auto v = out.values();
    const std::size_t k = model.num_classes();
    std::vector<int> pred(x.rows());
    for (std::size_t r = 0; r < pred.size(); ++r) pred[r] = restricted_argmax(v.subspan(r * k, k), classes);
    return pred;
}

std::vector<int> predict(const Classifier& model, const Tensor& x) {
    std::vector<int> all(model.num_classes());
    for (std::size_t c = 0; c < all.size(); ++c) all[c] = static_cast<int>(c);
    return predict_restricted(model, x, all);
}

Tensor probabilities(const Classifier& model, const Tensor& x) {
    GradModeGuard no_grad(GradMode::Disabled);
    return softmax(model.logits(x), 1);
}

std::vector<double> confidence(const Classifier& model, const Tensor& x, std::span<const int> classes) {
    if (classes.size() != x.rows()) throw DimensionError("confidence: need one class per row");
    const Tensor p = probabilities(model, x);
    std::vector<double> out(classes.size());
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = p.at(r, static_cast<std::size_t>(classes[r]));
    return out;
}

double accuracy(const Classifier& model, const Tensor& x, std::span<const int> labels) {
    if (labels.size() != x.rows()) throw DimensionError("accuracy: need one label per row");
    const auto pred = predict(model, x);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

Tensor fgsm_perturb(const Classifier& model, const Tensor& x_hat, const ProbeConfig& probe,
                    std::span<const int> current_classes) {
    if (!(probe.epsilon > 0.0)) throw ContractError("fgsm_perturb: epsilon must be positive");
    const auto targets = predict_restricted(model, x_hat, current_classes);
    GradModeGuard inputs_only(GradMode::InputsOnly);
    Tensor x = x_hat.detach(true);
    backward(cross_entropy(model.logits(x), targets, Reduction::Sum));
    const auto g = x.grad();
    const auto v = x_hat.values();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double sign = g[i] > 0.0 ? 1.0 : g[i] < 0.0 ? -1.0 : 0.0;
        out[i] = v[i] - probe.epsilon * sign;
    }
    return Tensor::from(x_hat.shape(), std::move(out));
}

BoundaryStats boundary_flip_rate(const Classifier& current, const Classifier& previous, const Tensor& samples,
                                 std::span<const int> source_labels, const ProbeConfig& probe,
                                 std::span<const int> current_classes) {
    if (samples.rows() == 0 || source_labels.empty()) throw ContractError("boundary_flip_rate: empty batch");
    if (source_labels.size() != samples.rows()) throw DimensionError("boundary_flip_rate: need one label per sample");
    const Tensor perturbed = fgsm_perturb(current, samples, probe, current_classes);
    const auto before = predict(current, samples);
    const auto after = predict(current, perturbed);
    const auto conf_prev = confidence(previous, samples, source_labels);
    const auto conf_curr = confidence(current, samples, source_labels);
    BoundaryStats stats;
    stats.count = before.size();
    const auto n = static_cast<double>(stats.count);
    for (std::size_t i = 0; i < before.size(); ++i) {
        stats.flip_rate += before[i] != after[i] ? 1.0 : 0.0;
        stats.mean_conf_prev += conf_prev[i];
        stats.mean_conf_curr += conf_curr[i];
    }
    stats.flip_rate /= n;
    stats.mean_conf_prev /= n;
    stats.mean_conf_curr /= n;
    return stats;
}

}  // namespace guidelab
