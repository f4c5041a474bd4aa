// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/guidance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "guidelab/errors.hpp"

namespace guidelab {

std::string_view variant_name(GuidanceVariant v) noexcept {
    switch (v) {
        case GuidanceVariant::None:
            return "NONE";
        case GuidanceVariant::Guide:
            return "GUIDE";
        case GuidanceVariant::PrevPlus:
            return "PREV_PLUS";
        case GuidanceVariant::PrevMinus:
            return "PREV_MINUS";
        case GuidanceVariant::CurrMinus:
            return "CURR_MINUS";
    }
    return "NONE";
}

std::vector<GuidanceVariant> all_variants() {
    return {GuidanceVariant::None, GuidanceVariant::Guide, GuidanceVariant::PrevPlus, GuidanceVariant::PrevMinus,
            GuidanceVariant::CurrMinus};
}

GuidanceVariant parse_variant(std::string_view name) {
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto v : all_variants()) {
        if (variant_name(v) == upper) return v;
    }
    throw ConfigError("unknown guidance variant '" + std::string(name) + "'", "variant");
}

Tensor classifier_input_gradient(const Classifier& classifier, const Tensor& z0_hat, std::span<const int> targets) {
    for (int y : targets) {
        if (y < 0 || static_cast<std::size_t>(y) >= classifier.num_classes()) {
            throw ContractError("guidance: target class " + std::to_string(y) + " out of range");
        }
    }
    GradModeGuard inputs_only(GradMode::InputsOnly);
    Tensor z = z0_hat.detach(true);
    backward(cross_entropy(classifier.logits(z), targets, Reduction::Sum));
    return Tensor::from(z.shape(), z.grad_copy());
}

Tensor guidance_gradient(const Tensor& z0_hat, int t, const Classifier& classifier, std::span<const int> targets,
                         const NoiseSchedule& schedule) {
    const Tensor g = classifier_input_gradient(classifier, z0_hat, targets);
    GradModeGuard no_grad(GradMode::Disabled);
    return scale(g, 1.0 / std::sqrt(schedule.alpha_bar(t)));
}

Tensor guidance_gradient_through_denoiser(const Denoiser& denoiser, const Tensor& x_t, int t,
                                          std::span<const int> labels, const Classifier& classifier,
                                          std::span<const int> targets, const NoiseSchedule& schedule) {
    for (int y : targets) {
        if (y < 0 || static_cast<std::size_t>(y) >= classifier.num_classes()) {
            throw ContractError("guidance: target class " + std::to_string(y) + " out of range");
        }
    }
    GradModeGuard inputs_only(GradMode::InputsOnly);
    Tensor x = x_t.detach(true);
    const std::vector<int> steps(x.rows(), t);
    const Tensor eps = denoiser.forward(x, steps, labels);
    const Tensor z0 = predict_z0(x, t, eps, schedule);
    backward(cross_entropy(classifier.logits(z0), targets, Reduction::Sum));
    return Tensor::from(x.shape(), x.grad_copy());
}

Tensor guidance_shift(const Tensor& gradient, double scale_value, int sign) {
    if (sign != 1 && sign != -1) throw ContractError("guidance: sign must be +1 or -1");
    if (scale_value < 0.0) throw ContractError("guidance: scale must be nonnegative");
    GradModeGuard no_grad(GradMode::Disabled);
    return scale(gradient, static_cast<double>(sign) * scale_value);
}

Tensor guide_epsilon(const Tensor& eps, const Tensor& x_t, int t, const Tensor& z0_hat, const Classifier& classifier,
                     std::span<const int> targets, double scale_value, int sign, const NoiseSchedule& schedule) {
    if (eps.shape() != x_t.shape() || z0_hat.shape() != x_t.shape()) {
        throw DimensionError("guide_epsilon: eps, x_t and z0_hat must share a shape");
    }
    const Tensor shift = guidance_shift(guidance_gradient(z0_hat, t, classifier, targets, schedule), scale_value, sign);
    GradModeGuard no_grad(GradMode::Disabled);
    return add(eps, shift);
}

std::vector<int> select_target_classes(const Classifier& classifier, const Tensor& z0_hat,
                                       std::span<const int> current_classes) {
    if (current_classes.empty()) throw ContractError("select_target_class: empty candidate set");
    return predict_restricted(classifier, z0_hat, current_classes);
}

GuidanceHook make_rehearsal_hook(const RehearsalModels& models, std::span<const int> current_classes,
                                 const GuidanceConfig& config) {
    if (config.variant == GuidanceVariant::None) return {};
    if (config.scale < 0.0) throw ConfigError("guidance: scale must be nonnegative", "scale");

    const Classifier* classifier = nullptr;
    int sign = 1;
    switch (config.variant) {
        case GuidanceVariant::Guide:
            classifier = models.current_classifier;
            break;
        case GuidanceVariant::PrevPlus:
            classifier = models.previous_classifier;
            break;
        case GuidanceVariant::PrevMinus:
            classifier = models.previous_classifier;
            sign = -1;
            break;
        case GuidanceVariant::CurrMinus:
            classifier = models.current_classifier;
            sign = -1;
            break;
        case GuidanceVariant::None:
            break;
    }
    if (classifier == nullptr) {
        throw ContractError("guidance: variant " + std::string(variant_name(config.variant)) +
                            " needs a classifier snapshot that was not provided");
    }
    if (config.variant == GuidanceVariant::Guide && current_classes.empty()) {
        throw ContractError("guidance: GUIDE needs the current task's classes");
    }

    const Denoiser* denoiser = &models.previous_diffusion;
    std::vector<int> candidates(current_classes.begin(), current_classes.end());
    const bool guide = config.variant == GuidanceVariant::Guide;
    const double s = config.scale;
    const bool through = config.backprop_denoiser;

    return [=](const StepContext& ctx) -> Tensor {
        Tensor z0;
        {
            GradModeGuard no_grad(GradMode::Disabled);
            z0 = predict_z0(ctx.x_t, ctx.t, ctx.eps, ctx.schedule);
        }
        std::vector<int> targets = guide ? select_target_classes(*classifier, z0, candidates)
                                         : std::vector<int>(ctx.labels.begin(), ctx.labels.end());
        const Tensor grad = through ? guidance_gradient_through_denoiser(*denoiser, ctx.x_t, ctx.t, ctx.labels,
                                                                         *classifier, targets, ctx.schedule)
                                    : guidance_gradient(z0, ctx.t, *classifier, targets, ctx.schedule);
        GradModeGuard no_grad(GradMode::Disabled);
        return add(ctx.eps, guidance_shift(grad, s, sign));
    };
}

RehearsalBatch sample_rehearsal(const RehearsalModels& models, std::span<const int> source_labels,
                                std::span<const int> current_classes, const GuidanceConfig& config,
                                const SamplerConfig& sampler) {
    const GuidanceHook hook = make_rehearsal_hook(models, current_classes, config);
    RehearsalBatch batch;
    batch.x = sample(models.previous_diffusion, source_labels, sampler, models.schedule, hook);
    batch.labels.assign(source_labels.begin(), source_labels.end());
    return batch;
}

Tensor dual_guided_sample(const Denoiser& unconditional, const NoiseSchedule& schedule, const Classifier& classifier,
                          const DualGuidanceConfig& config, std::size_t count, const SamplerConfig& sampler) {
    if (config.c1 == config.c2) throw ContractError("dual guidance: c1 and c2 must differ");
    if (config.s1 < 0.0 || config.s2 < 0.0) throw ContractError("dual guidance: scales must be nonnegative");
    const std::vector<int> labels(count, unconditional.unconditional_label());
    const std::vector<int> c1(count, config.c1), c2(count, config.c2);
    GuidanceHook hook = [&](const StepContext& ctx) -> Tensor {
        Tensor z0;
        {
            GradModeGuard no_grad(GradMode::Disabled);
            z0 = predict_z0(ctx.x_t, ctx.t, ctx.eps, ctx.schedule);
        }
        const Tensor g1 = guidance_gradient(z0, ctx.t, classifier, c1, ctx.schedule);
        const Tensor g2 = guidance_gradient(z0, ctx.t, classifier, c2, ctx.schedule);
        GradModeGuard no_grad(GradMode::Disabled);
        return add(add(ctx.eps, guidance_shift(g1, config.s1, 1)), guidance_shift(g2, config.s2, 1));
    };
    return sample(unconditional, labels, sampler, schedule, hook);
}

}  // namespace guidelab
