// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "guidelab/classifier.hpp"
#include "guidelab/diffusion.hpp"

namespace guidelab {

// Rehearsal-sampling rules. Each one adds sign * s * grad_{x_t} CE(f(z0), y)
// to the denoiser's epsilon at every step:
//   NONE        no guidance
//   GUIDE       current classifier, toward the current-task class with the
//               highest logit on z0 (re-selected every step), sign +1
//   PREV_PLUS   previous classifier, toward the source class, sign +1
//   PREV_MINUS  previous classifier, away from the source class, sign -1
//   CURR_MINUS  current classifier, away from the source class, sign -1
enum class GuidanceVariant { None, Guide, PrevPlus, PrevMinus, CurrMinus };

std::string_view variant_name(GuidanceVariant v) noexcept;
/// Accepts the names printed by variant_name (case-insensitive).
GuidanceVariant parse_variant(std::string_view name);
std::vector<GuidanceVariant> all_variants();

struct GuidanceConfig {
    GuidanceVariant variant = GuidanceVariant::None;
    double scale = 0.0;
    /// When true, grad_{x_t} also differentiates through the denoiser inside
    /// z0(x_t). The default treats epsilon as a constant.
    bool backprop_denoiser = false;
};

/// grad_{z0} of sum_r CE(f(z0_r), targets_r). Classifier parameters are not touched.
Tensor classifier_input_gradient(const Classifier& classifier, const Tensor& z0_hat, std::span<const int> targets);

/// grad_{x_t} with epsilon held constant: grad_{z0} / sqrt(abar_t).
Tensor guidance_gradient(const Tensor& z0_hat, int t, const Classifier& classifier, std::span<const int> targets,
                         const NoiseSchedule& schedule);

/// grad_{x_t} of the full composition CE(f(z0(x_t, eps_theta(x_t)))).
Tensor guidance_gradient_through_denoiser(const Denoiser& denoiser, const Tensor& x_t, int t,
                                          std::span<const int> labels, const Classifier& classifier,
                                          std::span<const int> targets, const NoiseSchedule& schedule);

/// The additive epsilon correction sign * scale * gradient.
Tensor guidance_shift(const Tensor& gradient, double scale, int sign);

/// eps + sign * scale * grad_{x_t} CE(f(z0_hat), target) (stopped-gradient form).
/// `targets` holds one class per row. sign must be +1 or -1.
Tensor guide_epsilon(const Tensor& eps, const Tensor& x_t, int t, const Tensor& z0_hat, const Classifier& classifier,
                     std::span<const int> targets, double scale, int sign, const NoiseSchedule& schedule);

/// Per-row argmax of the classifier over `current_classes` on z0_hat; ties go
/// to the lowest class id.
std::vector<int> select_target_classes(const Classifier& classifier, const Tensor& z0_hat,
                                       std::span<const int> current_classes);

/// Everything rehearsal sampling reads. All models are read-only.
struct RehearsalModels {
    const Denoiser& previous_diffusion;
    const NoiseSchedule& schedule;
    const Classifier* previous_classifier = nullptr;
    const Classifier* current_classifier = nullptr;
};

struct RehearsalBatch {
    Tensor x;
    /// Always the requested source classes, whatever the guidance did.
    std::vector<int> labels;
};

/// Builds the per-step hook implementing `config` for the given models.
GuidanceHook make_rehearsal_hook(const RehearsalModels& models, std::span<const int> current_classes,
                                 const GuidanceConfig& config);

/// Draws one rehearsal sample per entry of `source_labels` from the frozen
/// previous denoiser, guided according to `config`.
RehearsalBatch sample_rehearsal(const RehearsalModels& models, std::span<const int> source_labels,
                                std::span<const int> current_classes, const GuidanceConfig& config,
                                const SamplerConfig& sampler);

struct DualGuidanceConfig {
    int c1 = 0;  // class the denoiser was trained on
    int c2 = 1;  // class the denoiser never saw
    double s1 = 10.0;
    double s2 = 10.0;
};

/// Unconditional sampling with eps + s1 grad CE(., c1) + s2 grad CE(., c2).
Tensor dual_guided_sample(const Denoiser& unconditional, const NoiseSchedule& schedule, const Classifier& classifier,
                          const DualGuidanceConfig& config, std::size_t count, const SamplerConfig& sampler);

}  // namespace guidelab
