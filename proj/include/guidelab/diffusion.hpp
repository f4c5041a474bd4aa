// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "guidelab/nn.hpp"
#include "guidelab/random.hpp"
#include "guidelab/tensor.hpp"

namespace guidelab {

/// Variance schedule over diffusion steps t = 1..T. Index t is 1-based in all
/// accessors; alpha_bar(0) is defined as 1.
struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    int num_steps() const { return static_cast<int>(betas.size()); }
    double beta(int t) const;
    double alpha(int t) const;
    double alpha_bar(int t) const;

    nlohmann::json to_json() const;
    static NoiseSchedule from_json(const nlohmann::json& doc);
};

/// Linearly spaced betas. Requires 0 < beta_start <= beta_end < 1.
NoiseSchedule make_linear_schedule(int num_steps, double beta_start, double beta_end);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, for t in [1, T].
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule);

/// Clean-sample estimate z0 = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
/// Built from differentiable ops, so gradients flow to x_t and eps.
Tensor predict_z0(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& schedule);

/// Deterministic (eta = 0) DDIM update from t to t_prev < t:
///   x_prev = sqrt(abar_prev) z0(x_t, eps_hat) + sqrt(1 - abar_prev) eps_hat.
Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const Tensor& eps_hat, const NoiseSchedule& schedule);

/// Evenly spaced, strictly decreasing visit order T = tau_K > ... > tau_1 = 1.
/// The sampler hops from each entry to the next and from 1 to 0.
std::vector<int> ddim_timesteps(int num_train_steps, int ddim_steps);

struct DenoiserConfig {
    std::size_t data_dim = 2;
    std::size_t num_classes = 2;
    std::vector<std::size_t> hidden = {128, 128, 128};
    std::size_t time_dim = 16;
    std::size_t class_dim = 8;
};

/// Fixed sinusoidal embedding, one row per entry of `steps`.
Tensor time_embedding(std::span<const int> steps, std::size_t dim);

/// Class-conditional epsilon predictor eps(x_t, t, y): an MLP with SiLU
/// activations on concat(x_t, time_embedding(t), class_embedding(y)). The
/// class table has one extra row, `unconditional_label()`, for label-free use.
class Denoiser {
  public:
    Denoiser(DenoiserConfig config, std::uint64_t seed);

    Tensor forward(const Tensor& x_t, std::span<const int> steps, std::span<const int> labels) const;

    const DenoiserConfig& config() const { return config_; }
    int unconditional_label() const { return static_cast<int>(config_.num_classes); }
    ParameterList parameters() const;
    Denoiser clone() const;

    nlohmann::json to_json(const NoiseSchedule& schedule) const;
    /// Restores a denoiser and the schedule stored in its checkpoint header.
    static Denoiser from_json(const nlohmann::json& doc, NoiseSchedule* schedule = nullptr);

  private:
    Denoiser() = default;
    DenoiserConfig config_;
    Tensor class_table_;
    Mlp net_;
};

struct SamplerConfig {
    int ddim_steps = 20;
    std::uint64_t seed = 0;
    // Only the deterministic sampler (eta = 0) is implemented.
    static constexpr double eta = 0.0;
};

/// Per-step information handed to a guidance hook.
struct StepContext {
    const Tensor& x_t;
    int t;
    int t_prev;
    const Tensor& eps;
    std::span<const int> labels;
    const NoiseSchedule& schedule;
};

/// Returns the (possibly) modified epsilon for one denoising step.
using GuidanceHook = std::function<Tensor(const StepContext&)>;

/// Any epsilon predictor: eps(x_t, t, labels). Evaluated with gradients disabled.
using EpsilonFn = std::function<Tensor(const Tensor& x_t, int t, std::span<const int> labels)>;

EpsilonFn epsilon_fn(const Denoiser& model);

/// DDIM sampling of one row per label, starting from N(0, I) drawn with the
/// config seed. A pure function of (predictor, labels, config, schedule, hook).
Tensor sample(const EpsilonFn& eps_model, std::span<const int> labels, std::size_t data_dim,
              const SamplerConfig& config, const NoiseSchedule& schedule, const GuidanceHook& hook = {});

Tensor sample(const Denoiser& model, std::span<const int> labels, const SamplerConfig& config,
              const NoiseSchedule& schedule, const GuidanceHook& hook = {});

/// One optimiser step on mean((eps_theta(x_t, t, y) - eps)^2) with t ~ U{1..T}
/// and eps ~ N(0, I) drawn from `rng`. Returns the loss. Throws TrainingError
/// on a non-finite loss.
double diffusion_train_step(Denoiser& model, Optimizer& optimizer, const Tensor& x0, std::span<const int> labels,
                            const NoiseSchedule& schedule, Rng& rng);

}  // namespace guidelab
