// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/diffusion.hpp"

#include <cmath>
#include <string>

#include "guidelab/checkpoint.hpp"
#include "guidelab/errors.hpp"

namespace guidelab {

namespace {

void check_step(const NoiseSchedule& s, int t, const char* op) {
    if (t < 1 || t > s.num_steps()) {
        throw IndexError(std::string(op) + ": step " + std::to_string(t) + " outside [1, " +
                         std::to_string(s.num_steps()) + "]");
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) + " and " +
                             shape_to_string(b.shape()));
    }
}

}  // namespace

double NoiseSchedule::beta(int t) const {
    check_step(*this, t, "beta");
    return betas[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
    check_step(*this, t, "alpha");
    return alphas[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t == 0) return 1.0;
    check_step(*this, t, "alpha_bar");
    return alpha_bars[static_cast<std::size_t>(t - 1)];
}

nlohmann::json NoiseSchedule::to_json() const { return {{"type", "explicit"}, {"betas", betas}}; }

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& doc) {
    NoiseSchedule s;
    s.betas = doc.at("betas").get<std::vector<double>>();
    if (s.betas.empty()) throw FileError("schedule: no betas");
    double running = 1.0;
    for (double b : s.betas) {
        if (!(b > 0.0 && b < 1.0)) throw FileError("schedule: beta outside (0,1)");
        s.alphas.push_back(1.0 - b);
        running *= 1.0 - b;
        s.alpha_bars.push_back(running);
    }
    return s;
}

NoiseSchedule make_linear_schedule(int num_steps, double beta_start, double beta_end) {
    if (num_steps < 1) throw ConfigError("schedule: num_steps must be positive", "num_steps");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1", "beta_start");
    }
    NoiseSchedule s;
    double running = 1.0;
    for (int i = 0; i < num_steps; ++i) {
        const double frac = num_steps == 1 ? 0.0 : static_cast<double>(i) / (num_steps - 1);
        const double b = beta_start + (beta_end - beta_start) * frac;
        s.betas.push_back(b);
        s.alphas.push_back(1.0 - b);
        running *= 1.0 - b;
        s.alpha_bars.push_back(running);
    }
    return s;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    check_step(schedule, t, "q_sample");
    check_same_shape(x0, eps, "q_sample");
    const double ab = schedule.alpha_bar(t);
    return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

Tensor predict_z0(const Tensor& x_t, int t, const Tensor& eps_pred, const NoiseSchedule& schedule) {
    check_step(schedule, t, "predict_z0");
    check_same_shape(x_t, eps_pred, "predict_z0");
    const double ab = schedule.alpha_bar(t);
    return scale(sub(x_t, scale(eps_pred, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const Tensor& eps_hat, const NoiseSchedule& schedule) {
    if (t_prev >= t || t_prev < 0) {
        throw ContractError("ddim_step: need 0 <= t_prev < t, got t=" + std::to_string(t) +
                            " t_prev=" + std::to_string(t_prev));
    }
    const Tensor z0 = predict_z0(x_t, t, eps_hat, schedule);
    const double ab_prev = schedule.alpha_bar(t_prev);
    if (t_prev == 0) return z0;
    return add(scale(z0, std::sqrt(ab_prev)), scale(eps_hat, std::sqrt(1.0 - ab_prev)));
}

std::vector<int> ddim_timesteps(int num_train_steps, int ddim_steps) {
    if (ddim_steps < 1 || ddim_steps > num_train_steps) {
        throw ConfigError("sampler: ddim_steps must lie in [1, " + std::to_string(num_train_steps) + "]", "ddim_steps");
    }
    if (ddim_steps == 1) return {num_train_steps};
    std::vector<int> seq;
    for (int j = ddim_steps - 1; j >= 0; --j) {
        const double pos = 1.0 + static_cast<double>(num_train_steps - 1) * j / (ddim_steps - 1);
        seq.push_back(static_cast<int>(std::lround(pos)));
    }
    return seq;
}

// ---------------------------------------------------------------------------

Tensor time_embedding(std::span<const int> steps, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw ContractError("time_embedding: dim must be even and positive");
    const std::size_t half = dim / 2;
    std::vector<double> out(steps.size() * dim);
    for (std::size_t r = 0; r < steps.size(); ++r) {
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
            const double arg = static_cast<double>(steps[r]) * freq;
            out[r * dim + i] = std::sin(arg);
            out[r * dim + half + i] = std::cos(arg);
        }
    }
    return Tensor::matrix(steps.size(), dim, std::move(out));
}

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(std::move(config)) {
    if (config_.data_dim == 0 || config_.num_classes == 0) throw ConfigError("denoiser: empty data or class dimension");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> table((config_.num_classes + 1) * config_.class_dim);
    for (auto& v : table) v = normal(rng);
    class_table_ = Tensor::matrix(config_.num_classes + 1, config_.class_dim, std::move(table));
    class_table_.mark_parameter();
    std::vector<std::size_t> widths{config_.data_dim + config_.time_dim + config_.class_dim};
    widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
    widths.push_back(config_.data_dim);
    net_ = Mlp(widths, Activation::SiLU, rng);
}

Tensor Denoiser::forward(const Tensor& x_t, std::span<const int> steps, std::span<const int> labels) const {
    if (x_t.rank() != 2 || x_t.cols() != config_.data_dim) {
        throw DimensionError("denoiser: input " + shape_to_string(x_t.shape()) + " does not match data dim " +
                             std::to_string(config_.data_dim));
    }
    if (steps.size() != x_t.rows() || labels.size() != x_t.rows()) {
        throw DimensionError("denoiser: need one step and one label per row");
    }
    const Tensor temb = time_embedding(steps, config_.time_dim);
    const Tensor cemb = gather(class_table_, labels);
    return net_.forward(concat({x_t, temb, cemb}, 1));
}

ParameterList Denoiser::parameters() const {
    ParameterList out{{"class_embedding", class_table_}};
    net_.append_parameters("mlp", out);
    return out;
}

Denoiser Denoiser::clone() const {
    Denoiser copy;
    copy.config_ = config_;
    copy.class_table_ = class_table_.detach();
    copy.class_table_.mark_parameter();
    copy.net_ = net_.clone();
    return copy;
}

nlohmann::json Denoiser::to_json(const NoiseSchedule& schedule) const {
    return {{"format", kCheckpointFormat},
            {"kind", "denoiser"},
            {"hyperparameters",
             {{"data_dim", config_.data_dim},
              {"num_classes", config_.num_classes},
              {"hidden", config_.hidden},
              {"time_dim", config_.time_dim},
              {"class_dim", config_.class_dim}}},
            {"schedule", schedule.to_json()},
            {"parameters", parameters_to_json(parameters())}};
}

Denoiser Denoiser::from_json(const nlohmann::json& doc, NoiseSchedule* schedule) {
    check_checkpoint_header(doc, "denoiser");
    const auto& h = doc.at("hyperparameters");
    DenoiserConfig cfg;
    cfg.data_dim = h.at("data_dim").get<std::size_t>();
    cfg.num_classes = h.at("num_classes").get<std::size_t>();
    cfg.hidden = h.at("hidden").get<std::vector<std::size_t>>();
    cfg.time_dim = h.at("time_dim").get<std::size_t>();
    cfg.class_dim = h.at("class_dim").get<std::size_t>();
    Denoiser model(cfg, 0);
    load_parameters(doc, model.parameters());
    if (schedule != nullptr) *schedule = NoiseSchedule::from_json(doc.at("schedule"));
    return model;
}

// ---------------------------------------------------------------------------

EpsilonFn epsilon_fn(const Denoiser& model) {
    return [&model](const Tensor& x_t, int t, std::span<const int> labels) {
        const std::vector<int> steps(x_t.rows(), t);
        return model.forward(x_t, steps, labels);
    };
}

Tensor sample(const EpsilonFn& eps_model, std::span<const int> labels, std::size_t data_dim,
              const SamplerConfig& config, const NoiseSchedule& schedule, const GuidanceHook& hook) {
    if (labels.empty()) throw ContractError("sample: no labels requested");
    const auto seq = ddim_timesteps(schedule.num_steps(), config.ddim_steps);
    Rng rng(config.seed);
    Tensor x = standard_normal({labels.size(), data_dim}, rng);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const int t = seq[i];
        const int t_prev = i + 1 < seq.size() ? seq[i + 1] : 0;
        Tensor eps;
        {
            GradModeGuard no_grad(GradMode::Disabled);
            eps = eps_model(x, t, labels);
        }
        if (hook) eps = hook(StepContext{x, t, t_prev, eps, labels, schedule});
        GradModeGuard no_grad(GradMode::Disabled);
        x = ddim_step(x, t, t_prev, eps, schedule);
    }
    return x.detach();
}

Tensor sample(const Denoiser& model, std::span<const int> labels, const SamplerConfig& config,
              const NoiseSchedule& schedule, const GuidanceHook& hook) {
    for (int y : labels) {
        if (y < 0 || y > model.unconditional_label()) {
            throw IndexError("sample: label " + std::to_string(y) + " outside the class table");
        }
    }
    return sample(epsilon_fn(model), labels, model.config().data_dim, config, schedule, hook);
}

double diffusion_train_step(Denoiser& model, Optimizer& optimizer, const Tensor& x0, std::span<const int> labels,
                            const NoiseSchedule& schedule, Rng& rng) {
    const std::size_t n = x0.rows(), d = x0.cols();
    std::uniform_int_distribution<int> step_dist(1, schedule.num_steps());
    std::vector<int> steps(n);
    for (auto& t : steps) t = step_dist(rng);
    const Tensor eps = standard_normal({n, d}, rng);

    std::vector<double> noisy(n * d);
    const auto xv = x0.values();
    const auto ev = eps.values();
    for (std::size_t r = 0; r < n; ++r) {
        const double ab = schedule.alpha_bar(steps[r]);
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        for (std::size_t c = 0; c < d; ++c) noisy[r * d + c] = a * xv[r * d + c] + b * ev[r * d + c];
    }
    const Tensor x_t = Tensor::matrix(n, d, std::move(noisy));
    const Tensor loss = mse(model.forward(x_t, steps, labels), eps);
    const double value = loss.item();
    if (!std::isfinite(value)) {
        throw TrainingError("diffusion_train_step: non-finite loss at optimizer step " +
                            std::to_string(optimizer.steps_taken() + 1));
    }
    backward(loss);
    optimizer.step();
    return value;
}

}  // namespace guidelab
