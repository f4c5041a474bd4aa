// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "guidelab/classifier.hpp"
#include "guidelab/data.hpp"
#include "guidelab/diffusion.hpp"
#include "guidelab/guidance.hpp"
#include "guidelab/metrics.hpp"

namespace guidelab {

/// Generation interval meaning "build the rehearsal cache once per task".
inline constexpr std::size_t kRegenerateOnce = std::numeric_limits<std::size_t>::max();

struct TrainingConfig {
    std::size_t classifier_steps = 1000;     // N_c
    std::size_t diffusion_steps = 3000;      // N_d
    std::size_t generation_interval = 10;    // N_g, or kRegenerateOnce
    std::size_t batch_size = 60;             // B
    std::size_t diffusion_batch_size = 128;
    OptimizerConfig classifier_optimizer{OptimizerKind::AdamW, 1e-3};
    OptimizerConfig diffusion_optimizer{OptimizerKind::AdamW, 2e-3};

    std::vector<std::size_t> classifier_hidden = {64, 64};
    std::vector<std::size_t> denoiser_hidden = {64, 64, 64};
    std::size_t time_dim = 16;
    std::size_t class_dim = 8;
    int diffusion_timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    /// false gives plain fine-tuning: no generator is sampled at all.
    bool replay = true;
    /// The last task's diffusion model never feeds a classifier; skipping it
    /// leaves the accuracy matrix unchanged.
    bool train_final_diffusion = true;
    GuidanceConfig guidance;
    SamplerConfig sampler;
    std::uint64_t seed = 0;
    std::size_t loss_log_interval = 50;

    /// Throws ConfigError naming the offending key.
    void validate() const;
    NoiseSchedule schedule() const;
    nlohmann::json to_json() const;
};

/// One classifier being trained through the scenario. Several arms can share
/// a single diffusion chain because diffusion training never reads the
/// classifier.
struct ClassifierArm {
    std::string name;
    GuidanceConfig guidance;
    bool replay = true;
};

struct TaskLog {
    std::size_t task = 0;
    std::vector<double> classifier_loss;  // mean loss per logging window
    std::vector<double> diffusion_loss;
    std::size_t rehearsal_generations = 0;
    std::size_t diffusion_dataset_size = 0;
    double classifier_seconds = 0.0;
    double rehearsal_seconds = 0.0;  // sampling time inside the classifier phase
    double diffusion_seconds = 0.0;
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::string arm;
    std::string status = "complete";
    std::vector<std::vector<int>> task_classes;
    AccuracyMatrix accuracy;
    std::vector<TaskLog> tasks;
    /// Final rehearsal cache of each task i > 1, when archiving is enabled.
    std::vector<RehearsalBatch> archived_rehearsal;
    nlohmann::json config;

    std::optional<double> final_accuracy() const;
    std::optional<double> final_forgetting() const;
    double total_seconds() const;
    /// Wall-clock fields are left out unless `include_timing`, so records of
    /// identical runs are byte-identical.
    nlohmann::json to_json(bool include_timing) const;
    void write_accuracy_csv(std::ostream& out) const;
};

struct RunOptions {
    /// Writes classifier_<arm>_task<i>.json and denoiser_task<i>.json here.
    std::optional<std::filesystem::path> checkpoint_dir;
    bool archive_samples = false;
    /// Called after every task with the records so far (partial on failure).
    std::function<void(const std::vector<RunRecord>&)> on_progress;
};

// ---------------------------------------------------------------------------
// Protocol pieces

/// Per-class counts for one classifier batch. Every seen class gets
/// floor(B / n_seen) samples; the remainder goes to the current classes in
/// ascending id order, wrapping around.
struct BatchPlan {
    std::size_t per_previous_class = 0;
    std::vector<std::pair<int, std::size_t>> real;  // (class, count), ascending class
    std::size_t rehearsal_total(std::size_t n_previous) const { return per_previous_class * n_previous; }
};
BatchPlan plan_balanced_batch(std::size_t batch_size, std::span<const int> previous_classes,
                              std::span<const int> current_classes);

struct Batch {
    Tensor x;
    std::vector<int> labels;
};

/// Real rows drawn with replacement per class from `real`, followed by every
/// row of `cache`. Throws ProtocolError when previous classes exist but the
/// cache is missing or empty.
Batch build_balanced_batch(const Dataset& real, const std::vector<std::vector<std::size_t>>& rows_by_class,
                           const RehearsalBatch* cache, const BatchPlan& plan,
                           std::span<const int> previous_classes, Rng& rng);

/// Row indices of `data` grouped by label, for labels below `num_classes`.
std::vector<std::vector<std::size_t>> index_by_class(const Dataset& data, std::size_t num_classes);

struct RehearsalRequest {
    std::span<const int> previous_classes;
    std::span<const int> current_classes;
    std::size_t per_class = 0;
    std::size_t task = 0;
    std::size_t generation = 0;
};

/// Fresh rehearsal samples: `per_class` rows of each previous class, drawn
/// with a sampler seed derived from (run seed, task, generation).
RehearsalBatch refresh_rehearsal_cache(const RehearsalModels& models, const RehearsalRequest& request,
                                       const TrainingConfig& config, const GuidanceConfig& guidance);

/// Unguided samples of the previous classes, as many as all earlier real
/// training sets together, split evenly over the classes (remainder to the
/// lowest ids), followed by task i's real training data. For i = 1 this is
/// just D_1.
Dataset build_diffusion_dataset(const Denoiser* previous, const NoiseSchedule& schedule, const Scenario& scenario,
                                std::size_t task, const TrainingConfig& config);

/// N_d optimizer steps on `data` starting from the current weights.
void train_diffusion(Denoiser& model, const Dataset& data, const NoiseSchedule& schedule,
                     const TrainingConfig& config, std::size_t task, TaskLog& log);

struct PreviousModels {
    const Denoiser* diffusion = nullptr;
    const Classifier* classifier = nullptr;
    const NoiseSchedule* schedule = nullptr;
};

/// N_c classifier steps on task `task` (1-based). For task > 1 with replay,
/// the rehearsal cache is regenerated before batches 1, 1 + N_g, 1 + 2 N_g, ...
/// Returns the last cache (empty for task 1 or without replay).
RehearsalBatch train_task_classifier(Classifier& classifier, const Scenario& scenario, std::size_t task,
                                     const PreviousModels& previous, const TrainingConfig& config,
                                     const ClassifierArm& arm, TaskLog& log);

/// Accuracy of `classifier` (argmax over all classes) on each test split
/// 1..task, written into column `task` of the matrix.
void evaluate_tasks(const Classifier& classifier, const Scenario& scenario, std::size_t task, AccuracyMatrix& m);

/// The full protocol for several classifier arms sharing one diffusion chain.
std::vector<RunRecord> run_scenario_arms(const Scenario& scenario, const TrainingConfig& config,
                                         std::span<const ClassifierArm> arms, const RunOptions& options = {});

/// The full protocol with the guidance and replay settings of `config`.
RunRecord run_scenario(const Scenario& scenario, const TrainingConfig& config, const RunOptions& options = {});

/// The diffusion half of the protocol on its own: tasks 1..`tasks`, each
/// model trained on replay from its predecessor plus the task's real data.
/// Same seeds as the chain inside run_scenario_arms.
Denoiser train_diffusion_chain(const Scenario& scenario, const TrainingConfig& config, std::size_t tasks);

/// One model trained on every task's training data at once, for
/// num_tasks * N_d steps from the same initial weights as the chain.
Denoiser train_joint_diffusion(const Scenario& scenario, const TrainingConfig& config);

std::string classifier_checkpoint_name(const std::string& arm, std::size_t task);
std::string denoiser_checkpoint_name(std::size_t task);

}  // namespace guidelab
