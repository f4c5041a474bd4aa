// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "guidelab/continual.hpp"
#include "guidelab/data.hpp"
#include "guidelab/guidance.hpp"

namespace guidelab {

struct ProbeSettings {
    double epsilon = 0.1;
    std::size_t samples_per_class = 128;
    std::vector<GuidanceVariant> variants = all_variants();
};

struct DualSettings {
    int c1 = 0;
    int c2 = 1;
    double s1 = 10.0;
    double s2 = 10.0;
    std::size_t count = 256;
    std::size_t diffusion_steps = 3000;
    std::size_t classifier_steps = 1000;
};

/// Everything one experiment needs. Parsed from a flat INI-style file:
///
///   [dataset]    generator, dimension, classes, samples_per_class, noise_std, seed
///   [scenario]   classes_per_task
///   [training]   classifier_steps, diffusion_steps, generation_interval (integer or inf),
///                batch_size, diffusion_batch_size, classifier_lr, diffusion_lr,
///                classifier_weight_decay, diffusion_weight_decay, classifier_hidden,
///                denoiser_hidden, time_dim, class_dim, replay, train_final_diffusion,
///                loss_log_interval
///   [diffusion]  timesteps, beta_start, beta_end
///   [guidance]   variant, scale, backprop_denoiser
///   [sampler]    ddim_steps
///   [experiment] seeds, output_dir, compare, record_timing, archive_samples, save_checkpoints
///   [probe]      epsilon, samples_per_class, variants
///   [dual]       c1, c2, s1, s2, count, diffusion_steps, classifier_steps
///
/// Lists are comma separated. Unknown sections or keys are rejected.
struct ExperimentConfig {
    DatasetSpec dataset;
    /// When unset, each run draws its dataset with the run seed.
    std::optional<std::uint64_t> dataset_seed;
    std::size_t classes_per_task = 2;
    TrainingConfig training;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::filesystem::path output_dir = "results";
    /// Extra arms trained next to the main one on the same diffusion chain:
    /// variant names, or FINETUNE for no replay.
    std::vector<std::string> compare;
    bool record_timing = false;
    bool archive_samples = false;
    bool save_checkpoints = true;
    ProbeSettings probe;
    DualSettings dual;

    void validate() const;
    /// Scenario for one run seed.
    Scenario make_scenario(std::uint64_t seed) const;
    /// Training config for one run seed.
    TrainingConfig training_for(std::uint64_t seed) const;
    /// The main arm followed by the `compare` arms.
    std::vector<ClassifierArm> arms() const;
    /// Canonical key = value text; parses back to an equal config.
    std::string to_text() const;
};

/// Throws ConfigError whose key() is "section.key" for bad entries.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` override on top of a parsed config.
void apply_override(ExperimentConfig& config, std::string_view assignment);

ClassifierArm arm_from_name(const std::string& name, double scale, bool backprop_denoiser);

}  // namespace guidelab
