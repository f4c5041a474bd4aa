// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "guidelab/classifier.hpp"
#include "guidelab/config.hpp"
#include "guidelab/continual.hpp"

namespace guidelab {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t count = 0;
};
MeanStd mean_std(const std::vector<double>& values);

/// Mean of A[j][T] over the earlier tasks j < T of the last completed row.
std::optional<double> previous_task_accuracy(const RunRecord& record);

struct SummaryRow {
    std::string label;
    std::string arm;
    MeanStd avg_accuracy;
    MeanStd avg_forgetting;
    MeanStd previous_accuracy;
    MeanStd seconds;
    MeanStd classifier_seconds;
};

/// One row per distinct arm, in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records, const std::string& label = {});
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows, bool include_timing);
void print_summary(std::ostream& out, const std::vector<SummaryRow>& rows);

std::string record_file_name(std::uint64_t seed, const std::string& arm, bool main_arm);
std::string accuracy_file_name(std::uint64_t seed, const std::string& arm, bool main_arm);
std::filesystem::path checkpoint_dir(const std::filesystem::path& output_dir, std::uint64_t seed);

/// Runs every seed of `config`, writing records, accuracy matrices,
/// checkpoints, the resolved config and summary.csv into config.output_dir.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

enum class SweepAxis { Scale, DdimSteps, Interval };
SweepAxis parse_sweep_axis(const std::string& name);
std::string sweep_axis_name(SweepAxis axis);

/// One summary row per value (wall-clock included), also written to
/// sweep_<axis>.csv in the output directory.
std::vector<SummaryRow> run_sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<double>& values,
                                  std::ostream* log = nullptr);

struct ProbeRow {
    std::uint64_t seed = 0;
    GuidanceVariant variant = GuidanceVariant::None;
    BoundaryStats stats;
};

/// Reloads the final and previous checkpoints of each seed in `run_dir`,
/// regenerates rehearsal samples of the previous classes under every probe
/// variant from identical starting noise, and measures the boundary
/// statistics with the final classifier. Writes probe.csv,
/// probe_summary.csv, samples_<variant>.csv and embeddings.csv.
std::vector<ProbeRow> run_probe(const std::filesystem::path& run_dir, std::ostream* log = nullptr);

struct DualDemoResult {
    std::string preset;
    double s1 = 0.0;
    double s2 = 0.0;
    Tensor samples;
    Tensor logits;
    double fraction_c1 = 0.0;
    double fraction_c2 = 0.0;
    double mean_logit_c2 = 0.0;
};

/// Trains an unconditional denoiser on class c1 only and a classifier on all
/// classes, then samples with dual guidance ("dual") and with s2 = 0
/// ("reference"). Writes samples_dual.csv and samples_reference.csv.
std::vector<DualDemoResult> run_demo_dual(const ExperimentConfig& config, std::ostream* log = nullptr);

struct RecallComparison {
    std::uint64_t seed = 0;
    PrecisionRecall continual;
    PrecisionRecall joint;
};

/// kNN precision and recall on task 1's training data of (a) the diffusion
/// model at the end of the continual chain and (b) a jointly trained model
/// with the same total number of steps. Both generate as many task-1 samples
/// as there are real ones, from identical noise.
RecallComparison compare_recall(const ExperimentConfig& config, std::uint64_t seed, std::size_t k = 3);

/// Rebuilds summary.csv from the record files in `run_dir`.
std::vector<SummaryRow> build_report(const std::filesystem::path& run_dir, std::ostream* log = nullptr);

// CLI entry points; they return a process exit code and report errors on
// stderr.
int cmd_run(const std::filesystem::path& config_path, const std::vector<std::string>& overrides);
int cmd_sweep(const std::filesystem::path& config_path, const std::string& axis, const std::vector<double>& values,
              const std::vector<std::string>& overrides);
int cmd_probe(const std::filesystem::path& run_dir);
int cmd_demo_dual(const std::filesystem::path& config_path, const std::vector<std::string>& overrides);
int cmd_report(const std::filesystem::path& run_dir);

}  // namespace guidelab
