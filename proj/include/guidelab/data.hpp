// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "guidelab/tensor.hpp"

namespace guidelab {

enum class Generator { GaussianGrid, Rings, Moons };

std::string_view generator_name(Generator g) noexcept;
Generator parse_generator(std::string_view name);

struct DatasetSpec {
    Generator generator = Generator::GaussianGrid;
    std::size_t dimension = 2;
    std::size_t classes = 10;
    std::size_t samples_per_class = 500;
    double noise_std = 0.05;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    nlohmann::json to_json() const;
    static DatasetSpec from_json(const nlohmann::json& doc);
};

/// Labeled points, row-major.
struct Dataset {
    std::size_t dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
    Tensor x() const;
    /// Rows at `indices`, in that order.
    Dataset subset(std::span<const std::size_t> indices) const;
    /// Appends all rows of `other`. Dimensions must agree.
    void append(const Dataset& other);
    /// Appends the rows of a [n, dim] tensor with the given labels.
    void append(const Tensor& x, std::span<const int> y);
};

struct GeneratedData {
    Dataset data;
    /// Per-class centre of the generator, after the same scaling as the data.
    /// [classes, dimension]. RINGS and MOONS leave coordinates past the
    /// second at zero.
    std::vector<double> anchors;
};

/// Deterministic in the spec. Coordinates are divided by their largest
/// magnitude when it exceeds 1, so every feature lies in [-1, 1].
///
/// GAUSSIAN_GRID in two dimensions places class c at column c / rows, row
/// c % rows of a rows x cols lattice (rows = largest divisor of the class
/// count not above its square root), so a task made of consecutive classes
/// sits next to the task before it. In d >= 3 dimensions it uses the k^d
/// lattice with the smallest k >= 2 that holds every class; class c sits at
/// the base-k digits of c, least significant digit on the first axis. Lattice
/// levels span [-0.8, 0.8] per axis. RINGS uses concentric circles, MOONS
/// interleaved half circles; their dimensions past the second carry only
/// N(0, noise_std^2).
GeneratedData generate(const DatasetSpec& spec);

struct Task {
    std::vector<int> classes;
    Dataset train;
    Dataset test;
};

struct Scenario {
    std::size_t num_classes = 0;
    std::size_t dim = 0;
    std::vector<Task> tasks;

    std::size_t num_tasks() const { return tasks.size(); }
    /// Union of classes of tasks 1..i (1-based), ascending.
    std::vector<int> classes_through(std::size_t i) const;
    /// Throws ContractError when class sets overlap or a label falls outside
    /// its task.
    void validate() const;
};

/// Consecutive groups of `classes_per_task` class ids form the tasks. Each
/// class is shuffled with a stream derived from `seed` and split 80/20 into
/// train and test.
Scenario split_tasks(const Dataset& dataset, std::size_t num_classes, std::size_t classes_per_task,
                     std::uint64_t seed);

/// CSV `x_0,...,x_{d-1},label` plus `<stem>.json` holding the spec.
void save_dataset(const std::filesystem::path& csv_path, const Dataset& dataset, const DatasetSpec& spec);
struct LoadedDataset {
    Dataset data;
    DatasetSpec spec;
};
LoadedDataset load_dataset(const std::filesystem::path& csv_path);
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

}  // namespace guidelab
