// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include "guidelab/checkpoint.hpp"
#include "guidelab/csv.hpp"
#include "guidelab/errors.hpp"
#include "guidelab/random.hpp"

namespace guidelab {

namespace {

std::size_t grid_rows(std::size_t classes) {
    std::size_t rows = 1;
    for (std::size_t r = 1; r * r <= classes; ++r) {
        if (classes % r == 0) rows = r;
    }
    return rows;
}

std::size_t lattice_levels(std::size_t classes, std::size_t dim) {
    std::size_t k = 2;
    for (;;) {
        std::size_t capacity = 1;
        for (std::size_t a = 0; a < dim && capacity < classes; ++a) capacity *= k;
        if (capacity >= classes) return k;
        ++k;
    }
}

double spread(std::size_t index, std::size_t count, double half_span) {
    if (count <= 1) return 0.0;
    return -half_span + 2.0 * half_span * static_cast<double>(index) / static_cast<double>(count - 1);
}

}  // namespace

std::string_view generator_name(Generator g) noexcept {
    switch (g) {
        case Generator::GaussianGrid:
            return "GAUSSIAN_GRID";
        case Generator::Rings:
            return "RINGS";
        case Generator::Moons:
            return "MOONS";
    }
    return "GAUSSIAN_GRID";
}

Generator parse_generator(std::string_view name) {
    std::string upper(name);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto g : {Generator::GaussianGrid, Generator::Rings, Generator::Moons}) {
        if (generator_name(g) == upper) return g;
    }
    throw ConfigError("unknown generator '" + std::string(name) + "'", "generator");
}

void DatasetSpec::validate() const {
    if (dimension < 2 || dimension > 16) throw ConfigError("dataset: dimension must lie in [2, 16]", "dimension");
    if (classes < 2) throw ConfigError("dataset: need at least two classes", "classes");
    if (samples_per_class < 1) throw ConfigError("dataset: samples_per_class must be positive", "samples_per_class");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
        throw ConfigError("dataset: noise_std must be a finite nonnegative number", "noise_std");
    }
}

nlohmann::json DatasetSpec::to_json() const {
    return {{"generator", generator_name(generator)}, {"dimension", dimension},
            {"classes", classes},                     {"samples_per_class", samples_per_class},
            {"noise_std", noise_std},                 {"seed", seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& doc) {
    DatasetSpec s;
    s.generator = parse_generator(doc.at("generator").get<std::string>());
    s.dimension = doc.at("dimension").get<std::size_t>();
    s.classes = doc.at("classes").get<std::size_t>();
    s.samples_per_class = doc.at("samples_per_class").get<std::size_t>();
    s.noise_std = doc.at("noise_std").get<double>();
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
}

Tensor Dataset::x() const { return Tensor::matrix(size(), dim, features); }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.dim = dim;
    out.features.reserve(indices.size() * dim);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= size()) throw IndexError("dataset: row " + std::to_string(i) + " out of range");
        const auto r = row(i);
        out.features.insert(out.features.end(), r.begin(), r.end());
        out.labels.push_back(labels[i]);
    }
    return out;
}

void Dataset::append(const Dataset& other) {
    if (empty() && dim == 0) dim = other.dim;
    if (other.dim != dim) throw DimensionError("dataset: cannot append rows of a different dimension");
    features.insert(features.end(), other.features.begin(), other.features.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

void Dataset::append(const Tensor& x, std::span<const int> y) {
    if (x.rank() != 2 || x.rows() != y.size()) throw DimensionError("dataset: need a [n, dim] tensor and n labels");
    if (empty() && dim == 0) dim = x.cols();
    if (x.cols() != dim) throw DimensionError("dataset: cannot append rows of a different dimension");
    const auto v = x.values();
    features.insert(features.end(), v.begin(), v.end());
    labels.insert(labels.end(), y.begin(), y.end());
}

GeneratedData generate(const DatasetSpec& spec) {
    spec.validate();
    const std::size_t n_cls = spec.classes, d = spec.dimension, per = spec.samples_per_class;
    Rng rng(derive_seed(spec.seed, Stream::Data));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GeneratedData out;
    out.anchors.assign(n_cls * d, 0.0);
    Dataset& data = out.data;
    data.dim = d;
    data.features.reserve(n_cls * per * d);
    data.labels.reserve(n_cls * per);

    const std::size_t rows = grid_rows(n_cls);
    const std::size_t cols = n_cls / rows;
    const std::size_t levels = lattice_levels(n_cls, d);
    const bool lattice = spec.generator == Generator::GaussianGrid && d >= 3;
    const std::size_t pairs = (n_cls + 1) / 2;
    constexpr double pi = std::numbers::pi;

    for (std::size_t c = 0; c < n_cls; ++c) {
        double cx = 0.0, cy = 0.0;
        if (lattice) {
            std::size_t digits = c;
            for (std::size_t a = 0; a < d; ++a) {
                out.anchors[c * d + a] = spread(digits % levels, levels, 0.8);
                digits /= levels;
            }
        } else if (spec.generator == Generator::GaussianGrid) {
            cx = spread(c / rows, cols, 0.8);
            cy = spread(c % rows, rows, std::min(0.4 * static_cast<double>(rows - 1), 0.8));
        } else if (spec.generator == Generator::Moons) {
            const double shift = 3.0 * static_cast<double>(c / 2) - 1.5 * static_cast<double>(pairs - 1) - 0.5;
            cx = shift + (c % 2 == 0 ? 0.0 : 1.0);
            cy = (c % 2 == 0 ? 2.0 / pi : 0.5 - 2.0 / pi) - 0.25;
        }
        if (!lattice) {
            out.anchors[c * d] = cx;
            out.anchors[c * d + 1] = cy;
        }
        const double radius = 0.15 + 0.8 * static_cast<double>(c) / static_cast<double>(n_cls - 1);
        for (std::size_t s = 0; s < per; ++s) {
            double px = cx, py = cy;
            if (spec.generator == Generator::Rings) {
                const double theta = 2.0 * pi * unit(rng);
                px = radius * std::cos(theta);
                py = radius * std::sin(theta);
            } else if (spec.generator == Generator::Moons) {
                const double theta = pi * unit(rng);
                const double shift = 3.0 * static_cast<double>(c / 2) - 1.5 * static_cast<double>(pairs - 1) - 0.5;
                if (c % 2 == 0) {
                    px = shift + std::cos(theta);
                    py = std::sin(theta) - 0.25;
                } else {
                    px = shift + 1.0 - std::cos(theta);
                    py = 0.5 - std::sin(theta) - 0.25;
                }
            }
            if (lattice) {
                for (std::size_t a = 0; a < d; ++a) {
                    data.features.push_back(out.anchors[c * d + a] + spec.noise_std * noise(rng));
                }
            } else {
                data.features.push_back(px + spec.noise_std * noise(rng));
                data.features.push_back(py + spec.noise_std * noise(rng));
                for (std::size_t k = 2; k < d; ++k) data.features.push_back(spec.noise_std * noise(rng));
            }
            data.labels.push_back(static_cast<int>(c));
        }
    }

    double max_abs = 0.0;
    for (double v : data.features) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs > 1.0) {
        for (double& v : data.features) v /= max_abs;
        for (double& v : out.anchors) v /= max_abs;
    }
    return out;
}

std::vector<int> Scenario::classes_through(std::size_t i) const {
    if (i > tasks.size()) throw IndexError("scenario: task " + std::to_string(i) + " out of range");
    std::vector<int> out;
    for (std::size_t k = 0; k < i; ++k) out.insert(out.end(), tasks[k].classes.begin(), tasks[k].classes.end());
    std::sort(out.begin(), out.end());
    return out;
}

void Scenario::validate() const {
    std::set<int> seen;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        const auto& task = tasks[k];
        if (task.classes.empty()) throw ContractError("scenario: task " + std::to_string(k + 1) + " has no classes");
        const std::set<int> own(task.classes.begin(), task.classes.end());
        for (int c : task.classes) {
            if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
                throw ContractError("scenario: class " + std::to_string(c) + " outside the label space");
            }
            if (!seen.insert(c).second) throw ContractError("scenario: class " + std::to_string(c) + " in two tasks");
        }
        for (const Dataset* part : {&task.train, &task.test}) {
            if (!part->empty() && part->dim != dim) throw ContractError("scenario: dimension mismatch");
            for (int y : part->labels) {
                if (!own.contains(y)) {
                    throw ContractError("scenario: label " + std::to_string(y) + " outside task " +
                                        std::to_string(k + 1));
                }
            }
        }
    }
}

Scenario split_tasks(const Dataset& dataset, std::size_t num_classes, std::size_t classes_per_task,
                     std::uint64_t seed) {
    if (classes_per_task == 0 || num_classes % classes_per_task != 0) {
        throw ConfigError("split_tasks: " + std::to_string(num_classes) + " classes cannot be split into tasks of " +
                              std::to_string(classes_per_task),
                          "classes_per_task");
    }
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const int y = dataset.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ContractError("split_tasks: label " + std::to_string(y) + " outside the label space");
        }
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }

    Scenario sc;
    sc.num_classes = num_classes;
    sc.dim = dataset.dim;
    const std::size_t n_tasks = num_classes / classes_per_task;
    for (std::size_t k = 0; k < n_tasks; ++k) {
        Task task;
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t j = 0; j < classes_per_task; ++j) {
            const std::size_t c = k * classes_per_task + j;
            task.classes.push_back(static_cast<int>(c));
            auto idx = by_class[c];
            Rng rng(derive_seed(seed, Stream::Split, {c}));
            std::shuffle(idx.begin(), idx.end(), rng);
            const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(idx.size())));
            train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
            test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
        }
        task.train = dataset.subset(train_idx);
        task.test = dataset.subset(test_idx);
        task.train.dim = task.test.dim = dataset.dim;
        sc.tasks.push_back(std::move(task));
    }
    sc.validate();
    return sc;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    auto p = csv_path;
    p.replace_extension(".json");
    return p;
}

void save_dataset(const std::filesystem::path& csv_path, const Dataset& dataset, const DatasetSpec& spec) {
    std::ofstream out(csv_path);
    if (!out) throw FileError("cannot write " + csv_path.string());
    for (std::size_t k = 0; k < dataset.dim; ++k) out << "x_" << k << ',';
    out << "label\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (double v : dataset.row(i)) out << format_number(v) << ',';
        out << dataset.labels[i] << '\n';
    }
    if (!out) throw FileError("write failed: " + csv_path.string());
    write_json_file(sidecar_path(csv_path), {{"format", "guidelab-dataset/1"}, {"spec", spec.to_json()}});
}

LoadedDataset load_dataset(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw FileError("cannot read " + csv_path.string());
    LoadedDataset out;
    const auto side = read_json_file(sidecar_path(csv_path));
    if (side.value("format", "") != "guidelab-dataset/1") throw FileError("dataset sidecar: unknown format");
    out.spec = DatasetSpec::from_json(side.at("spec"));

    std::string line;
    if (!std::getline(in, line)) throw FileError(csv_path.string() + ": missing header");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "label") throw FileError(csv_path.string() + ": bad header");
    out.data.dim = header.size() - 1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw FileError(csv_path.string() + ":" + std::to_string(line_no) + ": wrong field count");
        }
        for (std::size_t k = 0; k + 1 < fields.size(); ++k) out.data.features.push_back(parse_number(fields[k]));
        const double label = parse_number(fields.back());
        if (label != std::floor(label) || label < 0) {
            throw FileError(csv_path.string() + ":" + std::to_string(line_no) + ": bad label");
        }
        out.data.labels.push_back(static_cast<int>(label));
    }
    return out;
}

}  // namespace guidelab
