// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include <doctest.h>

#include "guidelab/data.hpp"
#include "guidelab/errors.hpp"

using namespace guidelab;
namespace fs = std::filesystem;

namespace {

std::vector<double> class_mean(const Dataset& d, int c) {
    std::vector<double> m(d.dim, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.labels[i] != c) continue;
        for (std::size_t a = 0; a < d.dim; ++a) m[a] += d.row(i)[a];
        ++n;
    }
    for (auto& v : m) v /= static_cast<double>(n);
    return m;
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("guidelab_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("grid class means match the anchors") {
    DatasetSpec spec;
    spec.classes = 4;
    spec.samples_per_class = 2000;
    spec.noise_std = 0.05;
    spec.seed = 3;
    const auto g = generate(spec);
    // Two columns at x = -0.8, 0.8 and two rows at y = -0.4, 0.4.
    const std::vector<std::vector<double>> expect = {{-0.8, -0.4}, {-0.8, 0.4}, {0.8, -0.4}, {0.8, 0.4}};
    for (int c = 0; c < 4; ++c) {
        const auto m = class_mean(g.data, c);
        for (std::size_t a = 0; a < 2; ++a) {
            CHECK(std::abs(m[a] - expect[c][a]) <= 0.02);
            CHECK(g.anchors[c * 2 + a] == doctest::Approx(expect[c][a]).epsilon(1e-12));
        }
    }
}

TEST_CASE("two dimensional grid keeps consecutive tasks adjacent") {
    DatasetSpec spec;
    spec.classes = 10;
    spec.samples_per_class = 1;
    spec.noise_std = 0.0;
    const auto g = generate(spec);
    // Two rows, five columns: classes 2c and 2c+1 share a column.
    for (std::size_t c = 0; c < 10; c += 2) CHECK(g.anchors[c * 2] == g.anchors[(c + 1) * 2]);
    for (std::size_t c = 0; c + 2 < 10; c += 2) CHECK(g.anchors[(c + 2) * 2] > g.anchors[c * 2]);
}

TEST_CASE("higher dimensional grids use the smallest lattice that fits") {
    struct Case {
        std::size_t dim, classes, levels;
    };
    for (const auto& cs : {Case{4, 10, 2}, Case{5, 20, 2}, Case{3, 20, 3}, Case{3, 8, 2}, Case{3, 9, 3}}) {
        DatasetSpec spec;
        spec.dimension = cs.dim;
        spec.classes = cs.classes;
        spec.samples_per_class = 1;
        spec.noise_std = 0.0;
        const auto g = generate(spec);
        for (std::size_t c = 0; c < cs.classes; ++c) {
            std::size_t rest = c;
            for (std::size_t a = 0; a < cs.dim; ++a) {
                const std::size_t digit = rest % cs.levels;
                rest /= cs.levels;
                const double level = -0.8 + 1.6 * static_cast<double>(digit) / static_cast<double>(cs.levels - 1);
                CHECK(g.anchors[c * cs.dim + a] == doctest::Approx(level).epsilon(1e-12));
                CHECK(g.data.row(c)[a] == doctest::Approx(level).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("generation is deterministic and bounded") {
    for (auto gen : {Generator::GaussianGrid, Generator::Rings, Generator::Moons}) {
        DatasetSpec spec;
        spec.generator = gen;
        spec.dimension = 3;
        spec.classes = 4;
        spec.samples_per_class = 300;
        spec.noise_std = 0.3;
        spec.seed = 21;
        const auto a = generate(spec).data;
        const auto b = generate(spec).data;
        REQUIRE(a.features.size() == b.features.size());
        CHECK(std::memcmp(a.features.data(), b.features.data(), a.features.size() * sizeof(double)) == 0);
        CHECK(a.labels == b.labels);
        CHECK(a.size() == 1200);
        for (double v : a.features) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        spec.seed = 22;
        CHECK(generate(spec).data.features != a.features);
    }
}

TEST_CASE("invalid specs name the field") {
    DatasetSpec spec;
    spec.classes = 1;
    try {
        generate(spec);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "classes");
    }
    spec = {};
    spec.dimension = 17;
    CHECK_THROWS_AS(generate(spec), ConfigError);
    spec = {};
    spec.samples_per_class = 0;
    CHECK_THROWS_AS(generate(spec), ConfigError);
    CHECK_THROWS_AS(parse_generator("spirals"), ConfigError);
    CHECK(parse_generator(generator_name(Generator::Moons)) == Generator::Moons);
}

TEST_CASE("task splits partition classes and samples") {
    DatasetSpec spec;
    spec.classes = 10;
    spec.samples_per_class = 50;
    const auto data = generate(spec).data;
    const auto sc = split_tasks(data, 10, 5, 7);
    CHECK(sc.num_tasks() == 2);
    std::set<int> all;
    for (const auto& task : sc.tasks) {
        CHECK(task.train.size() == 5 * 40);
        CHECK(task.test.size() == 5 * 10);
        std::vector<int> test_count(10, 0);
        for (int y : task.test.labels) ++test_count[y];
        for (int c : task.classes) {
            CHECK(test_count[c] == 10);
            CHECK(all.insert(c).second);
        }
    }
    CHECK(all.size() == 10);
    CHECK(sc.classes_through(1) == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(sc.classes_through(2).size() == 10);

    // Every original row lands in exactly one split.
    std::multiset<std::vector<double>> original, pieces;
    for (std::size_t i = 0; i < data.size(); ++i) original.insert({data.row(i).begin(), data.row(i).end()});
    for (const auto& task : sc.tasks)
        for (const Dataset* part : {&task.train, &task.test})
            for (std::size_t i = 0; i < part->size(); ++i) pieces.insert({part->row(i).begin(), part->row(i).end()});
    CHECK(original == pieces);

    CHECK(split_tasks(data, 10, 2, 7).num_tasks() == 5);
    CHECK_THROWS_AS(split_tasks(data, 10, 3, 7), ConfigError);
    CHECK_THROWS_AS(split_tasks(data, 10, 0, 7), ConfigError);
}

TEST_CASE("split is seeded") {
    DatasetSpec spec;
    spec.classes = 4;
    spec.samples_per_class = 20;
    const auto data = generate(spec).data;
    const auto a = split_tasks(data, 4, 2, 1);
    const auto b = split_tasks(data, 4, 2, 1);
    const auto c = split_tasks(data, 4, 2, 2);
    CHECK(a.tasks[0].train.features == b.tasks[0].train.features);
    CHECK(a.tasks[0].train.features != c.tasks[0].train.features);
}

TEST_CASE("scenario validation catches overlapping classes") {
    DatasetSpec spec;
    spec.classes = 4;
    spec.samples_per_class = 5;
    auto sc = split_tasks(generate(spec).data, 4, 2, 0);
    CHECK_NOTHROW(sc.validate());
    sc.tasks[1].classes[0] = 0;
    CHECK_THROWS_AS(sc.validate(), ContractError);
}

TEST_CASE("dataset csv round trip") {
    const auto dir = scratch_dir("data_csv");
    DatasetSpec spec;
    spec.generator = Generator::Rings;
    spec.dimension = 3;
    spec.classes = 3;
    spec.samples_per_class = 7;
    spec.noise_std = 0.1;
    spec.seed = 99;
    const auto data = generate(spec).data;
    const auto path = dir / "rings.csv";
    save_dataset(path, data, spec);
    CHECK(fs::exists(sidecar_path(path)));
    const auto loaded = load_dataset(path);
    CHECK(loaded.data.features == data.features);
    CHECK(loaded.data.labels == data.labels);
    CHECK(loaded.spec.to_json() == spec.to_json());

    std::ofstream(dir / "bad.csv") << "x_0,x_1,label\n0.1,0.2\n";
    std::filesystem::copy_file(sidecar_path(path), sidecar_path(dir / "bad.csv"));
    CHECK_THROWS_AS(load_dataset(dir / "bad.csv"), FileError);
    CHECK_THROWS_AS(load_dataset(dir / "missing.csv"), FileError);
    fs::remove_all(dir);
}

TEST_CASE("dataset append and subset") {
    Dataset d;
    d.dim = 2;
    d.append(Tensor::matrix(2, 2, {1, 2, 3, 4}), std::vector<int>{0, 1});
    const std::vector<std::size_t> idx = {1, 1, 0};
    const auto s = d.subset(idx);
    CHECK(s.features == std::vector<double>{3, 4, 3, 4, 1, 2});
    CHECK(s.labels == std::vector<int>{1, 1, 0});
    Dataset other;
    other.dim = 3;
    other.append(Tensor::matrix(1, 3, {0, 0, 0}), std::vector<int>{0});
    CHECK_THROWS_AS(d.append(other), DimensionError);
}
