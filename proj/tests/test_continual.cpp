// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include <doctest.h>

#include "guidelab/checkpoint.hpp"
#include "guidelab/continual.hpp"
#include "guidelab/errors.hpp"

using namespace guidelab;
namespace fs = std::filesystem;

namespace {

Scenario small_scenario(std::size_t classes, std::size_t per_task, std::size_t per_class = 40) {
    DatasetSpec spec;
    spec.classes = classes;
    spec.samples_per_class = per_class;
    spec.noise_std = 0.05;
    spec.seed = 5;
    return split_tasks(generate(spec).data, classes, per_task, 5);
}

TrainingConfig small_config() {
    TrainingConfig c;
    c.classifier_steps = 30;
    c.diffusion_steps = 40;
    c.generation_interval = 10;
    c.batch_size = 12;
    c.diffusion_batch_size = 32;
    c.classifier_hidden = {16};
    c.denoiser_hidden = {16, 16};
    c.time_dim = 8;
    c.class_dim = 4;
    c.diffusion_timesteps = 50;
    c.sampler.ddim_steps = 5;
    c.guidance = {GuidanceVariant::Guide, 0.01};
    c.seed = 3;
    c.loss_log_interval = 10;
    return c;
}

std::map<int, std::size_t> histogram(const std::vector<int>& labels) {
    std::map<int, std::size_t> h;
    for (int y : labels) ++h[y];
    return h;
}

}  // namespace

TEST_CASE("balanced batch plans") {
    const std::vector<int> none, prev4 = {0, 1, 2, 3}, curr = {4, 5};
    SUBCASE("first task is all real") {
        const auto plan = plan_balanced_batch(12, none, curr);
        CHECK(plan.per_previous_class == 0);
        CHECK(plan.real == std::vector<std::pair<int, std::size_t>>{{4, 6}, {5, 6}});
    }
    SUBCASE("twelve over six seen classes gives two each") {
        const auto plan = plan_balanced_batch(12, prev4, curr);
        CHECK(plan.per_previous_class == 2);
        CHECK(plan.rehearsal_total(4) == 8);
        CHECK(plan.real == std::vector<std::pair<int, std::size_t>>{{4, 2}, {5, 2}});
    }
    SUBCASE("a single leftover goes to the lowest current class") {
        const auto plan = plan_balanced_batch(13, prev4, std::vector<int>{5, 4});
        CHECK(plan.per_previous_class == 2);
        CHECK(plan.real == std::vector<std::pair<int, std::size_t>>{{4, 3}, {5, 2}});
    }
    SUBCASE("larger remainders wrap over the current classes") {
        const auto plan = plan_balanced_batch(10, prev4, curr);
        CHECK(plan.per_previous_class == 1);
        CHECK(plan.real == std::vector<std::pair<int, std::size_t>>{{4, 3}, {5, 3}});
    }
    CHECK_THROWS_AS(plan_balanced_batch(5, prev4, curr), ConfigError);
    CHECK_THROWS_AS(plan_balanced_batch(12, prev4, none), ContractError);
}

TEST_CASE("batch plans always cover every seen class and sum to the batch size") {
    for (std::size_t prev_n = 0; prev_n <= 8; ++prev_n) {
        for (std::size_t curr_n = 1; curr_n <= 4; ++curr_n) {
            for (std::size_t b = prev_n + curr_n; b <= 70; b += 3) {
                std::vector<int> prev(prev_n), curr(curr_n);
                for (std::size_t k = 0; k < prev_n; ++k) prev[k] = static_cast<int>(k);
                for (std::size_t k = 0; k < curr_n; ++k) curr[k] = static_cast<int>(prev_n + k);
                const auto plan = plan_balanced_batch(b, prev, curr);
                std::size_t total = plan.rehearsal_total(prev_n);
                std::size_t lo = b, hi = 0;
                for (const auto& [c, n] : plan.real) {
                    total += n;
                    lo = std::min(lo, n);
                    hi = std::max(hi, n);
                }
                CHECK(total == b);
                CHECK(lo >= 1);
                if (prev_n > 0) {
                    CHECK(plan.per_previous_class >= 1);
                    CHECK(plan.per_previous_class <= lo);
                }
                CHECK(hi - lo <= 1);
            }
        }
    }
}

TEST_CASE("rehearsal caches are class balanced and batches contain every previous class") {
    const auto sc = small_scenario(6, 2);
    auto cfg = small_config();
    const auto schedule = cfg.schedule();
    Denoiser denoiser({2, 6, {16}, 8, 4}, 1);
    Classifier prev({2, 6, {8}}, 2), curr({2, 6, {8}}, 3);
    const RehearsalModels models{denoiser, schedule, &prev, &curr};
    const auto previous = sc.classes_through(2);
    const auto& current = sc.tasks[2].classes;
    const auto plan = plan_balanced_batch(cfg.batch_size, previous, current);
    const auto cache =
        refresh_rehearsal_cache(models, {previous, current, plan.per_previous_class, 3, 0}, cfg, cfg.guidance);
    const auto h = histogram(cache.labels);
    CHECK(h.size() == previous.size());
    for (const auto& [c, n] : h) CHECK(n == plan.per_previous_class);

    const auto again =
        refresh_rehearsal_cache(models, {previous, current, plan.per_previous_class, 3, 0}, cfg, cfg.guidance);
    const auto next =
        refresh_rehearsal_cache(models, {previous, current, plan.per_previous_class, 3, 1}, cfg, cfg.guidance);
    const std::vector<double> a(cache.x.values().begin(), cache.x.values().end());
    CHECK(a == std::vector<double>(again.x.values().begin(), again.x.values().end()));
    CHECK(a != std::vector<double>(next.x.values().begin(), next.x.values().end()));

    Rng rng(4);
    const auto rows = index_by_class(sc.tasks[2].train, 6);
    for (int k = 0; k < 20; ++k) {
        const auto batch = build_balanced_batch(sc.tasks[2].train, rows, &cache, plan, previous, rng);
        CHECK(batch.labels.size() == cfg.batch_size);
        const auto bh = histogram(batch.labels);
        for (int c : previous) CHECK(bh.count(c) == 1);
        for (int c : current) CHECK(bh.count(c) == 1);
    }
    CHECK_THROWS_AS(build_balanced_batch(sc.tasks[2].train, rows, nullptr, plan, previous, rng), ProtocolError);
    const RehearsalBatch empty;
    CHECK_THROWS_AS(build_balanced_batch(sc.tasks[2].train, rows, &empty, plan, previous, rng), ProtocolError);
    CHECK_THROWS_AS(refresh_rehearsal_cache(models, {{}, current, 1, 3, 0}, cfg, cfg.guidance), ProtocolError);
}

TEST_CASE("diffusion dataset sizes and label balance") {
    const auto sc = small_scenario(4, 2, 50);
    const auto cfg = small_config();
    const auto schedule = cfg.schedule();
    const auto first = build_diffusion_dataset(nullptr, schedule, sc, 1, cfg);
    CHECK(first.features == sc.tasks[0].train.features);
    CHECK(first.labels == sc.tasks[0].train.labels);

    Denoiser denoiser({2, 4, {16}, 8, 4}, 7);
    const auto second = build_diffusion_dataset(&denoiser, schedule, sc, 2, cfg);
    const std::size_t n1 = sc.tasks[0].train.size(), n2 = sc.tasks[1].train.size();
    CHECK(second.size() == n1 + n2);
    std::vector<int> synthetic(second.labels.begin(), second.labels.begin() + static_cast<std::ptrdiff_t>(n1));
    const auto h = histogram(synthetic);
    CHECK(h.size() == 2);
    CHECK(h.at(0) == n1 / 2);
    CHECK(h.at(1) == n1 - n1 / 2);
    CHECK(std::equal(sc.tasks[1].train.features.begin(), sc.tasks[1].train.features.end(),
                     second.features.begin() + static_cast<std::ptrdiff_t>(n1 * 2)));
    CHECK_THROWS_AS(build_diffusion_dataset(nullptr, schedule, sc, 2, cfg), ProtocolError);
    CHECK_THROWS_AS(build_diffusion_dataset(&denoiser, schedule, sc, 3, cfg), IndexError);
}

TEST_CASE("frozen snapshots are untouched by classifier training") {
    const auto sc = small_scenario(4, 2);
    const auto cfg = small_config();
    const auto schedule = cfg.schedule();
    const Denoiser denoiser({2, 4, {16}, 8, 4}, 1);
    const Classifier prev({2, 4, {16}}, 2);
    Classifier live = prev.clone();
    const auto dh = checkpoint_hash(denoiser.to_json(schedule));
    const auto ch = checkpoint_hash(prev.to_json());
    TaskLog log;
    const ClassifierArm arm{"GUIDE", cfg.guidance, true};
    train_task_classifier(live, sc, 2, {&denoiser, &prev, &schedule}, cfg, arm, log);
    CHECK(checkpoint_hash(denoiser.to_json(schedule)) == dh);
    CHECK(checkpoint_hash(prev.to_json()) == ch);
    CHECK(checkpoint_hash(live.to_json()) != ch);
    CHECK(log.rehearsal_generations == 3);
    CHECK(log.classifier_loss.size() == 3);
}

TEST_CASE("generation interval controls regeneration count") {
    const auto sc = small_scenario(4, 2);
    auto cfg = small_config();
    const auto schedule = cfg.schedule();
    const Denoiser denoiser({2, 4, {16}, 8, 4}, 1);
    const Classifier prev({2, 4, {16}}, 2);
    const ClassifierArm arm{"GUIDE", cfg.guidance, true};
    for (auto [interval, expect] : {std::pair<std::size_t, std::size_t>{1, 30}, {7, 5}, {30, 1}, {kRegenerateOnce, 1}}) {
        cfg.generation_interval = interval;
        Classifier live = prev.clone();
        TaskLog log;
        train_task_classifier(live, sc, 2, {&denoiser, &prev, &schedule}, cfg, arm, log);
        CHECK(log.rehearsal_generations == expect);
    }
    Classifier live = prev.clone();
    TaskLog log;
    train_task_classifier(live, sc, 1, {}, cfg, arm, log);
    CHECK(log.rehearsal_generations == 0);
    CHECK_THROWS_AS(train_task_classifier(live, sc, 2, {}, cfg, arm, log), ProtocolError);
}

TEST_CASE("training config validation names the key") {
    auto cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.generation_interval = 31;
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "generation_interval");
    }
    cfg = small_config();
    cfg.sampler.ddim_steps = 51;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.time_dim = 7;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("runs are deterministic and fill the accuracy triangle") {
    const auto sc = small_scenario(4, 2);
    const auto cfg = small_config();
    const auto a = run_scenario(sc, cfg);
    const auto b = run_scenario(sc, cfg);
    CHECK(a.to_json(false).dump() == b.to_json(false).dump());
    CHECK(a.status == "complete");
    CHECK(a.accuracy.tasks_completed() == 2);
    for (std::size_t i = 1; i <= 2; ++i)
        for (std::size_t j = 1; j <= i; ++j) {
            CHECK(a.accuracy.at(j, i) >= 0.0);
            CHECK(a.accuracy.at(j, i) <= 1.0);
        }
    CHECK(a.final_forgetting().has_value());
    CHECK(a.tasks.size() == 2);
    CHECK(a.tasks[1].diffusion_dataset_size == sc.tasks[0].train.size() + sc.tasks[1].train.size());
}

TEST_CASE("a single task run has accuracy but no forgetting") {
    const auto sc = small_scenario(4, 4);
    const auto rec = run_scenario(sc, small_config());
    REQUIRE(rec.final_accuracy().has_value());
    CHECK(*rec.final_accuracy() == rec.accuracy.at(1, 1));
    CHECK_FALSE(rec.final_forgetting().has_value());
    CHECK(rec.to_json(false)["final_forgetting"].is_null());
}

TEST_CASE("arms sharing a chain match separate runs") {
    const auto sc = small_scenario(4, 2);
    auto cfg = small_config();
    const std::vector<ClassifierArm> arms = {
        {"GUIDE", cfg.guidance, true}, {"NONE", {GuidanceVariant::None, 0.0}, true}, {"FINETUNE", {}, false}};
    const auto shared = run_scenario_arms(sc, cfg, arms);
    REQUIRE(shared.size() == 3);
    cfg.guidance = {GuidanceVariant::None, 0.0};
    const auto none = run_scenario(sc, cfg);
    CHECK(shared[1].accuracy.to_json() == none.accuracy.to_json());
    cfg.replay = false;
    const auto fine = run_scenario(sc, cfg);
    CHECK(shared[2].accuracy.to_json() == fine.accuracy.to_json());
    CHECK(fine.tasks[1].rehearsal_generations == 0);
}

TEST_CASE("the standalone diffusion chain reproduces the run checkpoints") {
    const auto sc = small_scenario(4, 2);
    const auto cfg = small_config();
    const auto dir = fs::temp_directory_path() / "guidelab_test_chain";
    fs::remove_all(dir);
    fs::create_directories(dir);
    RunOptions options;
    options.checkpoint_dir = dir;
    run_scenario(sc, cfg, options);
    const auto schedule = cfg.schedule();
    for (std::size_t task : {1u, 2u}) {
        const auto chain = train_diffusion_chain(sc, cfg, task);
        const auto saved = read_json_file(dir / denoiser_checkpoint_name(task));
        CHECK(checkpoint_hash(chain.to_json(schedule)) == checkpoint_hash(saved));
    }
    CHECK(fs::exists(dir / classifier_checkpoint_name("GUIDE", 2)));
    CHECK_THROWS_AS(train_diffusion_chain(sc, cfg, 3), ContractError);
    fs::remove_all(dir);
}

TEST_CASE("skipping the final diffusion model leaves the accuracy matrix unchanged") {
    const auto sc = small_scenario(4, 2);
    auto cfg = small_config();
    const auto full = run_scenario(sc, cfg);
    cfg.train_final_diffusion = false;
    const auto lean = run_scenario(sc, cfg);
    CHECK(full.accuracy.to_json() == lean.accuracy.to_json());
}

TEST_CASE("progress is reported after every task and failures are recorded") {
    const auto sc = small_scenario(4, 2);
    auto cfg = small_config();
    std::vector<std::size_t> seen;
    RunOptions options;
    options.on_progress = [&](const std::vector<RunRecord>& recs) {
        seen.push_back(recs.front().accuracy.tasks_completed());
    };
    run_scenario(sc, cfg, options);
    CHECK(seen == std::vector<std::size_t>{1, 2});

    auto broken = sc;
    broken.tasks[1].test = Dataset{};
    broken.tasks[1].test.dim = 2;
    std::string status;
    options.on_progress = [&](const std::vector<RunRecord>& recs) { status = recs.front().status; };
    CHECK_THROWS_AS(run_scenario(broken, cfg, options), ProtocolError);
    CHECK(status.rfind("failed", 0) == 0);
}
