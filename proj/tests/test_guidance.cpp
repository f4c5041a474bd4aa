// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "guidelab/errors.hpp"
#include "guidelab/guidance.hpp"

using namespace guidelab;

namespace {

std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    std::vector<double> v(r * c);
    for (auto& x : v) x = n(rng);
    return Tensor::matrix(r, c, v);
}

double ce_sum(const Classifier& f, const Tensor& z, std::span<const int> y) {
    GradModeGuard off(GradMode::Disabled);
    return cross_entropy(f.logits(z), y, Reduction::Sum).item();
}

struct Fixture {
    NoiseSchedule schedule = make_linear_schedule(100, 1e-4, 0.02);
    Denoiser denoiser{DenoiserConfig{3, 4, {16, 16}, 8, 4}, 5};
    Classifier previous{ClassifierConfig{3, 4, {12}}, 6};
    Classifier current{ClassifierConfig{3, 4, {12}}, 7};
    RehearsalModels models() const { return {denoiser, schedule, &previous, &current}; }
};

}  // namespace

TEST_CASE("variant names round trip") {
    for (auto v : all_variants()) CHECK(parse_variant(variant_name(v)) == v);
    CHECK(parse_variant("guide") == GuidanceVariant::Guide);
    CHECK(parse_variant("prev_minus") == GuidanceVariant::PrevMinus);
    CHECK_THROWS_AS(parse_variant("upward"), ConfigError);
    CHECK(all_variants().size() == 5);
}

TEST_CASE("zero scale returns epsilon bit for bit") {
    Fixture fx;
    std::mt19937_64 rng(1);
    const auto eps = random_matrix(5, 3, rng);
    const auto xt = random_matrix(5, 3, rng);
    const auto z0 = predict_z0(xt, 30, eps, fx.schedule);
    const std::vector<int> y = {0, 1, 2, 3, 0};
    for (int sign : {1, -1})
        CHECK(flat(guide_epsilon(eps, xt, 30, z0, fx.current, y, 0.0, sign, fx.schedule)) == flat(eps));
}

TEST_CASE("guided epsilon is linear in the scale") {
    Fixture fx;
    std::mt19937_64 rng(2);
    const auto eps = random_matrix(4, 3, rng);
    const auto xt = random_matrix(4, 3, rng);
    const auto z0 = predict_z0(xt, 70, eps, fx.schedule);
    const std::vector<int> y = {3, 1, 2, 0};
    const auto unit = flat(guide_epsilon(eps, xt, 70, z0, fx.current, y, 1.0, 1, fx.schedule));
    for (double s : {0.01, 0.3, 2.5}) {
        const auto scaled = flat(guide_epsilon(eps, xt, 70, z0, fx.current, y, s, 1, fx.schedule));
        for (std::size_t i = 0; i < unit.size(); ++i) {
            const double expect = s * (unit[i] - eps.values()[i]);
            CHECK(std::abs((scaled[i] - eps.values()[i]) - expect) <= 1e-12 * (1.0 + std::abs(expect)));
        }
    }
}

TEST_CASE("stopped-gradient guidance matches central differences in x_t") {
    Fixture fx;
    std::mt19937_64 rng(3);
    const auto eps = random_matrix(3, 3, rng);
    const auto xt = random_matrix(3, 3, rng);
    const std::vector<int> y = {1, 0, 3};
    for (int t : {1, 20, 99}) {
        const auto z0 = predict_z0(xt, t, eps, fx.schedule);
        const auto grad = guidance_gradient(z0, t, fx.current, y, fx.schedule);
        const auto shift = flat(guide_epsilon(eps, xt, t, z0, fx.current, y, 1.0, 1, fx.schedule));
        const double h = 1e-6;
        for (std::size_t i = 0; i < xt.size(); ++i) {
            auto plus = flat(xt), minus = flat(xt);
            plus[i] += h;
            minus[i] -= h;
            const auto loss = [&](const std::vector<double>& x) {
                return ce_sum(fx.current, predict_z0(Tensor::matrix(3, 3, x), t, eps, fx.schedule), y);
            };
            const double fd = (loss(plus) - loss(minus)) / (2 * h);
            CHECK(std::abs(grad.values()[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
            CHECK(shift[i] - eps.values()[i] == doctest::Approx(grad.values()[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("full-backprop guidance matches central differences through the denoiser") {
    Fixture fx;
    std::mt19937_64 rng(4);
    const auto xt = random_matrix(2, 3, rng);
    const std::vector<int> labels = {0, 2}, y = {1, 3};
    const int t = 40;
    const auto grad = guidance_gradient_through_denoiser(fx.denoiser, xt, t, labels, fx.current, y, fx.schedule);
    const auto eps_fn = epsilon_fn(fx.denoiser);
    const double h = 1e-6;
    for (std::size_t i = 0; i < xt.size(); ++i) {
        auto plus = flat(xt), minus = flat(xt);
        plus[i] += h;
        minus[i] -= h;
        const auto loss = [&](const std::vector<double>& x) {
            const auto xx = Tensor::matrix(2, 3, x);
            return ce_sum(fx.current, predict_z0(xx, t, eps_fn(xx, t, labels), fx.schedule), y);
        };
        const double fd = (loss(plus) - loss(minus)) / (2 * h);
        CHECK(std::abs(grad.values()[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("a small positive step lowers the target loss of the next clean estimate") {
    Fixture fx;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto eps = random_matrix(6, 3, rng);
        const auto xt = random_matrix(6, 3, rng);
        const int t = 10 + 4 * trial;
        const auto z0 = predict_z0(xt, t, eps, fx.schedule);
        const std::vector<int> y = {0, 1, 2, 3, 1, 2};
        const auto guided = guide_epsilon(eps, xt, t, z0, fx.current, y, 1e-3, 1, fx.schedule);
        const double plain = ce_sum(fx.current, ddim_step(xt, t, 0, eps, fx.schedule), y);
        const double moved = ce_sum(fx.current, ddim_step(xt, t, 0, guided, fx.schedule), y);
        CHECK(moved < plain);
        const auto away = guide_epsilon(eps, xt, t, z0, fx.current, y, 1e-3, -1, fx.schedule);
        CHECK(ce_sum(fx.current, ddim_step(xt, t, 0, away, fx.schedule), y) > plain);
    }
}

TEST_CASE("guide_epsilon argument checks") {
    Fixture fx;
    std::mt19937_64 rng(6);
    const auto eps = random_matrix(2, 3, rng);
    const auto z0 = predict_z0(eps, 5, eps, fx.schedule);
    const std::vector<int> ok = {0, 1}, bad = {0, 4};
    CHECK_THROWS_AS(guide_epsilon(eps, eps, 5, z0, fx.current, bad, 0.1, 1, fx.schedule), ContractError);
    CHECK_THROWS_AS(guide_epsilon(eps, eps, 5, z0, fx.current, ok, 0.1, 0, fx.schedule), ContractError);
    CHECK_THROWS_AS(guide_epsilon(eps, eps, 5, z0, fx.current, ok, -0.1, 1, fx.schedule), ContractError);
    CHECK_THROWS_AS(guide_epsilon(eps, random_matrix(3, 3, rng), 5, z0, fx.current, ok, 0.1, 1, fx.schedule),
                    DimensionError);
}

TEST_CASE("restricted argmax examples") {
    const std::vector<double> logits = {0.1, 2.0, -1.0};
    const std::vector<int> set12 = {1, 2}, set2 = {2}, none;
    CHECK(restricted_argmax(logits, set12) == 1);
    CHECK(restricted_argmax(logits, set2) == 2);
    const std::vector<double> tie = {0.5, 3.0, 3.0, 3.0};
    const std::vector<int> set321 = {3, 2, 1};
    CHECK(restricted_argmax(tie, set321) == 1);
    CHECK_THROWS_AS(restricted_argmax(logits, none), ContractError);
}

TEST_CASE("target selection is the restricted argmax of the logits on z0") {
    Fixture fx;
    std::mt19937_64 rng(7);
    const auto z0 = random_matrix(30, 3, rng);
    const std::vector<int> candidates = {2, 3};
    const auto chosen = select_target_classes(fx.current, z0, candidates);
    const auto logits = fx.current.logits(z0);
    for (std::size_t r = 0; r < 30; ++r) {
        const std::span<const double> row(logits.values().data() + 4 * r, 4);
        CHECK(chosen[r] == restricted_argmax(row, candidates));
    }
    const std::vector<int> single = {1};
    for (int c : select_target_classes(fx.current, z0, single)) CHECK(c == 1);
    CHECK_THROWS_AS(select_target_classes(fx.current, z0, std::span<const int>{}), ContractError);
}

TEST_CASE("rehearsal sampling keeps the requested labels and stays finite") {
    Fixture fx;
    const std::vector<int> source = {0, 1, 0, 1, 1, 0};
    const std::vector<int> current = {2, 3};
    const SamplerConfig sampler{8, 21};
    const auto plain = sample(fx.denoiser, source, sampler, fx.schedule);
    const auto none = sample_rehearsal(fx.models(), source, current, {GuidanceVariant::None, 0.7}, sampler);
    CHECK(flat(none.x) == flat(plain));
    for (auto v : all_variants()) {
        for (double s : {0.0, 0.25, 1.0}) {
            const auto batch = sample_rehearsal(fx.models(), source, current, {v, s}, sampler);
            CHECK(batch.labels == source);
            CHECK(batch.x.shape() == Shape{source.size(), 3});
            for (double x : batch.x.values()) CHECK(std::isfinite(x));
            if (s == 0.0) CHECK(flat(batch.x) == flat(plain));
        }
    }
}

TEST_CASE("each variant consults its own classifier") {
    Fixture fx;
    const std::vector<int> source = {0, 1};
    const std::vector<int> current = {2, 3};
    const RehearsalModels prev_only{fx.denoiser, fx.schedule, &fx.previous, nullptr};
    const RehearsalModels curr_only{fx.denoiser, fx.schedule, nullptr, &fx.current};
    const SamplerConfig sampler{4, 1};
    for (auto v : {GuidanceVariant::Guide, GuidanceVariant::CurrMinus}) {
        CHECK_THROWS_AS(sample_rehearsal(prev_only, source, current, {v, 0.1}, sampler), ContractError);
        CHECK_NOTHROW(sample_rehearsal(curr_only, source, current, {v, 0.1}, sampler));
    }
    for (auto v : {GuidanceVariant::PrevPlus, GuidanceVariant::PrevMinus}) {
        CHECK_THROWS_AS(sample_rehearsal(curr_only, source, current, {v, 0.1}, sampler), ContractError);
        CHECK_NOTHROW(sample_rehearsal(prev_only, source, current, {v, 0.1}, sampler));
    }
    CHECK_THROWS_AS(sample_rehearsal(fx.models(), source, std::span<const int>{}, {GuidanceVariant::Guide, 0.1}, sampler),
                    ContractError);
    CHECK_THROWS_AS(sample_rehearsal(fx.models(), source, current, {GuidanceVariant::Guide, -1.0}, sampler),
                    ConfigError);
}

TEST_CASE("guided hooks match hand-written hooks") {
    Fixture fx;
    const std::vector<int> source = {0, 1, 1};
    const std::vector<int> current = {2, 3};
    const SamplerConfig sampler{6, 4};
    const double s = 0.3;
    const auto manual = [&](const Classifier& f, int sign, bool guide) {
        return [&f, sign, guide, &current, s](const StepContext& ctx) {
            const auto z0 = predict_z0(ctx.x_t, ctx.t, ctx.eps, ctx.schedule);
            std::vector<int> y(ctx.labels.begin(), ctx.labels.end());
            if (guide) y = select_target_classes(f, z0, current);
            return guide_epsilon(ctx.eps, ctx.x_t, ctx.t, z0, f, y, s, sign, ctx.schedule);
        };
    };
    const auto check = [&](GuidanceVariant v, const Classifier& f, int sign, bool guide) {
        const auto got = sample_rehearsal(fx.models(), source, current, {v, s}, sampler).x;
        const auto expect = sample(fx.denoiser, source, sampler, fx.schedule, manual(f, sign, guide));
        const auto a = flat(got), b = flat(expect);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    };
    check(GuidanceVariant::Guide, fx.current, 1, true);
    check(GuidanceVariant::PrevPlus, fx.previous, 1, false);
    check(GuidanceVariant::PrevMinus, fx.previous, -1, false);
    check(GuidanceVariant::CurrMinus, fx.current, -1, false);
}

TEST_CASE("dual guidance degenerate cases") {
    Fixture fx;
    const SamplerConfig sampler{6, 9};
    const std::size_t n = 5;
    const std::vector<int> uncond(n, fx.denoiser.unconditional_label());
    const auto plain = sample(fx.denoiser, uncond, sampler, fx.schedule);
    CHECK(flat(dual_guided_sample(fx.denoiser, fx.schedule, fx.current, {0, 1, 0.0, 0.0}, n, sampler)) == flat(plain));

    const std::vector<int> c1(n, 0);
    const auto single = sample(fx.denoiser, uncond, sampler, fx.schedule, [&](const StepContext& ctx) {
        const auto z0 = predict_z0(ctx.x_t, ctx.t, ctx.eps, ctx.schedule);
        return guide_epsilon(ctx.eps, ctx.x_t, ctx.t, z0, fx.current, c1, 0.4, 1, ctx.schedule);
    });
    const auto dual = flat(dual_guided_sample(fx.denoiser, fx.schedule, fx.current, {0, 1, 0.4, 0.0}, n, sampler));
    const auto ref = flat(single);
    for (std::size_t i = 0; i < dual.size(); ++i) CHECK(dual[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    CHECK_THROWS_AS(dual_guided_sample(fx.denoiser, fx.schedule, fx.current, {1, 1, 1.0, 1.0}, n, sampler),
                    ContractError);
    CHECK_THROWS_AS(dual_guided_sample(fx.denoiser, fx.schedule, fx.current, {0, 1, -1.0, 1.0}, n, sampler),
                    ContractError);
}
