// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "guidelab/errors.hpp"
#include "guidelab/diffusion.hpp"

using namespace guidelab;

namespace {

std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Exact noise predictor for data that is a single point p.
EpsilonFn point_mass_oracle(const NoiseSchedule& schedule, std::vector<double> p) {
    return [&schedule, p](const Tensor& x_t, int t, std::span<const int>) {
        const double ab = schedule.alpha_bar(t);
        std::vector<double> out(x_t.size());
        const std::size_t d = p.size();
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = (x_t.values()[i] - std::sqrt(ab) * p[i % d]) / std::sqrt(1.0 - ab);
        return Tensor::from(x_t.shape(), out);
    };
}

}  // namespace

TEST_CASE("linear schedule examples") {
    const auto s = make_linear_schedule(2, 0.1, 0.2);
    CHECK(s.alphas[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alphas[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(s.alpha_bars[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bars[1] == doctest::Approx(0.72).epsilon(1e-15));

    const auto g = make_linear_schedule(3, 0.1, 0.1);
    CHECK(g.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(g.alpha_bar(2) == doctest::Approx(0.81).epsilon(1e-15));
    CHECK(g.alpha_bar(3) == doctest::Approx(0.729).epsilon(1e-15));
    CHECK(g.alpha_bar(0) == 1.0);

    const auto one = make_linear_schedule(1, 0.05, 0.3);
    CHECK(one.num_steps() == 1);
    CHECK(one.alpha_bar(1) == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("invalid schedules are rejected") {
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.1), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.2, 0.1), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.1, 1.0), ConfigError);
    CHECK_THROWS_AS(make_linear_schedule(0, 0.1, 0.2), ConfigError);
}

TEST_CASE("schedule invariants hold for random valid endpoints") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(1e-5, 0.5);
    std::uniform_int_distribution<int> steps(1, 400);
    for (int trial = 0; trial < 200; ++trial) {
        double a = u(rng), b = u(rng);
        if (a > b) std::swap(a, b);
        const auto s = make_linear_schedule(steps(rng), a, b);
        for (int t = 1; t <= s.num_steps(); ++t) {
            CHECK(s.alpha(t) == 1.0 - s.beta(t));
            CHECK(s.beta(t) > 0.0);
            CHECK(s.beta(t) < 1.0);
            CHECK(s.alpha_bar(t) > 0.0);
            CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
            CHECK(s.alpha_bar(t) == doctest::Approx(s.alpha_bar(t - 1) * s.alpha(t)).epsilon(1e-14));
        }
    }
}

TEST_CASE("schedule json round trip") {
    const auto s = make_linear_schedule(50, 1e-4, 0.02);
    const auto r = NoiseSchedule::from_json(s.to_json());
    CHECK(r.betas == s.betas);
    CHECK(r.alpha_bars == s.alpha_bars);
}

TEST_CASE("q_sample closed form") {
    const auto s = make_linear_schedule(2, 0.1, 0.2);
    const auto one = Tensor::vector({1.0});
    CHECK(q_sample(one, 2, one, s).item() == doctest::Approx(1.37766).epsilon(1e-5));
    CHECK(q_sample(Tensor::vector({2.0}), 2, Tensor::vector({0.0}), s).item() ==
          doctest::Approx(2.0 * std::sqrt(0.72)).epsilon(1e-15));
    CHECK(q_sample(Tensor::vector({0.0}), 1, Tensor::vector({3.0}), s).item() ==
          doctest::Approx(3.0 * std::sqrt(0.1)).epsilon(1e-15));
    CHECK_THROWS_AS(q_sample(one, 0, one, s), IndexError);
    CHECK_THROWS_AS(q_sample(one, 3, one, s), IndexError);
    CHECK_THROWS_AS(q_sample(one, 1, Tensor::vector({1, 2}), s), DimensionError);
}

TEST_CASE("predict_z0 inverts q_sample and matches an independent formula") {
    const auto s = make_linear_schedule(1000, 1e-4, 0.02);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> tt(1, 1000);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x0(6), eps(6), other(6);
        for (std::size_t i = 0; i < 6; ++i) x0[i] = n(rng), eps[i] = n(rng), other[i] = n(rng);
        const int t = tt(rng);
        const auto x0t = Tensor::matrix(3, 2, x0);
        const auto et = Tensor::matrix(3, 2, eps);
        const auto xt = q_sample(x0t, t, et, s);
        const auto back = predict_z0(xt, t, et, s);
        for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(back.values()[i] - x0[i]) <= 1e-10);

        double ab = 1.0;
        for (int k = 0; k < t; ++k) ab *= 1.0 - (1e-4 + (0.02 - 1e-4) * k / 999.0);
        const auto z = predict_z0(xt, t, Tensor::matrix(3, 2, other), s);
        for (std::size_t i = 0; i < 6; ++i) {
            const double expect = (xt.values()[i] - std::sqrt(1.0 - ab) * other[i]) / std::sqrt(ab);
            CHECK(z.values()[i] == doctest::Approx(expect).epsilon(1e-10));
        }
    }
    const auto xt = Tensor::vector({0.6});
    CHECK(predict_z0(xt, 10, Tensor::vector({0.0}), s).item() ==
          doctest::Approx(0.6 / std::sqrt(s.alpha_bar(10))).epsilon(1e-15));
}

TEST_CASE("ddim_step examples") {
    const auto s = make_linear_schedule(100, 1e-4, 0.02);
    const auto xt = Tensor::vector({0.3, -0.7});
    const auto eps = Tensor::vector({0.1, 0.4});
    CHECK(flat(ddim_step(xt, 40, 0, eps, s)) == flat(predict_z0(xt, 40, eps, s)));

    const double c = 1.7;
    const auto x = Tensor::vector({std::sqrt(s.alpha_bar(60)) * c});
    CHECK(ddim_step(x, 60, 25, Tensor::vector({0.0}), s).item() ==
          doctest::Approx(std::sqrt(s.alpha_bar(25)) * c).epsilon(1e-12));

    CHECK_THROWS_AS(ddim_step(xt, 10, 10, eps, s), ContractError);
    CHECK_THROWS_AS(ddim_step(xt, 10, 20, eps, s), ContractError);
}

TEST_CASE("ddim timesteps are strictly decreasing from T to 1") {
    for (int T : {1, 7, 200, 1000}) {
        for (int k : {1, 2, 5, 20, 50}) {
            if (k > T) {
                CHECK_THROWS(ddim_timesteps(T, k));
                continue;
            }
            const auto ts = ddim_timesteps(T, k);
            CHECK(static_cast<int>(ts.size()) == k);
            CHECK(ts.front() == T);
            CHECK(ts.back() == (k == 1 ? T : 1));
            for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
        }
    }
    CHECK_THROWS(ddim_timesteps(10, 0));
}

TEST_CASE("point-mass oracle sampling recovers the datum") {
    const auto s = make_linear_schedule(200, 1e-4, 0.02);
    const std::vector<double> p = {0.25, -0.6, 0.9};
    const std::vector<int> labels(16, 0);
    for (int k : {1, 3, 10, 50, 200}) {
        const auto out = sample(point_mass_oracle(s, p), labels, 3, {k, 9}, s);
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out.values()[i] - p[i % 3]) <= 1e-6);
    }
}

TEST_CASE("sampling is a pure function of its inputs") {
    const auto s = make_linear_schedule(100, 1e-4, 0.02);
    Denoiser model({2, 3, {16, 16}, 8, 4}, 11);
    const std::vector<int> labels = {0, 1, 2, 1};
    const auto a = sample(model, labels, {10, 3}, s);
    const auto b = sample(model, labels, {10, 3}, s);
    CHECK(flat(a) == flat(b));
    const auto c = sample(model, labels, {10, 4}, s);
    CHECK(flat(a) != flat(c));
    const auto identity_hook = [](const StepContext& ctx) { return ctx.eps; };
    CHECK(flat(sample(model, labels, {10, 3}, s, identity_hook)) == flat(a));
}

TEST_CASE("denoiser output shape and label range") {
    Denoiser model({3, 4, {8}, 6, 2}, 1);
    const auto x = Tensor::matrix(2, 3, {0, 1, 2, 3, 4, 5});
    const std::vector<int> t = {1, 50};
    const std::vector<int> y = {0, model.unconditional_label()};
    CHECK(model.forward(x, t, y).shape() == Shape{2, 3});
    const std::vector<int> bad = {0, 5};
    CHECK_THROWS_AS(model.forward(x, t, bad), IndexError);
}

TEST_CASE("denoiser checkpoint round trip") {
    const auto s = make_linear_schedule(30, 1e-3, 0.05);
    Denoiser model({2, 2, {8, 8}, 4, 2}, 2);
    NoiseSchedule restored_schedule;
    const auto restored = Denoiser::from_json(model.to_json(s), &restored_schedule);
    CHECK(restored_schedule.betas == s.betas);
    const auto x = Tensor::matrix(1, 2, {0.1, -0.2});
    const std::vector<int> t = {7}, y = {1};
    CHECK(flat(restored.forward(x, t, y)) == flat(model.forward(x, t, y)));
}

TEST_CASE("training loss is nonnegative, near one when untrained, and decreases") {
    const auto s = make_linear_schedule(100, 1e-4, 0.02);
    Denoiser model({2, 2, {32, 32}, 8, 4}, 3);
    Optimizer opt({OptimizerKind::AdamW, 2e-3}, model.parameters());
    Rng rng(8);
    std::vector<double> xv(128);
    std::vector<int> labels(64);
    for (std::size_t i = 0; i < 64; ++i) {
        labels[i] = static_cast<int>(i % 2);
        xv[2 * i] = labels[i] ? 0.5 : -0.5;
        xv[2 * i + 1] = 0.2;
    }
    const auto x0 = Tensor::matrix(64, 2, xv);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 400; ++step) {
        const double loss = diffusion_train_step(model, opt, x0, labels, s, rng);
        CHECK(loss >= 0.0);
        if (step < 20) first += loss / 20;
        if (step >= 380) last += loss / 20;
    }
    CHECK(first > 0.5);
    CHECK(first < 2.0);
    CHECK(last < first);
}
