// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <doctest.h>

#include "guidelab/errors.hpp"
#include "guidelab/tensor.hpp"

using namespace guidelab;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Central differences of a scalar function of the flat values of `x`,
// compared with the gradient that backward() leaves on x.
void check_gradient(const Tensor& x, const std::function<Tensor(const Tensor&)>& f, double tol = 1e-6) {
    Tensor leaf = x.detach(true);
    backward(f(leaf));
    const auto g = leaf.grad_copy();
    const double h = 1e-5;
    std::vector<double> base(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < base.size(); ++i) {
        auto plus = base, minus = base;
        plus[i] += h;
        minus[i] -= h;
        const double fp = f(Tensor::from(x.shape(), plus)).item();
        const double fm = f(Tensor::from(x.shape(), minus)).item();
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::abs(g[i] - fd) <= tol * std::max(1.0, std::abs(fd)));
    }
}

}  // namespace

TEST_CASE("shape invariants of leaves") {
    const auto t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(Tensor::from({0, 2}, {}), DimensionError);
    CHECK_FALSE(t.has_grad());
}

TEST_CASE("softmax of equal logits is uniform") {
    const auto s = softmax(Tensor::vector({0, 0, 0}), 0);
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto x = Tensor::matrix(7, 5, randn(35, rng, 20.0));
        const auto s = softmax(x, 1);
        for (std::size_t r = 0; r < 7; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < 5; ++c) {
                CHECK(s.at(r, c) >= 0.0);
                total += s.at(r, c);
            }
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("cross entropy of two equal logits is ln 2") {
    const std::vector<int> y = {0};
    CHECK(cross_entropy(Tensor::vector({0, 0}), y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<int> bad = {2};
    CHECK_THROWS_AS(cross_entropy(Tensor::vector({0, 0}), bad), IndexError);
}

TEST_CASE("cross entropy reductions") {
    const auto logits = Tensor::matrix(2, 3, {1, 2, 3, 0, 0, 5});
    const std::vector<int> y = {2, 0};
    const double r0 = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
    const double r1 = -std::log(1.0 / (2.0 + std::exp(5.0)));
    CHECK(cross_entropy(logits, y, Reduction::Sum).item() == doctest::Approx(r0 + r1).epsilon(1e-14));
    CHECK(cross_entropy(logits, y, Reduction::Mean).item() == doctest::Approx((r0 + r1) / 2).epsilon(1e-14));
}

TEST_CASE("identity matmul returns the vector") {
    const auto eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto v = Tensor::matrix(3, 1, {4, -5, 6});
    const auto out = matmul(eye, v);
    CHECK(std::vector<double>(out.values().begin(), out.values().end()) == std::vector<double>{4, -5, 6});
}

TEST_CASE("shape mismatches name the op") {
    const auto a = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
    const auto b = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("matmul") != std::string::npos);
        CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, Tensor::matrix(3, 2, std::vector<double>(6, 1.0))), DimensionError);
    CHECK_THROWS_AS(mse(a, Tensor::vector({1, 2})), DimensionError);
}

TEST_CASE("gradient of sum of squares") {
    auto x = Tensor::vector({1, 2}, true);
    backward(sum(square(x)));
    CHECK(x.grad_copy() == std::vector<double>{2, 4});
}

TEST_CASE("a loss constant in x gives a zero gradient") {
    auto x = Tensor::vector({1.5, -2.0}, true);
    const auto loss = add(sub(sum(x), sum(x)), Tensor::scalar(3.0));
    backward(loss);
    CHECK(x.grad_copy() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("backward needs a scalar loss that depends on a tracked tensor") {
    auto x = Tensor::vector({1, 2}, true);
    CHECK_THROWS_AS(backward(square(x)), ContractError);
    CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), ContractError);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
    auto x = Tensor::vector({3}, true);
    backward(sum(x));
    backward(sum(scale(x, 2.0)));
    CHECK(x.grad_copy() == std::vector<double>{3.0});
    x.clear_grad();
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("every differentiable op matches central differences") {
    std::mt19937_64 rng(42);
    const auto x = Tensor::matrix(3, 4, randn(12, rng));
    const auto w = Tensor::matrix(4, 2, randn(8, rng));
    const auto other = Tensor::matrix(3, 4, randn(12, rng));
    const auto row = Tensor::vector(randn(4, rng));
    const std::vector<int> targets = {1, 0, 3};
    const std::vector<int> idx = {2, 0, 2, 1};

    SUBCASE("matmul") { check_gradient(x, [&](const Tensor& t) { return sum(square(matmul(t, w))); }); }
    SUBCASE("matmul right operand") {
        check_gradient(w, [&](const Tensor& t) { return sum(square(matmul(x, t))); });
    }
    SUBCASE("add broadcast row") {
        check_gradient(row, [&](const Tensor& t) { return sum(square(add(x, t))); });
    }
    SUBCASE("sub and mul") {
        check_gradient(x, [&](const Tensor& t) { return sum(mul(sub(t, other), add(t, other))); });
    }
    SUBCASE("scale") { check_gradient(x, [&](const Tensor& t) { return sum(square(scale(t, -1.7))); }); }
    SUBCASE("relu") { check_gradient(x, [&](const Tensor& t) { return sum(mul(relu(t), other)); }); }
    SUBCASE("silu") { check_gradient(x, [&](const Tensor& t) { return sum(mul(silu(t), other)); }); }
    SUBCASE("concat columns") {
        check_gradient(x, [&](const Tensor& t) { return sum(square(concat({t, other}, 1))); });
    }
    SUBCASE("concat rows") {
        check_gradient(x, [&](const Tensor& t) { return sum(mul(concat({t, t}, 0), concat({other, x}, 0))); });
    }
    SUBCASE("softmax") { check_gradient(x, [&](const Tensor& t) { return sum(mul(softmax(t, 1), other)); }); }
    SUBCASE("cross entropy") { check_gradient(x, [&](const Tensor& t) { return cross_entropy(t, targets); }); }
    SUBCASE("cross entropy sum") {
        check_gradient(x, [&](const Tensor& t) { return cross_entropy(t, targets, Reduction::Sum); });
    }
    SUBCASE("mse") { check_gradient(x, [&](const Tensor& t) { return mse(t, other); }); }
    SUBCASE("gather") {
        check_gradient(x, [&](const Tensor& t) { return sum(square(add(gather(t, idx), row))); });
    }
    SUBCASE("mean") { check_gradient(x, [&](const Tensor& t) { return mean(square(t)); }); }
}

TEST_CASE("gradients with respect to inputs are available under InputsOnly") {
    std::mt19937_64 rng(9);
    auto w = Tensor::matrix(2, 2, randn(4, rng), true);
    w.mark_parameter();
    GradModeGuard guard(GradMode::InputsOnly);
    auto x = Tensor::matrix(1, 2, {0.5, -0.25}, true);
    backward(sum(square(matmul(x, w))));
    CHECK(x.has_grad());
    CHECK_FALSE(w.has_grad());
}

TEST_CASE("disabled grad mode builds no graph") {
    auto x = Tensor::vector({1, 2}, true);
    GradModeGuard guard(GradMode::Disabled);
    const auto y = sum(square(x));
    CHECK_FALSE(y.requires_grad());
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("tape replay is bit-identical") {
    auto run = [] {
        std::mt19937_64 rng(123);
        auto w = Tensor::matrix(5, 3, randn(15, rng), true);
        const auto x = Tensor::matrix(4, 5, randn(20, rng));
        const std::vector<int> y = {0, 2, 1, 2};
        const auto loss = cross_entropy(silu(matmul(x, w)), y);
        backward(loss);
        auto g = w.grad_copy();
        g.push_back(loss.item());
        return g;
    };
    CHECK(run() == run());
}

TEST_CASE("mutable values only on leaves") {
    auto x = Tensor::vector({1, 2});
    x.mutable_values()[0] = 5.0;
    CHECK(x.values()[0] == 5.0);
    const auto y = scale(Tensor::vector({1.0}, true), 2.0);
    auto y_copy = y;
    CHECK_THROWS_AS(y_copy.mutable_values(), ContractError);
}
