#include <doctest.h>

#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sage/rng.hpp"
#include "sage/special.hpp"
#include "sage/tensor.hpp"

using namespace sage;

TEST_CASE("sum of squares gradient") {
    Tensor x = Tensor::from({3}, {1.0, 2.0, 3.0});
    x.set_requires_grad(true);
    Tensor loss = sum(x * x);
    CHECK(loss.item() == approx(14.0));
    loss.backward();
    CHECK(x.grad()[0] == approx(2.0));
    CHECK(x.grad()[1] == approx(4.0));
    CHECK(x.grad()[2] == approx(6.0));
}

TEST_CASE("constant loss leaves grads at zero") {
    Tensor x = Tensor::from({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tensor c = Tensor::scalar(5.0);
    c.backward();  // legal no-op: nothing reachable
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("digamma backward equals trigamma") {
    Tensor x = Tensor::from({}, {2.0});
    x.set_requires_grad(true);
    Tensor loss = digamma(x);
    loss.backward();
    // oracle 1: closed form pi^2/6 - 1
    CHECK(x.grad()[0] == approx(M_PI * M_PI / 6.0 - 1.0).abs(1e-10));
    // oracle 2: central finite difference, h = 1e-6
    const double h = 1e-6;
    const double fd = (sage::digamma(2.0 + h) - sage::digamma(2.0 - h)) / (2.0 * h);
    CHECK(x.grad()[0] == approx(fd).abs(1e-7));
    CHECK(x.grad()[0] == approx(0.6449340668).abs(1e-9));
}

TEST_CASE("gradients accumulate across multiple uses") {
    Tensor x = Tensor::from({}, {3.0});
    x.set_requires_grad(true);
    Tensor loss = x * x + x;  // d/dx = 2x + 1
    loss.backward();
    CHECK(x.grad()[0] == approx(7.0));
    // a second, separate graph accumulates on top until zero_grad
    Tensor loss2 = x * 2.0;
    loss2.backward();
    CHECK(x.grad()[0] == approx(9.0));
    x.zero_grad();
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("backward on a consumed graph throws; non-scalar backward throws") {
    Tensor x = Tensor::from({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tensor y = x * x;
    CHECK_THROWS_AS(y.backward(), ShapeError);
    Tensor loss = sum(y);
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), std::logic_error);
}

TEST_CASE("scalar broadcast arithmetic") {
    Tensor x = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor y = x * 2.0 + 1.0;
    CHECK(y.values() == std::vector<double>{3.0, 5.0, 7.0, 9.0});
    Tensor s = Tensor::scalar(10.0);
    Tensor z = s / x;
    CHECK(z.values()[3] == approx(2.5));
    CHECK_THROWS_AS(x + Tensor::from({3}, {1, 2, 3}), ShapeError);
}

TEST_CASE("matmul known product and shapes") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(c.values() == std::vector<double>{58, 64, 139, 154});
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("slice, stack and reshape round trips") {
    Rng rng(3);
    std::vector<double> v(24);
    for (auto& x : v) x = rng.uniform();
    Tensor t = Tensor::from({4, 3, 2}, v);
    std::vector<Tensor> parts;
    for (int i = 0; i < 4; ++i) parts.push_back(index0(t, i));
    Tensor re = stack0(parts);
    CHECK(re.values() == t.values());
    CHECK(re.shape() == t.shape());
    Tensor flat = reshape(t, {24});
    CHECK(flat.values() == t.values());
    Tensor mid = slice0(t, 1, 2);
    CHECK(mid.shape() == Shape{2, 3, 2});
    CHECK(mid.values()[0] == t.values()[6]);
}

TEST_CASE("transpose and rowsum") {
    Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor mt = transpose(m);
    CHECK(mt.shape() == Shape{3, 2});
    CHECK(mt.values() == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK(rowsum(m).values() == std::vector<double>{6, 15});
}

TEST_CASE("non-finite results are rejected") {
    Tensor x = Tensor::from({2}, {1.0, 0.0});
    CHECK_THROWS_AS(1.0 / x, NumericalError);
    CHECK_THROWS_AS(log(x), NumericalError);
    CHECK_THROWS_AS(Tensor::from({1}, {std::numeric_limits<double>::infinity()}), NumericalError);
}

TEST_CASE("no-grad guard suppresses graph construction") {
    Tensor x = Tensor::from({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    {
        NoGradGuard ng;
        Tensor y = sum(x * x);
        CHECK_FALSE(y.requires_grad());
    }
    Tensor y = sum(x * x);
    CHECK(y.requires_grad());
}

TEST_CASE("reverse-mode matches finite differences on a composite expression") {
    Rng rng(21);
    std::vector<double> v(6);
    for (auto& x : v) x = 0.5 + rng.uniform();
    Tensor x = Tensor::from({6}, v);
    x.set_requires_grad(true);
    auto build = [&]() {
        Tensor a = exp(x * 0.3) + log(x);
        Tensor b = tanh(a) * sqrt(x);
        return sum(b * b);
    };
    Tensor loss = build();
    loss.backward();
    std::vector<double> g = x.grad();
    const double h = 1e-5;
    NoGradGuard ng;
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto& vals = x.values_mut();
        const double keep = vals[i];
        vals[i] = keep + h;
        const double up = build().item();
        vals[i] = keep - h;
        const double dn = build().item();
        vals[i] = keep;
        const double fd = (up - dn) / (2 * h);
        CHECK(std::fabs(g[i] - fd) / std::max({std::fabs(g[i]), std::fabs(fd), 1e-6}) < 1e-4);
    }
}
