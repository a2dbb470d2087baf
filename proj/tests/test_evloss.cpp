#include <doctest.h>

#include "test_util.hpp"

#include <cmath>
#include <limits>

#include "sage/evloss.hpp"
#include "sage/rng.hpp"

using namespace sage;

namespace {
// frozen from the closed forms: KL([1,5,1]) = ln 15 - 22/15,
// KL([2,1]) = ln 2 - 1/2, ece([1,5,1], y=0) = 49/20 + 0.01 * KL([1,5,1])
const double kKl151 = std::log(15.0) - 22.0 / 15.0;          // 1.2413835344355433
const double kKl21 = std::log(2.0) - 0.5;                    // 0.1931471805599453
const double kEce151 = 49.0 / 20.0 + 0.01 * kKl151;          // 2.4624138353443554
}  // namespace

TEST_CASE("adjusted_alpha removes true-class evidence") {
    const std::vector<double> y0 = {1, 0, 0};
    CHECK(adjusted_alpha(Tensor::from({3}, {5, 1, 1}), y0).values() ==
          std::vector<double>{1, 1, 1});
    CHECK(adjusted_alpha(Tensor::from({3}, {1, 5, 1}), y0).values() ==
          std::vector<double>{1, 5, 1});
    const std::vector<double> y1 = {0, 1};
    CHECK(adjusted_alpha(Tensor::from({2}, {3, 2}), y1).values() == std::vector<double>{3, 1});
    const std::vector<double> bad = {0.5, 0.5};
    CHECK_THROWS_AS(adjusted_alpha(Tensor::from({2}, {3, 2}), bad), std::invalid_argument);
}

TEST_CASE("kl_dirichlet_uniform worked values") {
    CHECK(kl_dirichlet_uniform(Tensor::from({3}, {1, 1, 1})).item() ==
          approx(0.0).abs(1e-12));
    CHECK(kl_dirichlet_uniform(Tensor::from({3}, {1, 5, 1})).item() ==
          approx(kKl151).abs(1e-10));
    CHECK(kl_dirichlet_uniform(Tensor::from({2}, {2, 1})).item() ==
          approx(kKl21).abs(1e-10));
    CHECK_THROWS_AS(kl_dirichlet_uniform(Tensor::from({2}, {0.5, 1.0})), std::domain_error);
}

TEST_CASE("kl is nonnegative with equality only at the uniform") {
    Rng rng(3);
    for (int i = 0; i < 300; ++i) {
        std::vector<double> a(3);
        double gap = 0.0;
        for (auto& v : a) {
            v = 1.0 + 6.0 * rng.uniform();
            gap += v - 1.0;
        }
        const double kl = kl_dirichlet_uniform(Tensor::from({3}, a)).item();
        CHECK(kl >= -1e-12);
        if (gap > 0.05) CHECK(kl > 0.0);
    }
}

TEST_CASE("ece_loss worked values") {
    LossConfig cfg{0.01, 2};
    const std::vector<double> y0_2 = {1, 0};
    CHECK(ece_loss(Tensor::from({2}, {1, 1}), y0_2, cfg).item() ==
          approx(1.0).abs(1e-10));
    LossConfig cfg3{0.01, 3};
    const std::vector<double> y0_3 = {1, 0, 0};
    CHECK(ece_loss(Tensor::from({3}, {5, 1, 1}), y0_3, cfg3).item() ==
          approx(11.0 / 30.0).abs(1e-10));
    CHECK(ece_loss(Tensor::from({3}, {1, 5, 1}), y0_3, cfg3).item() ==
          approx(kEce151).abs(1e-10));
}

TEST_CASE("ece_loss is monotone decreasing in true-class evidence") {
    LossConfig cfg{0.01, 3};
    const std::vector<double> y = {1, 0, 0};
    double prev = std::numeric_limits<double>::infinity();
    for (double e_true : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0}) {
        const double l =
            ece_loss(Tensor::from({3}, {1.0 + e_true, 2.5, 1.7}), y, cfg).item();
        CHECK(l < prev);
        CHECK(l > 0.0);
        prev = l;
    }
}

TEST_CASE("batched ece matches the single form row by row") {
    Rng rng(9);
    const int rows = 6, c = 4;
    std::vector<double> av(static_cast<std::size_t>(rows) * c);
    for (auto& v : av) v = 1.0 + 5.0 * rng.uniform();
    std::vector<int> labels(rows);
    for (auto& l : labels) l = static_cast<int>(rng.below(c));
    LossConfig cfg{0.01, c};
    Tensor alpha = Tensor::from({rows, c}, av);
    Tensor batched = ece_loss_batch(alpha, labels, cfg);
    for (int i = 0; i < rows; ++i) {
        std::vector<double> row(av.begin() + static_cast<std::size_t>(i) * c,
                                av.begin() + static_cast<std::size_t>(i + 1) * c);
        std::vector<double> y(c, 0.0);
        y[labels[i]] = 1.0;
        CHECK(batched.values()[i] ==
              approx(ece_loss(Tensor::from({c}, row), y, cfg).item()).abs(1e-12));
    }
}

TEST_CASE("decorrelation_loss worked examples") {
    CHECK(decorrelation_loss(Tensor::from({2, 2}, {1, 0, -1, 0})).item() ==
          approx(0.0).abs(1e-12));
    CHECK(decorrelation_loss(Tensor::from({2, 2}, {1, 1, -1, -1})).item() ==
          approx(4.0).abs(1e-12));
    CHECK(decorrelation_loss(Tensor::from({3, 1}, {1, 2, 3})).item() ==
          approx(0.0).abs(1e-15));
    CHECK_THROWS_AS(decorrelation_loss(Tensor::from({1, 2}, {1, 2})), ShapeError);
}

TEST_CASE("decorrelation_loss ignores constant row-wise shifts") {
    Rng rng(10);
    std::vector<double> f(5 * 4);
    for (auto& v : f) v = rng.normal();
    Tensor base = Tensor::from({5, 4}, f);
    std::vector<double> shifted = f;
    const double shifts[4] = {3.0, -2.0, 0.7, 11.0};
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) shifted[static_cast<std::size_t>(i) * 4 + j] += shifts[j];
    CHECK(decorrelation_loss(base).item() ==
          approx(decorrelation_loss(Tensor::from({5, 4}, shifted)).item()).abs(1e-10));
}
