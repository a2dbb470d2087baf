#include <doctest.h>

#include "test_util.hpp"

#include <cmath>

#include "sage/linalg.hpp"
#include "sage/rng.hpp"

using namespace sage;

namespace {

Matrix from_rows(int n, std::vector<double> v) {
    Matrix m(n, n);
    m.data = std::move(v);
    return m;
}

Matrix random_spd(int n, Rng& rng) {
    // A^T A + n * I is comfortably positive definite
    Matrix a(n, n);
    for (auto& v : a.data) v = rng.normal();
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += a(k, i) * a(k, j);
            m(i, j) = s + (i == j ? n : 0.0);
        }
    return m;
}

}  // namespace

TEST_CASE("cholesky of the identity is the identity") {
    Matrix l = cholesky(Matrix::identity(3));
    CHECK(l.data == Matrix::identity(3).data);
}

TEST_CASE("cholesky worked 2x2 example") {
    Matrix l = cholesky(from_rows(2, {4, 2, 2, 5}));
    CHECK(l(0, 0) == approx(2.0).abs(1e-12));
    CHECK(l(0, 1) == approx(0.0).abs(1e-12));
    CHECK(l(1, 0) == approx(1.0).abs(1e-12));
    CHECK(l(1, 1) == approx(2.0).abs(1e-12));
}

TEST_CASE("indefinite matrix raises a pivot-level error") {
    try {
        cholesky(from_rows(2, {1, 2, 2, 1}));
        FAIL("expected CholeskyError");
    } catch (const CholeskyError& e) {
        CHECK(e.pivot == 1);
        CHECK(std::string(e.what()).find("pivot") != std::string::npos);
    }
    CHECK_THROWS_AS(cholesky(from_rows(2, {1, 0, 1, 1})), std::invalid_argument);  // asymmetric
}

TEST_CASE("cholesky round trip on random SPD matrices up to size 64") {
    Rng rng(31);
    for (int n : {2, 5, 16, 64}) {
        Matrix m = random_spd(n, rng);
        Matrix l = cholesky(m);
        double worst = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int k = 0; k <= std::min(i, j); ++k) s += l(i, k) * l(j, k);
                worst = std::max(worst, std::fabs(s - m(i, j)));
            }
        CHECK(worst <= 1e-8);
    }
}

TEST_CASE("sample_mvn degenerate cases") {
    Rng rng(5);
    Matrix zero2(2, 2);
    const std::vector<double> mean = {0.0, 0.0};
    CHECK(sample_mvn(mean, zero2, rng) == std::vector<double>{0.0, 0.0});
    Matrix zero1(1, 1);
    const std::vector<double> mean5 = {5.0};
    CHECK(sample_mvn(mean5, zero1, rng) == std::vector<double>{5.0});
    CHECK_THROWS_AS(sample_mvn(mean, zero1, rng), ShapeError);
}

TEST_CASE("sample_mvn law of large numbers") {
    Rng rng(77);
    Matrix chol = Matrix::identity(1);
    const std::vector<double> mean = {0.0};
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = sample_mvn(mean, chol, rng)[0];
        sum += x;
        sq += x * x;
    }
    const double m = sum / n;
    CHECK(std::fabs(m) < 0.02);
    CHECK(std::fabs(sq / n - m * m - 1.0) < 0.05);
}

TEST_CASE("sample_mvn consumes exactly dim normals in index order") {
    Rng a(123), b(123);
    Matrix chol = from_rows(2, {1, 0, 0.5, 2});
    const std::vector<double> mean = {1.0, -1.0};
    const auto x = sample_mvn(mean, chol, a);
    const double g0 = b.normal(), g1 = b.normal();
    CHECK(x[0] == approx(1.0 + g0).abs(1e-15));
    CHECK(x[1] == approx(-1.0 + 0.5 * g0 + 2.0 * g1).abs(1e-15));
}

TEST_CASE("mvn_log_density at the mode and one sigma out") {
    Matrix chol = Matrix::identity(1);
    const std::vector<double> mean = {0.0};
    const double at_mode = mvn_log_density(mean, chol, std::vector<double>{0.0});
    CHECK(at_mode == approx(-0.9189385332046727).abs(1e-12));
    const double off = mvn_log_density(mean, chol, std::vector<double>{1.0});
    CHECK(at_mode - off == approx(0.5).abs(1e-12));
}
