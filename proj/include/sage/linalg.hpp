#pragma once

#include <span>
#include <vector>

#include "sage/errors.hpp"
#include "sage/rng.hpp"

namespace sage {

// Small dense row-major matrix for the non-differentiable linear algebra
// (style covariances, Cholesky factors).
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    static Matrix identity(int n);
};

// Lower-triangular L with L L^T = m. `m` must be square, symmetric (1e-8
// tolerance) and positive definite; a non-positive pivot raises
// CholeskyError carrying the failing pivot index.
Matrix cholesky(const Matrix& m);

// mean + chol . g with g a vector of `dim` independent standard normals.
// Consumes exactly mean.size() normal draws from `rng`, in index order.
std::vector<double> sample_mvn(std::span<const double> mean, const Matrix& chol, Rng& rng);

// log N(x | mean, L L^T) evaluated via the Cholesky factor.
double mvn_log_density(std::span<const double> mean, const Matrix& chol, std::span<const double> x);

}  // namespace sage
