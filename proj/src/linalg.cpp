#include "sage/linalg.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sage {

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix cholesky(const Matrix& m) {
    if (m.rows != m.cols) throw ShapeError("cholesky: matrix must be square");
    const int n = m.rows;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::fabs(m(i, j) - m(j, i)) > 1e-8) {
                throw std::invalid_argument("cholesky: matrix is not symmetric at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
            }

    Matrix l(n, n);
    for (int j = 0; j < n; ++j) {
        double d = m(j, j);
        for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) {
            throw CholeskyError("cholesky: non-positive pivot " + std::to_string(d) +
                                    " at index " + std::to_string(j),
                                j);
        }
        l(j, j) = std::sqrt(d);
        for (int i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

std::vector<double> sample_mvn(std::span<const double> mean, const Matrix& chol, Rng& rng) {
    const int dim = static_cast<int>(mean.size());
    if (chol.rows != dim || chol.cols != dim) {
        throw ShapeError("sample_mvn: mean has dim " + std::to_string(dim) + " but chol is " +
                         std::to_string(chol.rows) + "x" + std::to_string(chol.cols));
    }
    std::vector<double> g(mean.size());
    for (auto& v : g) v = rng.normal();
    std::vector<double> out(mean.begin(), mean.end());
    for (int i = 0; i < dim; ++i) {
        double s = 0.0;
        for (int j = 0; j <= i; ++j) s += chol(i, j) * g[j];
        out[i] += s;
    }
    return out;
}

double mvn_log_density(std::span<const double> mean, const Matrix& chol,
                       std::span<const double> x) {
    const int dim = static_cast<int>(mean.size());
    if (x.size() != mean.size() || chol.rows != dim || chol.cols != dim) {
        throw ShapeError("mvn_log_density: dimension mismatch");
    }
    // Solve L y = x - mean by forward substitution.
    std::vector<double> y(x.size());
    double log_det_half = 0.0;  // sum log L_ii = 0.5 log det(Sigma)
    double quad = 0.0;
    for (int i = 0; i < dim; ++i) {
        double s = x[i] - mean[i];
        for (int j = 0; j < i; ++j) s -= chol(i, j) * y[j];
        y[i] = s / chol(i, i);
        log_det_half += std::log(chol(i, i));
        quad += y[i] * y[i];
    }
    return -0.5 * dim * std::log(2.0 * std::numbers::pi) - log_det_half - 0.5 * quad;
}

}  // namespace sage
