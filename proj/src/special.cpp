#include "sage/special.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sage {

namespace {

void check_domain(double x, const char* fn) {
    if (!std::isfinite(x) || x <= 0.0) {
        throw std::domain_error(std::string(fn) + ": argument must be positive and finite, got " +
                                std::to_string(x));
    }
}

constexpr double kAsymptoticThreshold = 8.0;

}  // namespace

double digamma(double x) {
    check_domain(x, "digamma");
    double acc = 0.0;
    while (x < kAsymptoticThreshold) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    static const double coef[] = {
        1.0 / 12.0,  -1.0 / 120.0,     1.0 / 252.0, -1.0 / 240.0,
        1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0,
    };
    double series = 0.0;
    double p = inv2;
    for (double c : coef) {
        series += c * p;
        p *= inv2;
    }
    return acc + std::log(x) - 0.5 * inv - series;
}

double trigamma(double x) {
    check_domain(x, "trigamma");
    double acc = 0.0;
    while (x < kAsymptoticThreshold) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_{2n} x^{-(2n+1)}
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    static const double coef[] = {
        1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0,
    };
    double series = 0.0;
    double p = inv * inv2;
    for (double c : coef) {
        series += c * p;
        p *= inv2;
    }
    return acc + inv + 0.5 * inv2 + series;
}

double log_gamma(double x) {
    check_domain(x, "log_gamma");
    double acc = 0.0;
    while (x < kAsymptoticThreshold) {
        acc -= std::log(x);
        x += 1.0;
    }
    // Stirling: (x - 1/2) ln x - x + ln(2 pi)/2 + sum B_{2n} / (2n(2n-1) x^{2n-1})
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    static const double coef[] = {
        1.0 / 12.0,   -1.0 / 360.0,      1.0 / 1260.0, -1.0 / 1680.0,
        1.0 / 1188.0, -691.0 / 360360.0, 1.0 / 156.0,
    };
    double series = 0.0;
    double p = inv;
    for (double c : coef) {
        series += c * p;
        p *= inv2;
    }
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    return acc + (x - 0.5) * std::log(x) - x + half_log_2pi + series;
}

}  // namespace sage
