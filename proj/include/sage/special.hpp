#pragma once

namespace sage {

// psi(x) for x > 0. Upward recurrence into the asymptotic regime (x >= 8),
// then the Bernoulli series. Absolute error <= 1e-10 on [1e-3, 1e6].
// Throws std::domain_error for non-positive or non-finite x.
double digamma(double x);

// psi'(x) for x > 0; same scheme. Needed as the derivative of digamma.
double trigamma(double x);

// ln Gamma(x) for x > 0; recurrence plus Stirling series. Accurate to a few
// ulp of the true value everywhere on [1e-3, 1e6] (the value itself grows to
// ~1.3e7, so "absolute" accuracy is ulp-bound at the top of the range).
double log_gamma(double x);

}  // namespace sage
