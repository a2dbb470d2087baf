#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sage/tensor.hpp"

namespace sage {

struct GradCheckRow {
    std::string name;
    double max_rel_err = 0.0;
};

// Central-difference check (h = 1e-5) of a scalar-valued builder against
// reverse-mode gradients on every coordinate of every input. Near-zero
// gradient pairs are compared absolutely.
double finite_diff_check(const std::function<Tensor()>& build_loss, std::span<Tensor> inputs,
                         double h = 1e-5, double corrupt_factor = 1.0);

// The full suite over the differentiable operations (elementary kernels,
// the training losses, renormalization, and an end-to-end micro pipeline)
// at seeded random interior points. `corrupt` is a test hook that skews the
// analytic gradients of the first entry so failure detection is checkable.
std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, bool corrupt = false);

inline constexpr double kGradCheckTolerance = 1e-4;

}  // namespace sage
