#pragma once

#include <span>

#include "sage/tensor.hpp"

namespace sage {

struct LossConfig {
    double lambda_kl = 0.01;
    int num_classes = 2;
};

// ---------------------------------------------------------------------------
// Single-opinion forms. `alpha` is a 1-D tensor of length C; `y` is a one-hot
// vector over the same C (validated).
// ---------------------------------------------------------------------------

// alpha~ = y + (1 - y) (.) alpha: true-class evidence removed.
Tensor adjusted_alpha(const Tensor& alpha, std::span<const double> y);

// KL[Dir(p | alpha~) || Dir(p | 1)], closed form; all alpha~_c must be >= 1.
Tensor kl_dirichlet_uniform(const Tensor& alpha_tilde);

// Expected cross-entropy under Dir(alpha) plus lambda * KL regularizer.
Tensor ece_loss(const Tensor& alpha, std::span<const double> y, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Batched forms over rows; labels are class indices. These are what the
// training loop drives; the single forms above are thin wrappers.
// ---------------------------------------------------------------------------

Tensor adjusted_alpha_batch(const Tensor& alpha, std::span<const int> labels);  // [B,C]
Tensor kl_dirichlet_uniform_batch(const Tensor& alpha_tilde);                   // -> [B]
Tensor ece_loss_batch(const Tensor& alpha, std::span<const int> labels,
                      const LossConfig& cfg);  // -> [B]

// L1 norm of the off-diagonal unbiased sample covariance of `features`
// [B,d]; B >= 2 required.
Tensor decorrelation_loss(const Tensor& features);

}  // namespace sage
