#pragma once

#include <span>
#include <vector>

#include "sage/linalg.hpp"
#include "sage/rng.hpp"
#include "sage/tensor.hpp"

namespace sage {

// Per-channel feature statistics: the style carrier.
struct ChannelStats {
    std::vector<double> mu;
    std::vector<double> sigma;

    int channels() const { return static_cast<int>(mu.size()); }
};

struct StyleAlignConfig {
    double tau = 0.1;          // gate probability per forward pass
    double eps_cov = 1e-5;     // covariance ridge before Cholesky
    double sigma_floor = 1e-5; // lower clamp on sampled sigma
    double eps_div = 1e-6;     // divisor guard in renormalization
    bool diagonal_only = false;
    bool per_sample_gate = false;  // alternative gate reading: one Bernoulli per sample
};

// Batch-level Gaussian over (mu, sigma) vectors. `cov_*` hold the unbiased
// sample covariances as fitted (pre-ridge, diagonal_only already applied);
// `chol_*` factor cov + eps_cov I.
struct EmpiricalStyleDistribution {
    std::vector<double> m_mu, m_sigma;
    Matrix cov_mu, cov_sigma;
    Matrix chol_mu, chol_sigma;

    int channels() const { return static_cast<int>(m_mu.size()); }
};

// Population per-channel mean / standard deviation of z [K,H,W].
ChannelStats channel_stats(const Tensor& z);

// Fit the empirical Gaussian from B >= 2 per-sample statistics.
EmpiricalStyleDistribution fit_empirical(std::span<const ChannelStats> batch_stats,
                                         const StyleAlignConfig& cfg);

// Sum of the two Gaussian log-densities at `stats` (diagnostic only).
double style_log_prob(const EmpiricalStyleDistribution& dist, const ChannelStats& stats);

// Draw replacement statistics: K normals for mu, then K for sigma
// (2K normal draws total); sampled sigma is clamped at cfg.sigma_floor.
ChannelStats sample_style(const EmpiricalStyleDistribution& dist, const StyleAlignConfig& cfg,
                          Rng& rng);

// Per channel: (z - mu(z)) / (sigma(z) + eps_div) * sigma_target + mu_target.
// Differentiable w.r.t. z, including through mu(z) and sigma(z); the target
// is a constant.
Tensor renormalize(const Tensor& z, const ChannelStats& target, const StyleAlignConfig& cfg);

// The full alignment module on a batch [B,K,H,W]. Identity when train_mode
// is false or the tau gate stays closed. When open: fit over the whole
// batch, then independently sample_style + renormalize each sample.
//
// Draw order in train_mode: 1 uniform for the gate (B uniforms with
// per_sample_gate), then 2K normals per transformed sample in index order.
Tensor apply_module(const Tensor& batch, const StyleAlignConfig& cfg, Rng& rng, bool train_mode);

}  // namespace sage
