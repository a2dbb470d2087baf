#include "sage/style_align.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sage {

namespace {

// Keeps the sqrt gradient finite on exactly-constant channels; three orders
// of magnitude below anything eps_div can distinguish.
constexpr double kVarianceGuard = 1e-30;

Matrix sample_covariance(const std::vector<std::vector<double>>& rows,
                         std::span<const double> mean) {
    const int k = static_cast<int>(mean.size());
    const int b = static_cast<int>(rows.size());
    Matrix cov(k, k);
    for (const auto& row : rows) {
        for (int i = 0; i < k; ++i) {
            const double di = row[i] - mean[i];
            for (int j = 0; j <= i; ++j) {
                cov(i, j) += di * (row[j] - mean[j]);
            }
        }
    }
    for (int i = 0; i < k; ++i)
        for (int j = 0; j <= i; ++j) {
            cov(i, j) /= (b - 1);
            cov(j, i) = cov(i, j);
        }
    return cov;
}

Matrix ridged(Matrix m, double eps) {
    for (int i = 0; i < m.rows; ++i) m(i, i) += eps;
    return m;
}

}  // namespace

ChannelStats channel_stats(const Tensor& z) {
    const Shape& s = z.shape();
    if (s.size() != 3) throw ShapeError("channel_stats expects [K,H,W], got " + shape_str(s));
    const int k = s[0], hw = s[1] * s[2];
    if (hw < 1) throw ShapeError("channel_stats: empty spatial extent");
    ChannelStats st;
    st.mu.resize(k);
    st.sigma.resize(k);
    const auto& v = z.values();
    for (int c = 0; c < k; ++c) {
        double m = 0.0;
        for (int i = 0; i < hw; ++i) m += v[static_cast<std::size_t>(c) * hw + i];
        m /= hw;
        double var = 0.0;
        for (int i = 0; i < hw; ++i) {
            const double d = v[static_cast<std::size_t>(c) * hw + i] - m;
            var += d * d;
        }
        st.mu[c] = m;
        st.sigma[c] = std::sqrt(var / hw);
    }
    return st;
}

EmpiricalStyleDistribution fit_empirical(std::span<const ChannelStats> batch_stats,
                                         const StyleAlignConfig& cfg) {
    const int b = static_cast<int>(batch_stats.size());
    if (b < 2) {
        throw std::invalid_argument("fit_empirical: need at least 2 samples, got " +
                                    std::to_string(b));
    }
    const int k = batch_stats[0].channels();
    EmpiricalStyleDistribution dist;
    dist.m_mu.assign(k, 0.0);
    dist.m_sigma.assign(k, 0.0);
    std::vector<std::vector<double>> mus, sigmas;
    mus.reserve(b);
    sigmas.reserve(b);
    for (const ChannelStats& st : batch_stats) {
        if (st.channels() != k) throw ShapeError("fit_empirical: channel count mismatch");
        mus.push_back(st.mu);
        sigmas.push_back(st.sigma);
        for (int i = 0; i < k; ++i) {
            dist.m_mu[i] += st.mu[i];
            dist.m_sigma[i] += st.sigma[i];
        }
    }
    for (int i = 0; i < k; ++i) {
        dist.m_mu[i] /= b;
        dist.m_sigma[i] /= b;
    }
    dist.cov_mu = sample_covariance(mus, dist.m_mu);
    dist.cov_sigma = sample_covariance(sigmas, dist.m_sigma);
    if (cfg.diagonal_only) {
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                if (i != j) {
                    dist.cov_mu(i, j) = 0.0;
                    dist.cov_sigma(i, j) = 0.0;
                }
    }
    dist.chol_mu = cholesky(ridged(dist.cov_mu, cfg.eps_cov));
    dist.chol_sigma = cholesky(ridged(dist.cov_sigma, cfg.eps_cov));
    return dist;
}

double style_log_prob(const EmpiricalStyleDistribution& dist, const ChannelStats& stats) {
    if (stats.channels() != dist.channels()) throw ShapeError("style_log_prob: dimension mismatch");
    return mvn_log_density(dist.m_mu, dist.chol_mu, stats.mu) +
           mvn_log_density(dist.m_sigma, dist.chol_sigma, stats.sigma);
}

ChannelStats sample_style(const EmpiricalStyleDistribution& dist, const StyleAlignConfig& cfg,
                          Rng& rng) {
    ChannelStats out;
    out.mu = sample_mvn(dist.m_mu, dist.chol_mu, rng);
    out.sigma = sample_mvn(dist.m_sigma, dist.chol_sigma, rng);
    for (double& s : out.sigma) s = std::max(s, cfg.sigma_floor);
    return out;
}

Tensor renormalize(const Tensor& z, const ChannelStats& target, const StyleAlignConfig& cfg) {
    const Shape& s = z.shape();
    if (s.size() != 3) throw ShapeError("renormalize expects [K,H,W]");
    const int k = s[0], h = s[1], w = s[2];
    if (target.channels() != k) throw ShapeError("renormalize: target channel mismatch");
    Tensor mu = spatial_mean(z);
    Tensor centered = z - bc_channels(mu, h, w);
    Tensor variance = spatial_mean(centered * centered);
    Tensor sigma = sqrt(variance + kVarianceGuard);
    Tensor denom = bc_channels(sigma + cfg.eps_div, h, w);
    Tensor mu_t = Tensor::from(Shape{k}, target.mu);
    Tensor sigma_t = Tensor::from(Shape{k}, target.sigma);
    return centered / denom * bc_channels(sigma_t, h, w) + bc_channels(mu_t, h, w);
}

Tensor apply_module(const Tensor& batch, const StyleAlignConfig& cfg, Rng& rng, bool train_mode) {
    if (!train_mode) return batch;
    const Shape& s = batch.shape();
    if (s.size() != 4) throw ShapeError("apply_module expects [B,K,H,W], got " + shape_str(s));
    const int b = s[0];

    std::vector<bool> transform(static_cast<std::size_t>(b), false);
    bool any = false;
    if (cfg.per_sample_gate) {
        for (int i = 0; i < b; ++i) {
            transform[i] = rng.bernoulli(cfg.tau);
            any = any || transform[i];
        }
    } else {
        any = rng.bernoulli(cfg.tau);
        if (any) std::fill(transform.begin(), transform.end(), true);
    }
    if (!any) return batch;

    // Empirical distribution aggregates the entire incoming batch.
    std::vector<ChannelStats> stats;
    stats.reserve(b);
    {
        NoGradGuard ng;  // statistics feeding the fit are constants
        for (int i = 0; i < b; ++i) stats.push_back(channel_stats(index0(batch, i)));
    }
    EmpiricalStyleDistribution dist = fit_empirical(stats, cfg);

    std::vector<Tensor> out;
    out.reserve(b);
    for (int i = 0; i < b; ++i) {
        Tensor sample = index0(batch, i);
        if (transform[i]) {
            ChannelStats target = sample_style(dist, cfg, rng);
            out.push_back(renormalize(sample, target, cfg));
        } else {
            out.push_back(sample);
        }
    }
    return stack0(out);
}

}  // namespace sage
