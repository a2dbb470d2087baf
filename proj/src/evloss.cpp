#include "sage/evloss.hpp"

#include <cmath>
#include <string>

#include "sage/special.hpp"

namespace sage {

namespace {

int checked_one_hot_index(std::span<const double> y) {
    int hot = -1;
    for (std::size_t c = 0; c < y.size(); ++c) {
        if (y[c] == 1.0) {
            if (hot >= 0) throw std::invalid_argument("label is not one-hot: multiple ones");
            hot = static_cast<int>(c);
        } else if (y[c] != 0.0) {
            throw std::invalid_argument("label is not one-hot: component " + std::to_string(c) +
                                        " = " + std::to_string(y[c]));
        }
    }
    if (hot < 0) throw std::invalid_argument("label is not one-hot: no one set");
    return hot;
}

Tensor one_hot_mask(std::span<const int> labels, int num_classes) {
    const int rows = static_cast<int>(labels.size());
    std::vector<double> m(static_cast<std::size_t>(rows) * num_classes, 0.0);
    for (int i = 0; i < rows; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= num_classes) {
            throw std::invalid_argument("label " + std::to_string(y) + " out of range [0," +
                                        std::to_string(num_classes) + ")");
        }
        m[static_cast<std::size_t>(i) * num_classes + y] = 1.0;
    }
    return Tensor::from(Shape{rows, num_classes}, std::move(m));
}

Tensor as_row(const Tensor& v) {
    if (v.shape().size() != 1) throw ShapeError("expected a 1-D tensor");
    return reshape(v, Shape{1, v.shape()[0]});
}

}  // namespace

Tensor adjusted_alpha_batch(const Tensor& alpha, std::span<const int> labels) {
    const Shape& s = alpha.shape();
    if (s.size() != 2) throw ShapeError("adjusted_alpha_batch expects [B,C]");
    if (static_cast<int>(labels.size()) != s[0]) throw ShapeError("label count mismatch");
    Tensor y = one_hot_mask(labels, s[1]);
    return y + (1.0 - y) * alpha;
}

Tensor kl_dirichlet_uniform_batch(const Tensor& alpha_tilde) {
    const Shape& s = alpha_tilde.shape();
    if (s.size() != 2) throw ShapeError("kl_dirichlet_uniform_batch expects [B,C]");
    const int c = s[1];
    for (double a : alpha_tilde.values()) {
        if (a < 1.0 - 1e-12) {
            throw std::domain_error("kl_dirichlet_uniform: alpha~ component " + std::to_string(a) +
                                    " < 1");
        }
    }
    Tensor strength = rowsum(alpha_tilde);                       // [B]
    Tensor psi_gap = digamma(alpha_tilde) - bc_col(digamma(strength), c);
    Tensor kl = lgamma(strength) - rowsum(lgamma(alpha_tilde)) - log_gamma(static_cast<double>(c)) +
                rowsum((alpha_tilde - 1.0) * psi_gap);
    return kl;
}

Tensor ece_loss_batch(const Tensor& alpha, std::span<const int> labels, const LossConfig& cfg) {
    const Shape& s = alpha.shape();
    if (s.size() != 2) throw ShapeError("ece_loss_batch expects [B,C]");
    const int c = s[1];
    if (static_cast<int>(labels.size()) != s[0]) throw ShapeError("label count mismatch");
    Tensor y = one_hot_mask(labels, c);
    Tensor strength = rowsum(alpha);              // S per row
    Tensor alpha_true = rowsum(y * alpha);        // alpha_y per row
    Tensor bayes_risk = digamma(strength) - digamma(alpha_true);
    Tensor kl = kl_dirichlet_uniform_batch(y + (1.0 - y) * alpha);
    return bayes_risk + cfg.lambda_kl * kl;
}

Tensor adjusted_alpha(const Tensor& alpha, std::span<const double> y) {
    if (alpha.shape().size() != 1) throw ShapeError("adjusted_alpha expects a 1-D alpha");
    if (y.size() != alpha.values().size()) throw ShapeError("adjusted_alpha: label size mismatch");
    const int hot[] = {checked_one_hot_index(y)};
    Tensor out = adjusted_alpha_batch(as_row(alpha), hot);
    return reshape(out, alpha.shape());
}

Tensor kl_dirichlet_uniform(const Tensor& alpha_tilde) {
    Tensor out = kl_dirichlet_uniform_batch(as_row(alpha_tilde));
    return reshape(out, Shape{});
}

Tensor ece_loss(const Tensor& alpha, std::span<const double> y, const LossConfig& cfg) {
    if (y.size() != alpha.values().size()) throw ShapeError("ece_loss: label size mismatch");
    const int hot[] = {checked_one_hot_index(y)};
    Tensor out = ece_loss_batch(as_row(alpha), hot, cfg);
    return reshape(out, Shape{});
}

Tensor decorrelation_loss(const Tensor& features) {
    const Shape& s = features.shape();
    if (s.size() != 2) throw ShapeError("decorrelation_loss expects [B,d]");
    const int rows = s[0], d = s[1];
    if (rows < 2) throw ShapeError("decorrelation_loss needs a batch of at least 2");
    Tensor col_mean = rowsum(transpose(features)) / static_cast<double>(rows);  // [d]
    Tensor centered = features - bc_row(col_mean, rows);
    Tensor cov = matmul(transpose(centered), centered) / static_cast<double>(rows - 1);
    std::vector<double> off_diag(static_cast<std::size_t>(d) * d, 1.0);
    for (int i = 0; i < d; ++i) off_diag[static_cast<std::size_t>(i) * d + i] = 0.0;
    return sum(abs(cov * Tensor::from(Shape{d, d}, std::move(off_diag))));
}

}  // namespace sage
