#include "sage/gradcheck.hpp"

#include <cmath>

#include "sage/data.hpp"
#include "sage/evloss.hpp"
#include "sage/model.hpp"
#include "sage/rng.hpp"
#include "sage/style_align.hpp"
#include "sage/train.hpp"

namespace sage {

double finite_diff_check(const std::function<Tensor()>& build_loss, std::span<Tensor> inputs,
                         double h, double corrupt_factor) {
    for (Tensor& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor loss = build_loss();
    loss.backward();

    std::vector<std::vector<double>> analytic;
    for (Tensor& t : inputs) {
        std::vector<double> g =
            t.has_grad() ? t.grad() : std::vector<double>(t.values().size(), 0.0);
        for (double& v : g) v *= corrupt_factor;
        analytic.push_back(std::move(g));
    }

    double worst = 0.0;
    NoGradGuard ng;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& vals = inputs[ti].values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + h;
            const double up = build_loss().item();
            vals[i] = keep - h;
            const double down = build_loss().item();
            vals[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[ti][i];
            const double scale = std::max(std::fabs(a), std::fabs(fd));
            const double err = scale < 1e-6 ? std::fabs(a - fd) : std::fabs(a - fd) / scale;
            worst = std::max(worst, err);
        }
    }
    return worst;
}

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return Tensor::from(shape, std::move(v));
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed, bool corrupt) {
    Rng rng(seed);
    std::vector<GradCheckRow> rows;
    bool first = true;
    auto run = [&](const std::string& name, std::span<Tensor> inputs,
                   const std::function<Tensor()>& build) {
        const double factor = (corrupt && first) ? 1.01 : 1.0;
        first = false;
        rows.push_back({name, finite_diff_check(build, inputs, 1e-5, factor)});
    };

    {  // ece_loss w.r.t. alpha
        Tensor alpha = random_tensor({5, 4}, rng, 1.3, 6.0);
        const std::vector<int> labels = {0, 3, 1, 2, 2};
        Tensor in[] = {alpha};
        run("ece_loss", in, [&] {
            return mean(ece_loss_batch(alpha, labels, LossConfig{0.01, 4}));
        });
    }
    {  // kl regularizer w.r.t. alpha~
        Tensor at = random_tensor({4, 3}, rng, 1.2, 7.0);
        Tensor in[] = {at};
        run("kl_dirichlet_uniform", in, [&] { return mean(kl_dirichlet_uniform_batch(at)); });
    }
    {  // decorrelation on a feature batch
        Tensor f = random_tensor({6, 5}, rng, -2.0, 2.0);
        Tensor in[] = {f};
        run("decorrelation_loss", in, [&] { return decorrelation_loss(f); });
    }
    {  // renormalize w.r.t. z, weighted so every output coordinate matters
        Tensor z = random_tensor({3, 4, 4}, rng, -1.5, 1.5);
        ChannelStats target{{0.4, -0.2, 0.1}, {1.2, 0.7, 0.5}};
        StyleAlignConfig cfg;
        Tensor weights = random_tensor({3, 4, 4}, rng, -1.0, 1.0);
        Tensor in[] = {z};
        run("renormalize", in, [&] { return sum(renormalize(z, target, cfg) * weights); });
    }
    {  // elementary kernels through weighted sums
        Tensor x = random_tensor({7}, rng, 0.3, 3.0);
        Tensor w = random_tensor({7}, rng, -1.0, 1.0);
        Tensor in[] = {x};
        run("digamma", in, [&] { return sum(digamma(x) * w); });
        run("lgamma", in, [&] { return sum(lgamma(x) * w); });
        run("exp_log_sqrt", in, [&] { return sum(log(exp(x)) * sqrt(x)); });
        run("tanh", in, [&] { return sum(tanh(x) * w); });
    }
    {  // matmul
        Tensor a = random_tensor({3, 4}, rng, -1.0, 1.0);
        Tensor b = random_tensor({4, 2}, rng, -1.0, 1.0);
        Tensor w = random_tensor({3, 2}, rng, -1.0, 1.0);
        Tensor in[] = {a, b};
        run("matmul", in, [&] { return sum(matmul(a, b) * w); });
    }
    {  // conv2d
        Tensor x = random_tensor({2, 2, 5, 5}, rng, -1.0, 1.0);
        Tensor k = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
        Tensor b = random_tensor({3}, rng, -0.2, 0.2);
        Tensor w = random_tensor({2, 3, 3, 3}, rng, -1.0, 1.0);
        Tensor in[] = {x, k, b};
        run("conv2d", in, [&] { return sum(conv2d(x, k, b, 2, 1) * w); });
    }
    {  // full micro pipeline: features -> heads -> fused opinion -> losses
        ExtractorSpec spec;
        spec.input_shape = {6};
        spec.layers = {DenseSpec{6, 8, Activation::Tanh}};
        spec.feature_dim = 8;
        StyleAlignConfig style;
        Model model(spec, 3, 2, style, 10.0, Rng(seed ^ 0x5EED));

        Batch batch;
        batch.inputs = random_tensor({4, 6}, rng, -1.0, 1.0);
        batch.labels = {0, 2, 1, 0};
        batch.domain_ids = {0, 0, 1, 1};
        batch.domain_ranges = {{0, 2}, {2, 2}};

        TrainConfig cfg;
        cfg.lambda_kl = 0.01;
        std::vector<Tensor> inputs = model.parameters();
        inputs.push_back(batch.inputs);
        Rng style_rng(0);
        run("micro_pipeline", inputs, [&] {
            return total_loss(model, batch, cfg, style_rng).total;
        });
    }
    return rows;
}

}  // namespace sage
