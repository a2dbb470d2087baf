#include "sage/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sage/evloss.hpp"

namespace sage {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

EmaState EmaState::init(std::span<const Tensor> params, double momentum) {
    EmaState s;
    s.momentum = momentum;
    s.shadow.reserve(params.size());
    for (const Tensor& p : params) s.shadow.push_back(p.values());
    return s;
}

void EmaState::update(std::span<const Tensor> params) {
    if (params.size() != shadow.size()) throw ShapeError("ema_update: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& v = params[i].values();
        auto& s = shadow[i];
        if (v.size() != s.size()) throw ShapeError("ema_update: shape mismatch");
        for (std::size_t j = 0; j < v.size(); ++j) {
            s[j] = momentum * s[j] + (1.0 - momentum) * v[j];
        }
    }
}

void EmaState::swap_with(std::span<const Tensor> params) {
    if (params.size() != shadow.size()) throw ShapeError("ema swap: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].values().size() != shadow[i].size()) {
            throw ShapeError("ema swap: shape mismatch");
        }
        params[i].values_mut().swap(shadow[i]);
    }
}

AdamWState AdamWState::init(std::span<const Tensor> params) {
    AdamWState s;
    for (const Tensor& p : params) {
        s.m.emplace_back(p.values().size(), 0.0);
        s.v.emplace_back(p.values().size(), 0.0);
    }
    return s;
}

void optimizer_step(std::span<const Tensor> params, AdamWState& state, const TrainConfig& cfg) {
    if (params.size() != state.m.size()) throw ShapeError("optimizer_step: state size mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i].values_mut();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != value.size()) throw ShapeError("optimizer_step: shape mismatch");
        const bool has_grad = params[i].has_grad();
        const std::vector<double>* grad = has_grad ? &params[i].grad() : nullptr;
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad ? (*grad)[j] : 0.0;
            // decoupled decay first, then the adaptive update
            value[j] -= cfg.learning_rate * cfg.weight_decay * value[j];
            m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * g;
            v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            value[j] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + kAdamEps);
        }
    }
}

DirichletParams leave_one_out_alpha(std::span<const EvidenceVector> evidences, int excluded) {
    const int n = static_cast<int>(evidences.size());
    if (n < 2) throw std::invalid_argument("leave_one_out_alpha: need at least 2 heads");
    if (excluded < 0 || excluded >= n) {
        throw std::invalid_argument("leave_one_out_alpha: excluded index out of range");
    }
    std::vector<MassSet> masses;
    masses.reserve(n - 1);
    for (int i = 0; i < n; ++i) {
        if (i == excluded) continue;
        masses.push_back(masses_from_evidence(evidences[i]));
    }
    return dirichlet_from_masses(combine_all(masses));
}

namespace {

// Mean over one domain block of ece losses, with conflicted rows zeroed.
Tensor masked_block_mean(const Tensor& per_sample, const std::vector<bool>& conflicted,
                         int* skipped) {
    const int n = per_sample.shape().at(0);
    std::vector<double> mask(static_cast<std::size_t>(n), 1.0);
    int dropped = 0;
    for (int i = 0; i < n; ++i) {
        if (conflicted[i]) {
            mask[i] = 0.0;
            ++dropped;
        }
    }
    if (skipped) *skipped += dropped;
    if (dropped == 0) return mean(per_sample);
    return sum(per_sample * Tensor::from(Shape{n}, std::move(mask))) / static_cast<double>(n);
}

Tensor softmax_cross_entropy(const Model& model, const Tensor& features, const Batch& batch) {
    const int n = static_cast<int>(model.num_domains());
    const int c = model.num_classes();
    const int rows = features.shape().at(0);
    Tensor logits;
    for (int h = 0; h < n; ++h) {
        Tensor l = model.head_logits(features, h);
        logits = h == 0 ? l : logits + l;
    }
    logits = logits / static_cast<double>(n);
    Tensor shift = rowmax_detached(logits);
    Tensor lse = log(rowsum(exp(logits - bc_col(shift, c)))) + shift;  // [rows]
    std::vector<double> y(static_cast<std::size_t>(rows) * c, 0.0);
    for (int i = 0; i < rows; ++i) y[static_cast<std::size_t>(i) * c + batch.labels[i]] = 1.0;
    Tensor picked = rowsum(logits * Tensor::from(Shape{rows, c}, std::move(y)));
    return mean(lse - picked);
}

}  // namespace

Tensor domain_loss(const Model& model, const Tensor& features, const Batch& batch,
                   const TrainConfig& cfg, int* conflict_skipped) {
    const int n = static_cast<int>(batch.domain_ranges.size());
    if (n == 0) throw std::invalid_argument("domain_loss: batch has no domains");
    if (n != model.num_domains()) {
        throw ShapeError("domain_loss: batch domain count " + std::to_string(n) +
                         " != model heads " + std::to_string(model.num_domains()));
    }
    for (const auto& [start, count] : batch.domain_ranges) {
        if (count < 1) throw std::invalid_argument("domain_loss: a domain batch is empty");
    }
    if (!cfg.ablation.use_evidential) {
        return softmax_cross_entropy(model, features, batch);
    }

    const LossConfig loss_cfg{cfg.lambda_kl, model.num_classes()};
    std::vector<Tensor> evidence;  // per head, full batch
    evidence.reserve(n);
    for (int h = 0; h < n; ++h) evidence.push_back(model.head_evidence(features, h));

    Tensor total;
    bool first_term = true;
    auto accumulate = [&](const Tensor& t) {
        total = first_term ? t : total + t;
        first_term = false;
    };

    for (int i = 0; i < n; ++i) {
        const auto [start, count] = batch.domain_ranges[i];
        std::span<const int> labels(batch.labels.data() + start, static_cast<std::size_t>(count));

        // single-domain term: this domain's data through its own head
        Tensor evidence_own = slice0(evidence[i], start, count);
        accumulate(mean(ece_loss_batch(evidence_own + 1.0, labels, loss_cfg)));

        // cross-domain term: the combined opinion of every other head
        if (cfg.ablation.use_cross_domain && n >= 2) {
            std::vector<bool> conflicted(static_cast<std::size_t>(count), false);
            MassBatch combined;
            if (cfg.ablation.use_dempster) {
                bool first = true;
                for (int h = 0; h < n; ++h) {
                    if (h == i) continue;
                    MassBatch mb = masses_from_evidence_batch(slice0(evidence[h], start, count));
                    combined = first ? mb : combine_pair_batch(combined, mb, conflicted);
                    first = false;
                }
            } else {
                Tensor b_sum, u_sum;
                bool first = true;
                for (int h = 0; h < n; ++h) {
                    if (h == i) continue;
                    MassBatch mb = masses_from_evidence_batch(slice0(evidence[h], start, count));
                    b_sum = first ? mb.b : b_sum + mb.b;
                    u_sum = first ? mb.u : u_sum + mb.u;
                    first = false;
                }
                combined.b = b_sum / static_cast<double>(n - 1);
                combined.u = u_sum / static_cast<double>(n - 1);
            }
            Tensor alpha_cross = dirichlet_from_masses_batch(combined);
            Tensor per_sample = ece_loss_batch(alpha_cross, labels, loss_cfg);
            accumulate(masked_block_mean(per_sample, conflicted, conflict_skipped));
        }
    }
    return total / static_cast<double>(n);
}

LossBreakdown total_loss(const Model& model, const Batch& batch, const TrainConfig& cfg,
                         Rng& style_rng) {
    LossBreakdown out;
    Tensor features = model.forward_features(batch.inputs, /*train_mode=*/true, style_rng);
    out.domain = domain_loss(model, features, batch, cfg, &out.conflict_skipped);
    if (model.feature_dim() >= 2 && features.shape().at(0) >= 2) {
        out.decorrelation = decorrelation_loss(features);
        out.total = out.domain + out.decorrelation;
    } else {
        out.decorrelation = Tensor::scalar(0.0);
        out.total = out.domain;
    }
    return out;
}

namespace {

struct EvalAccum {
    long correct = 0;
    long total = 0;
    double u_sum = 0.0;
    long u_count = 0;
    int conflicts = 0;
};

void eval_chunk(const Model& model, const Batch& chunk, const AblationSwitches& sw,
                EvalAccum& acc) {
    NoGradGuard ng;
    Rng dummy(0);
    Tensor features = model.forward_features(chunk.inputs, /*train_mode=*/false, dummy);
    const int rows = features.shape().at(0);
    const int c = model.num_classes();
    const int n = model.num_domains();

    if (!sw.use_evidential) {
        Tensor logits;
        for (int h = 0; h < n; ++h) {
            Tensor l = model.head_logits(features, h);
            logits = h == 0 ? l : logits + l;
        }
        const auto& lv = logits.values();
        for (int i = 0; i < rows; ++i) {
            int best = 0;
            for (int j = 1; j < c; ++j) {
                if (lv[static_cast<std::size_t>(i) * c + j] >
                    lv[static_cast<std::size_t>(i) * c + best]) {
                    best = j;
                }
            }
            acc.correct += (best == chunk.labels[i]);
            ++acc.total;
        }
        return;
    }

    std::vector<Tensor> evidence = model.forward_all_heads(features);
    for (int i = 0; i < rows; ++i) {
        std::vector<MassSet> opinions;
        opinions.reserve(n);
        for (int h = 0; h < n; ++h) {
            const auto& ev = evidence[h].values();
            std::vector<double> e(ev.begin() + static_cast<std::size_t>(i) * c,
                                  ev.begin() + static_cast<std::size_t>(i + 1) * c);
            opinions.push_back(masses_from_evidence(EvidenceVector(std::move(e))));
        }
        ++acc.total;
        try {
            const MassSet fused = sw.use_dempster ? combine_all(opinions)
                                                  : average_masses(opinions);
            const auto [cls, u] = predict(fused);
            acc.correct += (cls == chunk.labels[i]);
            acc.u_sum += u;
            ++acc.u_count;
        } catch (const ConflictError&) {
            ++acc.conflicts;  // scored as incorrect
        }
    }
}

}  // namespace

EvalMetrics evaluate(const Model& model, std::span<const DomainDataset> datasets,
                     const AblationSwitches& sw) {
    EvalAccum acc;
    constexpr std::size_t kChunk = 512;
    for (const DomainDataset& ds : datasets) {
        for (std::size_t start = 0; start < ds.size(); start += kChunk) {
            const std::size_t count = std::min(kChunk, ds.size() - start);
            DomainDataset view;
            view.sample_shape = ds.sample_shape;
            view.domain_id = ds.domain_id;
            view.samples.assign(ds.samples.begin() + start, ds.samples.begin() + start + count);
            view.labels.assign(ds.labels.begin() + start, ds.labels.begin() + start + count);
            const DomainDataset views[] = {std::move(view)};
            eval_chunk(model, assemble_batch(views), sw, acc);
        }
    }
    EvalMetrics m;
    m.count = static_cast<int>(acc.total);
    m.accuracy = acc.total ? static_cast<double>(acc.correct) / acc.total : 0.0;
    m.mean_uncertainty =
        acc.u_count ? acc.u_sum / acc.u_count : std::numeric_limits<double>::quiet_NaN();
    m.conflicts = acc.conflicts;
    return m;
}

EvalMetrics evaluate(const Model& model, const DomainDataset& dataset,
                     const AblationSwitches& sw) {
    return evaluate(model, std::span<const DomainDataset>(&dataset, 1), sw);
}

RunResult run_training(Model& model, std::span<const DomainDataset> train_sets,
                       std::span<const DomainDataset> val_sets, const DomainDataset& test_set,
                       const TrainConfig& cfg) {
    if (train_sets.empty()) throw std::invalid_argument("run_training: no training domains");
    auto params = model.parameters();
    AdamWState opt = AdamWState::init(params);
    EmaState ema = EmaState::init(params, cfg.ema_momentum);

    Rng master(cfg.seed);
    Rng batch_rng = master.fork("batch");
    Rng style_rng = master.fork("style");

    RunResult result;
    std::vector<std::vector<double>> best_params;
    double best_val = -1.0;

    for (int it = 1; it <= cfg.iterations; ++it) {
        Batch batch = sample_balanced_batch(train_sets, cfg.batch_per_domain, batch_rng);
        LossBreakdown lb;
        try {
            lb = total_loss(model, batch, cfg, style_rng);
        } catch (const NumericalError& e) {
            throw NumericalError("training aborted at iteration " + std::to_string(it) + ": " +
                                 e.what());
        }
        const double loss_value = lb.total.item();
        if (!std::isfinite(loss_value)) {
            throw NumericalError("training aborted at iteration " + std::to_string(it) +
                                 ": non-finite loss");
        }
        result.conflict_events += lb.conflict_skipped;

        for (auto& p : params) p.zero_grad();
        lb.total.backward();
        optimizer_step(params, opt, cfg);
        ema.update(params);

        const bool eval_now = (cfg.eval_interval > 0 && it % cfg.eval_interval == 0) ||
                              it == cfg.iterations;
        if (!eval_now) continue;

        ema.swap_with(params);  // evaluation reads the shadow weights
        MetricsRow row;
        row.iteration = it;
        row.train_loss = loss_value;
        long val_correct = 0, val_total = 0;
        for (const DomainDataset& vs : val_sets) {
            EvalMetrics m = evaluate(model, vs, cfg.ablation);
            row.per_domain_val_acc.push_back(m.accuracy);
            val_correct += static_cast<long>(std::lround(m.accuracy * m.count));
            val_total += m.count;
        }
        row.val_acc = val_total ? static_cast<double>(val_correct) / val_total : 0.0;
        EvalMetrics test_m = evaluate(model, test_set, cfg.ablation);
        row.test_acc = test_m.accuracy;
        row.mean_u_test = test_m.mean_uncertainty;
        ema.swap_with(params);  // restore live weights

        if (row.val_acc > best_val) {
            best_val = row.val_acc;
            best_params = ema.shadow;
            result.best_val_acc = row.val_acc;
            result.test_acc = row.test_acc;
            result.mean_u_test = row.mean_u_test;
            result.per_domain_val_acc = row.per_domain_val_acc;
        }
        result.history.push_back(std::move(row));
    }

    // Final model carries the selected EMA snapshot.
    if (!best_params.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i].values_mut() = best_params[i];
    }
    result.param_checksum = model.parameter_checksum();
    return result;
}

}  // namespace sage
