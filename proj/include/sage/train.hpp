#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sage/data.hpp"
#include "sage/evidence.hpp"
#include "sage/model.hpp"

namespace sage {

// Table-3 style variant switches.
struct AblationSwitches {
    bool use_va = true;            // visual alignment modules
    bool use_dempster = true;      // reduced combination vs plain averaging
    bool use_cross_domain = true;  // cross-domain term of the domain loss
    bool use_evidential = true;    // whole evidential ensemble vs softmax CE
};

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    int batch_per_domain = 64;
    int iterations = 1000;
    double lambda_kl = 0.01;
    double ema_momentum = 0.999;
    std::uint64_t seed = 1;
    int eval_interval = 50;
    AblationSwitches ablation;
};

// Exponential moving average of parameters; evaluation reads the shadow.
struct EmaState {
    double momentum = 0.999;
    std::vector<std::vector<double>> shadow;

    static EmaState init(std::span<const Tensor> params, double momentum);
    // shadow <- momentum * shadow + (1 - momentum) * params
    void update(std::span<const Tensor> params);
    // Exchanges shadow and live values; call twice to restore.
    void swap_with(std::span<const Tensor> params);
};

// AdamW moments (beta1 0.9, beta2 0.999, eps 1e-8); decoupled decay is
// applied as p <- p - lr*wd*p before the adaptive term.
struct AdamWState {
    std::vector<std::vector<double>> m, v;
    long step = 0;

    static AdamWState init(std::span<const Tensor> params);
};

void optimizer_step(std::span<const Tensor> params, AdamWState& state, const TrainConfig& cfg);

// Combine the opinions of every head except `excluded` and reconstruct the
// Dirichlet (reference path; the training loop uses the batched mirror).
DirichletParams leave_one_out_alpha(std::span<const EvidenceVector> evidences, int excluded);

struct LossBreakdown {
    Tensor total;
    Tensor domain;
    Tensor decorrelation;
    int conflict_skipped = 0;
};

// Single + cross-domain evidential objective over one balanced batch.
Tensor domain_loss(const Model& model, const Tensor& features, const Batch& batch,
                   const TrainConfig& cfg, int* conflict_skipped = nullptr);

// domain_loss + decorrelation on the pooled features. Runs the forward pass
// (train mode) internally.
LossBreakdown total_loss(const Model& model, const Batch& batch, const TrainConfig& cfg,
                         Rng& style_rng);

struct EvalMetrics {
    double accuracy = 0.0;
    double mean_uncertainty = 0.0;  // NaN when the ensemble is ablated away
    int conflicts = 0;
    int count = 0;
};

// Test-time path: eval-mode features, all heads, combined opinion (or mass
// average / plain softmax per the switches), argmax prediction. Conflicted
// samples are counted and scored as incorrect.
EvalMetrics evaluate(const Model& model, std::span<const DomainDataset> datasets,
                     const AblationSwitches& sw);
EvalMetrics evaluate(const Model& model, const DomainDataset& dataset, const AblationSwitches& sw);

struct MetricsRow {
    int iteration = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
    double mean_u_test = 0.0;
    std::vector<double> per_domain_val_acc;
};

struct RunResult {
    double best_val_acc = 0.0;
    double test_acc = 0.0;
    double mean_u_test = 0.0;
    std::vector<double> per_domain_val_acc;  // at the selected checkpoint
    std::vector<MetricsRow> history;
    std::uint64_t param_checksum = 0;
    int conflict_events = 0;
};

// The full loop: balanced batches, AdamW, EMA, periodic EMA-weight
// validation, best-validation model selection. On return `model` carries
// the selected EMA parameters. Throws NumericalError on a non-finite loss.
RunResult run_training(Model& model, std::span<const DomainDataset> train_sets,
                       std::span<const DomainDataset> val_sets, const DomainDataset& test_set,
                       const TrainConfig& cfg);

}  // namespace sage
