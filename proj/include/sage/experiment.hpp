#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sage/serialize.hpp"
#include "sage/train.hpp"

namespace sage {

// One declarative experiment: dataset, model, training, style, protocol.
struct ExperimentConfig {
    SyntheticSpec dataset;
    ExtractorSpec model_spec;
    double clip_bound = 10.0;
    StyleAlignConfig style;
    TrainConfig train;
    int holdout = 0;
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "runs/out";

    void validate() const;
};

ExperimentConfig experiment_config_from_json(const json& j);
json to_json(const ExperimentConfig& cfg);

// Reads a JSON config file; `overrides` are dotted-path assignments such as
// "train.iterations=200" whose values parse as JSON (fallback: string).
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides,
                                        json* echo = nullptr);
void apply_override(json& root, const std::string& assignment);

struct SingleRunOutput {
    std::uint64_t seed = 0;
    int holdout = 0;
    RunResult run;
};

// One leave-one-domain-out training run. The model ends up carrying the
// selected EMA parameters; optional sinks receive the metrics CSV, the
// trained model, and the held-out test split.
SingleRunOutput run_single(const ExperimentConfig& cfg, std::uint64_t seed, int holdout,
                           const AblationSwitches& sw, std::ostream* metrics_csv = nullptr,
                           std::unique_ptr<Model>* out_model = nullptr,
                           DomainDataset* out_test = nullptr);

// The five Table-style variants, in row order.
struct AblationVariant {
    std::string label;
    AblationSwitches switches;
};
std::vector<AblationVariant> ablation_variants();

struct AblationCell {
    double mean = 0.0;
    double stddev = 0.0;
};

struct AblationTable {
    std::vector<std::string> row_labels;      // variants
    std::vector<std::string> column_labels;   // domain_<id>... , avg
    std::vector<std::vector<AblationCell>> cells;  // [row][col]
};

// Runs every variant x held-out domain x seed; `jobs` > 1 parallelizes
// across runs without changing results.
AblationTable run_ablation(const ExperimentConfig& cfg, int jobs = 1);
void write_ablation_csv(std::ostream& out, const AblationTable& table);

// summary JSON for a train command (per-seed results + aggregates);
// deterministic byte-for-byte for a fixed config and seed list.
json train_summary(const ExperimentConfig& cfg, const json& config_echo,
                   const std::vector<SingleRunOutput>& runs);

}  // namespace sage
