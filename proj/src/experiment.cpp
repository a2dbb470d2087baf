#include "sage/experiment.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace sage {

void ExperimentConfig::validate() const {
    dataset.validate();
    model_spec.validate();
    if (holdout < 0 || holdout >= dataset.num_domains) {
        throw ConfigError("holdout index " + std::to_string(holdout) +
                          " is out of range for " + std::to_string(dataset.num_domains) +
                          " domains");
    }
    if (dataset.num_domains < 2) {
        throw ConfigError("leave-one-domain-out needs at least 2 domains");
    }
    if (seeds.empty()) throw ConfigError("seeds must be non-empty");
    if (Shape expected = dataset.sample_shape(); expected != model_spec.input_shape) {
        throw ConfigError("model.input_shape " + shape_str(model_spec.input_shape) +
                          " does not match dataset sample shape " + shape_str(expected));
    }
}

ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.dataset = synthetic_spec_from_json(require_field(j, "dataset", ""));
    cfg.model_spec = extractor_spec_from_json(require_field(j, "model", ""));
    cfg.clip_bound = require_field(j, "model", "").value("clip_bound", cfg.clip_bound);
    if (j.contains("style")) cfg.style = style_config_from_json(j.at("style"));
    cfg.train = train_config_from_json(require_field(j, "train", ""));
    cfg.holdout = j.value("holdout", 0);
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.validate();
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    json model = to_json(cfg.model_spec);
    model["clip_bound"] = cfg.clip_bound;
    return json{{"dataset", to_json(cfg.dataset)}, {"model", model},
                {"style", to_json(cfg.style)},    {"train", to_json(cfg.train)},
                {"holdout", cfg.holdout},         {"seeds", cfg.seeds},
                {"out_dir", cfg.out_dir}};
}

void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "' must look like key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // plain string

    json* node = &root;
    std::istringstream ps(path);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(ps, key, '.')) {
        if (key.empty()) throw ConfigError("override path '" + path + "' has an empty segment");
        keys.push_back(key);
    }
    if (keys.empty()) throw ConfigError("override path is empty");
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
        node = &(*node)[keys[i]];
    }
    (*node)[keys.back()] = value;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides, json* echo) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    for (const std::string& ov : overrides) apply_override(j, ov);
    if (echo) *echo = j;
    return experiment_config_from_json(j);
}

SingleRunOutput run_single(const ExperimentConfig& cfg, std::uint64_t seed, int holdout,
                           const AblationSwitches& sw, std::ostream* metrics_csv,
                           std::unique_ptr<Model>* out_model, DomainDataset* out_test) {
    if (holdout < 0 || holdout >= cfg.dataset.num_domains) {
        throw ConfigError("holdout index out of range");
    }
    Rng master(seed);
    std::vector<DomainDataset> domains = gen_synthetic_domains(cfg.dataset, master);

    std::vector<DomainDataset> train_sets, val_sets;
    for (int d = 0; d < static_cast<int>(domains.size()); ++d) {
        if (d == holdout) continue;
        Rng split_rng = master.fork("split", static_cast<std::uint64_t>(d));
        auto [tr, va] = split_train_val(domains[d], 0.8, split_rng);
        train_sets.push_back(std::move(tr));
        val_sets.push_back(std::move(va));
    }
    const DomainDataset& test_set = domains[holdout];

    Model model(cfg.model_spec, cfg.dataset.num_classes,
                static_cast<int>(train_sets.size()), cfg.style, cfg.clip_bound,
                master.fork("init"));
    model.set_style_enabled(sw.use_va);

    TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.ablation = sw;

    SingleRunOutput out;
    out.seed = seed;
    out.holdout = holdout;
    out.run = run_training(model, train_sets, val_sets, test_set, tc);

    if (metrics_csv) {
        std::ostream& os = *metrics_csv;
        os << "iteration,train_loss,val_acc,test_acc,mean_u_test";
        for (const DomainDataset& vs : val_sets) os << ",val_acc_d" << vs.domain_id;
        os << "\n";
        os << std::setprecision(10);
        for (const MetricsRow& r : out.run.history) {
            os << r.iteration << ',' << r.train_loss << ',' << r.val_acc << ',' << r.test_acc
               << ',' << r.mean_u_test;
            for (double a : r.per_domain_val_acc) os << ',' << a;
            os << "\n";
        }
    }
    if (out_model) *out_model = std::make_unique<Model>(std::move(model));
    if (out_test) *out_test = test_set;
    return out;
}

std::vector<AblationVariant> ablation_variants() {
    AblationSwitches full;
    AblationSwitches no_va = full;
    no_va.use_va = false;
    AblationSwitches no_ec = full;
    no_ec.use_dempster = false;
    AblationSwitches no_cd = full;
    no_cd.use_cross_domain = false;
    AblationSwitches no_ue = full;
    no_ue.use_evidential = false;
    return {{"VAUE", full},
            {"VAUE w/o VA", no_va},
            {"VAUE w/o EC", no_ec},
            {"VAUE w/o CD", no_cd},
            {"VAUE w/o UE", no_ue}};
}

namespace {

AblationCell mean_std(const std::vector<double>& xs) {
    AblationCell c;
    if (xs.empty()) return c;
    double s = 0.0;
    for (double x : xs) s += x;
    c.mean = s / xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - c.mean) * (x - c.mean);
    c.stddev = xs.size() > 1 ? std::sqrt(var / (xs.size() - 1)) : 0.0;
    return c;
}

}  // namespace

AblationTable run_ablation(const ExperimentConfig& cfg, int jobs) {
    const auto variants = ablation_variants();
    const int domains = cfg.dataset.num_domains;
    const int nseeds = static_cast<int>(cfg.seeds.size());

    // acc[variant][holdout][seed]
    std::vector<std::vector<std::vector<double>>> acc(
        variants.size(), std::vector<std::vector<double>>(domains, std::vector<double>(nseeds)));

    struct Job {
        int variant, holdout, seed_index;
    };
    std::vector<Job> jobs_list;
    for (int v = 0; v < static_cast<int>(variants.size()); ++v)
        for (int h = 0; h < domains; ++h)
            for (int s = 0; s < nseeds; ++s) jobs_list.push_back({v, h, s});

    auto work = [&](const Job& job) {
        SingleRunOutput out =
            run_single(cfg, cfg.seeds[job.seed_index], job.holdout, variants[job.variant].switches);
        acc[job.variant][job.holdout][job.seed_index] = out.run.test_acc;
    };

    if (jobs <= 1) {
        for (const Job& j : jobs_list) work(j);
    } else {
        std::size_t next = 0;
        while (next < jobs_list.size()) {
            std::vector<std::future<void>> batch;
            for (int j = 0; j < jobs && next < jobs_list.size(); ++j, ++next) {
                batch.push_back(std::async(std::launch::async, work, jobs_list[next]));
            }
            for (auto& f : batch) f.get();
        }
    }

    AblationTable table;
    for (const auto& v : variants) table.row_labels.push_back(v.label);
    for (int h = 0; h < domains; ++h) table.column_labels.push_back("domain_" + std::to_string(h));
    table.column_labels.push_back("avg");
    for (int v = 0; v < static_cast<int>(variants.size()); ++v) {
        std::vector<AblationCell> row;
        std::vector<double> domain_avg_per_seed(nseeds, 0.0);
        for (int h = 0; h < domains; ++h) {
            row.push_back(mean_std(acc[v][h]));
            for (int s = 0; s < nseeds; ++s) domain_avg_per_seed[s] += acc[v][h][s] / domains;
        }
        row.push_back(mean_std(domain_avg_per_seed));
        table.cells.push_back(std::move(row));
    }
    return table;
}

void write_ablation_csv(std::ostream& out, const AblationTable& table) {
    out << "method";
    for (const std::string& c : table.column_labels) out << ',' << c;
    out << "\n";
    out << std::fixed << std::setprecision(4);
    for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
        out << table.row_labels[r];
        for (const AblationCell& c : table.cells[r]) {
            out << ',' << c.mean << "+-" << c.stddev;
        }
        out << "\n";
    }
}

json train_summary(const ExperimentConfig& cfg, const json& config_echo,
                   const std::vector<SingleRunOutput>& runs) {
    json out;
    out["format_version"] = 1;
    out["config"] = config_echo;
    out["holdout"] = cfg.holdout;
    json jr = json::array();
    std::vector<double> accs;
    for (const SingleRunOutput& r : runs) {
        std::ostringstream checksum;
        checksum << std::hex << std::setw(16) << std::setfill('0') << r.run.param_checksum;
        json run_json{{"seed", r.seed},
                      {"holdout", r.holdout},
                      {"test_acc", r.run.test_acc},
                      {"mean_u_test", r.run.mean_u_test},
                      {"best_val_acc", r.run.best_val_acc},
                      {"per_domain_val_acc", r.run.per_domain_val_acc},
                      {"conflict_events", r.run.conflict_events},
                      {"param_checksum", checksum.str()}};
        if (std::isnan(r.run.mean_u_test)) run_json["mean_u_test"] = "nan";
        jr.push_back(std::move(run_json));
        accs.push_back(r.run.test_acc);
    }
    out["runs"] = std::move(jr);
    const AblationCell agg = mean_std(accs);
    out["mean_test_acc"] = agg.mean;
    out["stddev_test_acc"] = agg.stddev;
    return out;
}

}  // namespace sage
