#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sage/evidence.hpp"
#include "sage/experiment.hpp"
#include "sage/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace sage;

namespace {

// exit codes: 0 ok, 1 config error, 2 numerical abort, 3 I/O error
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

std::string resolve_out_dir(const std::string& from_config, const std::string& from_flag) {
    if (const char* env = std::getenv("SAGE_OUT_DIR"); env && *env) return env;
    if (!from_flag.empty()) return from_flag;
    return from_config;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_flag) {
    json echo;
    ExperimentConfig cfg = load_experiment_config(config_path, overrides, &echo);
    const fs::path out_dir = resolve_out_dir(cfg.out_dir, out_flag);
    fs::create_directories(out_dir);

    std::vector<SingleRunOutput> runs;
    for (std::uint64_t seed : cfg.seeds) {
        std::ofstream metrics(out_dir / ("metrics_seed" + std::to_string(seed) + ".csv"));
        if (!metrics) throw IoError("cannot write metrics CSV in " + out_dir.string());
        std::unique_ptr<Model> model;
        DomainDataset test_set;
        SingleRunOutput out = run_single(cfg, seed, cfg.holdout, cfg.train.ablation, &metrics,
                                         &model, &test_set);
        model->save_checkpoint((out_dir / ("checkpoint_seed" + std::to_string(seed) + ".bin")).string());
        const DomainDataset test_domains[] = {test_set};
        save_dataset_cache((out_dir / ("testset_seed" + std::to_string(seed) + ".bin")).string(),
                           cfg.dataset, seed, test_domains);
        std::cout << "seed " << seed << ": test_acc=" << out.run.test_acc
                  << " mean_u_test=" << out.run.mean_u_test
                  << " best_val_acc=" << out.run.best_val_acc << "\n";
        runs.push_back(std::move(out));
    }

    json summary = train_summary(cfg, echo, runs);
    std::ofstream sf(out_dir / "summary.json");
    if (!sf) throw IoError("cannot write summary.json in " + out_dir.string());
    sf << summary.dump(2) << "\n";
    std::cout << "summary: " << (out_dir / "summary.json").string() << "\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::string& out_flag, int jobs) {
    json echo;
    ExperimentConfig cfg = load_experiment_config(config_path, overrides, &echo);
    const fs::path out_dir = resolve_out_dir(cfg.out_dir, out_flag);
    fs::create_directories(out_dir);

    AblationTable table = run_ablation(cfg, jobs);
    std::ofstream cf(out_dir / "ablation.csv");
    if (!cf) throw IoError("cannot write ablation.csv in " + out_dir.string());
    write_ablation_csv(cf, table);
    write_ablation_csv(std::cout, table);
    std::cout << "table: " << (out_dir / "ablation.csv").string() << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path, bool average) {
    Model model = Model::load_checkpoint(checkpoint_path);
    DatasetCache cache = load_dataset_cache(data_path);
    AblationSwitches sw;
    sw.use_dempster = !average;

    json per_domain = json::object();
    for (const DomainDataset& d : cache.domains) {
        EvalMetrics m = evaluate(model, d, sw);
        per_domain["domain_" + std::to_string(d.domain_id)] =
            json{{"accuracy", m.accuracy},
                 {"mean_uncertainty", m.mean_uncertainty},
                 {"conflicts", m.conflicts},
                 {"count", m.count}};
    }
    EvalMetrics all = evaluate(model, cache.domains, sw);
    json out{{"accuracy", all.accuracy},
             {"mean_uncertainty", all.mean_uncertainty},
             {"conflicts", all.conflicts},
             {"count", all.count},
             {"per_domain", per_domain},
             {"combination", average ? "average" : "dempster"}};
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_fuse(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<MassSet> opinions = parse_mass_sets(in);
    if (opinions.empty()) throw ConfigError("'" + path + "' contains no mass sets");

    MassSet fused = opinions[0];
    double max_conflict = 0.0;
    for (std::size_t i = 1; i < opinions.size(); ++i) {
        // report per-fold conflict before combining
        double s1 = 0.0, s2 = 0.0, dot = 0.0;
        for (int c = 0; c < fused.num_classes(); ++c) {
            s1 += fused.b[c];
            s2 += opinions[i].b[c];
            dot += fused.b[c] * opinions[i].b[c];
        }
        max_conflict = std::max(max_conflict, s1 * s2 - dot);
        fused = combine_pair(fused, opinions[i]);
    }
    const auto [cls, u] = predict(fused);

    std::cout << "opinions: " << opinions.size() << "\n";
    std::cout << "combined b:";
    for (double b : fused.b) std::cout << ' ' << b;
    std::cout << "\ncombined u: " << fused.u << "\n";
    std::cout << "predicted class: " << cls << "\n";
    std::cout << "uncertainty: " << u << "\n";
    std::cout << "max fold conflict F: " << max_conflict << "\n";
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, bool corrupt) {
    const auto rows = run_gradcheck_suite(seed, corrupt);
    bool ok = true;
    std::cout << "op                     max_rel_err\n";
    for (const GradCheckRow& r : rows) {
        const bool pass = r.max_rel_err <= kGradCheckTolerance;
        ok = ok && pass;
        std::cout << r.name;
        for (std::size_t i = r.name.size(); i < 23; ++i) std::cout << ' ';
        std::cout << r.max_rel_err << (pass ? "" : "  FAIL") << "\n";
    }
    std::cout << (ok ? "gradcheck: all ops within tolerance\n" : "gradcheck: FAILURES\n");
    return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"style-aligned evidential domain generalization toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_flag, checkpoint_path, data_path, fuse_path;
    std::vector<std::string> overrides;
    int jobs = 1;
    bool average = false;
    bool corrupt = false;
    std::uint64_t gc_seed = 20240901;

    auto* train = app.add_subcommand("train", "leave-one-domain-out training per config");
    train->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    train->add_option("--set", overrides, "dotted-path override, e.g. train.iterations=200");
    train->add_option("-o,--out", out_flag, "output directory (overrides config)");

    auto* ablate = app.add_subcommand("ablate", "full method plus the four ablation variants");
    ablate->add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    ablate->add_option("--set", overrides, "dotted-path override");
    ablate->add_option("-o,--out", out_flag, "output directory (overrides config)");
    ablate->add_option("-j,--jobs", jobs, "parallel runs");

    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a dataset cache");
    evalc->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    evalc->add_option("--data", data_path, "dataset cache file")->required();
    evalc->add_flag("--average", average, "average opinions instead of combining");

    auto* fuse = app.add_subcommand("fuse", "combine mass sets from a text file");
    fuse->add_option("file", fuse_path, "one mass set per line: b_1 .. b_C u")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    gradcheck->add_option("--seed", gc_seed, "randomization seed");
    gradcheck->add_flag("--corrupt", corrupt, "test hook: skew one gradient")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, overrides, out_flag);
        if (ablate->parsed()) return cmd_ablate(config_path, overrides, out_flag, jobs);
        if (evalc->parsed()) return cmd_eval(checkpoint_path, data_path, average);
        if (fuse->parsed()) return cmd_fuse(fuse_path);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, corrupt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
