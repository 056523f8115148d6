// Command-line front end: run experiments, summarize per-round CSVs, print client statistics.

#include "fedema/errors.hpp"
#include "fedema/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

namespace {

using namespace fedema;

constexpr int kValidationExit = 2;

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

runner::ExperimentConfig resolve(const std::string& config_path, const std::string& out_dir,
                                 const std::string& seeds, const std::string& methods) {
    runner::ExperimentConfig cfg = runner::load_config(config_path);
    if (!out_dir.empty()) {
        cfg.out = out_dir;
    } else if (const char* env = std::getenv("FEDEMA_OUT"); env != nullptr && *env != '\0') {
        cfg.out = env;
    }
    if (!seeds.empty()) {
        cfg.seeds.clear();
        for (const auto& s : split_csv(seeds)) {
            try {
                cfg.seeds.push_back(std::stoull(s));
            } catch (const std::logic_error&) {
                throw ValidationError({"--seeds: '" + s + "' is not a seed"});
            }
        }
    }
    if (!methods.empty()) {
        std::vector<runner::MethodSpec> kept;
        std::vector<std::string> missing;
        for (const auto& name : split_csv(methods)) {
            try {
                kept.push_back(cfg.method(name));
            } catch (const ConfigError&) {
                missing.push_back("--methods: no method named '" + name + "' in the config");
            }
        }
        if (!missing.empty()) throw ValidationError(missing);
        cfg.methods = std::move(kept);
    }
    cfg.validate();
    return cfg;
}

void print_summary(const runner::RunSummary& summary) {
    std::printf("%-14s %6s %16s %10s %14s %12s\n", "method", "seeds", "final_acc", "R@target", "uplink_MB", "energy_J");
    for (const auto& m : summary.methods) {
        std::printf("%-14s %6zu %8.4f+-%.4f %10s %14.4f %12.4f\n", m.method.c_str(), m.seeds, m.final_acc.mean,
                    m.final_acc.std_pop,
                    m.reached_target == m.seeds ? std::to_string(m.rounds_to_target.mean).substr(0, 6).c_str() : "-",
                    m.uplink_mb_total.mean, m.energy_j.mean);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated distillation simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seeds, methods, in_dir;
    double target = 0.7;

    auto* run = app.add_subcommand("run", "Run every configured method on every seed");
    run->add_option("--config", config_path, "Experiment config file")->required();
    run->add_option("--out", out_dir, "Output directory (overrides FEDEMA_OUT and run.out)");
    run->add_option("--seeds", seeds, "Comma-separated seeds");
    run->add_option("--methods", methods, "Comma-separated method names from the config");

    auto* summarize = app.add_subcommand("summarize", "Aggregate per-round CSVs over seeds");
    summarize->add_option("--in", in_dir, "Directory holding per-round CSVs")->required();
    summarize->add_option("--target", target, "Accuracy target for rounds-to-target");

    auto* stats = app.add_subcommand("stats", "Print client label-skew statistics per seed");
    stats->add_option("--config", config_path, "Experiment config file")->required();
    stats->add_option("--seeds", seeds, "Comma-separated seeds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const auto cfg = resolve(config_path, out_dir, seeds, methods);
            const auto output = runner::run_experiment(cfg);
            print_summary(runner::summarize(std::filesystem::path(cfg.out) / "rounds", cfg.target));
            std::cout << "wrote " << output.round_files.size() << " round files and " << output.summary_file.string()
                      << '\n';
        } else if (summarize->parsed()) {
            if (!(target > 0.0 && target < 1.0)) throw ValidationError({"--target must lie in (0, 1)"});
            const auto summary = runner::summarize(in_dir, target);
            std::cout << runner::summary_csv(summary);
        } else if (stats->parsed()) {
            const auto cfg = resolve(config_path, "", seeds, "");
            std::printf("%-8s %6s %10s %8s %8s %8s %8s\n", "seed", "n", "classes", "pmax10", "pmax50", "pmax90", "H");
            data::ClientStats mean;
            for (auto seed : cfg.seeds) {
                const auto fed = runner::build_federation(cfg, seed);
                const auto s = data::client_stats(fed.clients, fed.classes);
                std::printf("%-8llu %6zu %10.1f %8.2f %8.2f %8.2f %8.3f\n", static_cast<unsigned long long>(seed),
                            cfg.data.n_per_client, s.classes_per_client_median, s.p_max_p10, s.p_max_p50, s.p_max_p90,
                            s.mean_norm_entropy);
                mean.classes_per_client_median += s.classes_per_client_median;
                mean.p_max_p10 += s.p_max_p10;
                mean.p_max_p50 += s.p_max_p50;
                mean.p_max_p90 += s.p_max_p90;
                mean.mean_norm_entropy += s.mean_norm_entropy;
            }
            const auto n = static_cast<double>(cfg.seeds.size());
            std::printf("%-8s %6zu %10.1f %8.2f %8.2f %8.2f %8.3f\n", "mean", cfg.data.n_per_client,
                        mean.classes_per_client_median / n, mean.p_max_p10 / n, mean.p_max_p50 / n,
                        mean.p_max_p90 / n, mean.mean_norm_entropy / n);
        }
    } catch (const ValidationError& e) {
        std::cerr << e.what() << '\n';
        return kValidationExit;
    } catch (const fedema::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
