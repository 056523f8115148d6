#pragma once

#include "fedema/adversary.hpp"
#include "fedema/data.hpp"
#include "fedema/metrics.hpp"
#include "fedema/protocol.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fedema::runner {

struct DataSpec {
    int classes = 10;
    int dim = 16;
    double class_sep = 3.0;
    std::size_t test_size = 2000;
    std::size_t proxy_size = 1000;
    int clients = 50;
    double alpha = 0.1;
    std::size_t n_per_client = 200;
    // 0 means test + proxy + clients * n_per_client.
    std::size_t n_total = 0;
    // Optional CSV replacing the synthetic generator.
    std::string csv;

    std::size_t total() const;
    bool operator==(const DataSpec&) const = default;
};

struct MethodSpec {
    std::string name;
    protocol::Method kind = protocol::Method::fedema;
    protocol::HyperParams hp;

    bool operator==(const MethodSpec&) const = default;
};

struct ExperimentConfig {
    DataSpec data;
    std::size_t hidden = 64;
    std::vector<std::size_t> client_hidden;
    std::vector<MethodSpec> methods;
    int rounds = 60;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    adversary::AdversarySpec adversary;
    double target = 0.7;
    std::string out = "out";
    bool parallel_clients = false;
    int ece_bins = metrics::kDefaultEceBins;

    bool operator==(const ExperimentConfig&) const = default;

    /// Throws ValidationError listing every violated constraint.
    void validate() const;
    const MethodSpec& method(const std::string& name) const;
};

/// Defaults for a method kind before any config overrides (FedDF distills at T = 3).
protocol::HyperParams default_hyperparams(protocol::Method kind);

/// Parses flat `section.key=value` text. Unknown keys and unparsable values are
/// collected and raised together as a ValidationError; range checks run in validate().
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

/// Builds the seed's dataset, proxy, test split, client partition and adversary roles.
protocol::Federation build_federation(const ExperimentConfig& config, std::uint64_t seed);

/// Runs `rounds` rounds and fills cumulative byte and energy fields.
std::vector<metrics::RoundReport> simulate(const MethodSpec& method, const protocol::Federation& fed, int rounds);

inline constexpr const char* kRoundCsvHeader =
    "round,method,seed,global_acc,ece,fair_std,fair_worst,uplink_bytes,downlink_bytes,energy_j,agg_rule,skipped";

std::string round_csv(const std::string& method, std::uint64_t seed,
                      const std::vector<metrics::RoundReport>& reports);

struct ExperimentOutput {
    std::vector<std::filesystem::path> round_files;
    std::filesystem::path summary_file;
    std::filesystem::path partition_file;
    std::filesystem::path config_echo;
};

/// For each seed: one split shared by every method, one per-round CSV per (method, seed),
/// then the summary. Throws IoError when the output directory is unwritable.
ExperimentOutput run_experiment(const ExperimentConfig& config);

struct MetricStats {
    std::size_t n = 0;
    double mean = 0.0;
    double std_pop = 0.0;
    double std_sample = 0.0;
    // t_{0.975, n-1} * s / sqrt(n); absent for n < 2.
    std::optional<double> ci95_half;
};

MetricStats describe(const std::vector<double>& values);

/// Two-sided 95% Student-t critical value with `dof` degrees of freedom.
double t_critical_975(int dof);

struct MethodSummary {
    std::string method;
    std::size_t seeds = 0;
    std::size_t reached_target = 0;
    MetricStats final_acc;
    MetricStats rounds_to_target;  // over seeds that reached the target
    MetricStats uplink_mb_total;
    MetricStats uplink_mb_to_target;
    MetricStats energy_j;
};

struct RunSummary {
    double target = 0.0;
    std::vector<MethodSummary> methods;

    const MethodSummary& at(const std::string& method) const;
};

/// Reads every per-round CSV under `dir` (recursively) and aggregates per method.
/// Throws InputError when a file does not carry the per-round schema.
RunSummary summarize(const std::filesystem::path& dir, double target);

std::string summary_csv(const RunSummary& summary);

}  // namespace fedema::runner
