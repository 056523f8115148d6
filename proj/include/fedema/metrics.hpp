#pragma once

#include "fedema/dataset.hpp"
#include "fedema/nn.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fedema::metrics {

/// Top-1 accuracy. Throws ParameterError on an empty dataset.
double accuracy(const nn::ParamVector& model, const LabeledDataset& data);

/// Accuracy of the model restricted to each class (NaN for classes absent from `data`).
std::vector<double> per_class_accuracy(const nn::ParamVector& model, const LabeledDataset& data);

/// First round index whose accuracy reaches `target`.
std::optional<std::size_t> rounds_to_target(std::span<const double> acc_history, double target);

inline constexpr int kDefaultEceBins = 15;

/// Expected calibration error over equal-width bins of the T = 1 max-probability.
double ece(const nn::ParamVector& model, const LabeledDataset& data, int bins = kDefaultEceBins);

/// Same, from precomputed confidences and 0/1 correctness flags.
double ece_from(std::span<const double> confidence, std::span<const int> correct, int bins);

struct Fairness {
    double std_dev = 0.0;
    double worst_case = 0.0;
};

/// Population standard deviation and minimum of per-client accuracies.
Fairness fairness(std::span<const double> per_client_acc);

enum class PayloadKind { logits, weights };

inline constexpr std::int64_t kBytesPerProb = 2;   // FP16
inline constexpr std::int64_t kBytesPerParam = 4;  // FP32
inline constexpr std::int64_t kBytesPerIndex = 4;

/// logits: 2 * C * Q_k; weights: 4 * param_count.
std::int64_t uplink_bytes(PayloadKind kind, std::int64_t classes, std::int64_t q_k, std::int64_t param_count);

inline constexpr double kBytesPerMb = 1e6;
inline constexpr double kJoulesPerMbUp = 0.25;
inline constexpr double kJoulesPerMbDown = 0.15;

/// Linear radio energy model: uplink_mb * j_up + downlink_mb * j_down.
double energy(double uplink_mb, double downlink_mb, double j_per_mb_up = kJoulesPerMbUp,
              double j_per_mb_down = kJoulesPerMbDown);

/// Per-round record. Byte counts are for this round; energy is cumulative.
struct RoundReport {
    int round = 0;
    double global_test_acc = 0.0;
    std::vector<double> per_client_acc;
    double ece = 0.0;
    double fair_std = 0.0;
    double fair_worst = 0.0;
    std::int64_t uplink_bytes_total = 0;
    std::int64_t downlink_bytes_total = 0;
    std::int64_t uplink_bytes_cum = 0;
    std::int64_t downlink_bytes_cum = 0;
    double energy_joules_cum = 0.0;
    std::string agg_rule_used;
    bool skipped = false;
    std::vector<int> participants;
    std::vector<std::int64_t> uplink_per_client;  // aligned with participants
};

}  // namespace fedema::metrics
