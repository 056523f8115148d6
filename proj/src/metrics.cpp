#include "fedema/metrics.hpp"

#include "fedema/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fedema::metrics {

namespace {

std::vector<int> predictions(const nn::ParamVector& model, const LabeledDataset& data) {
    const Matrix logits = nn::forward(model, data.features);
    std::vector<int> pred(data.size());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index arg = 0;
        logits.row(i).maxCoeff(&arg);
        pred[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return pred;
}

}  // namespace

double accuracy(const nn::ParamVector& model, const LabeledDataset& data) {
    if (data.empty()) throw ParameterError("accuracy of an empty dataset");
    const auto pred = predictions(model, data);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<double> per_class_accuracy(const nn::ParamVector& model, const LabeledDataset& data) {
    if (data.empty()) throw ParameterError("per_class_accuracy of an empty dataset");
    const auto pred = predictions(model, data);
    std::vector<double> hits(static_cast<std::size_t>(data.classes), 0.0);
    std::vector<double> totals(static_cast<std::size_t>(data.classes), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto y = static_cast<std::size_t>(data.labels[i]);
        totals[y] += 1.0;
        if (pred[i] == data.labels[i]) hits[y] += 1.0;
    }
    for (std::size_t c = 0; c < hits.size(); ++c) {
        hits[c] = totals[c] > 0.0 ? hits[c] / totals[c] : std::numeric_limits<double>::quiet_NaN();
    }
    return hits;
}

std::optional<std::size_t> rounds_to_target(std::span<const double> acc_history, double target) {
    for (std::size_t t = 0; t < acc_history.size(); ++t) {
        if (acc_history[t] >= target) return t;
    }
    return std::nullopt;
}

double ece_from(std::span<const double> confidence, std::span<const int> correct, int bins) {
    if (bins < 1) throw ParameterError("ece needs at least one bin");
    if (confidence.size() != correct.size()) throw InputError("ece: length mismatch");
    if (confidence.empty()) throw ParameterError("ece of an empty dataset");
    std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> hit_sum(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> count(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < confidence.size(); ++i) {
        // Bin b covers (b/B, (b+1)/B]; confidence 0 falls in the first bin.
        const double c = confidence[i];
        auto b = static_cast<int>(std::ceil(c * bins)) - 1;
        b = std::clamp(b, 0, bins - 1);
        const auto bb = static_cast<std::size_t>(b);
        conf_sum[bb] += c;
        hit_sum[bb] += correct[i] != 0 ? 1.0 : 0.0;
        count[bb] += 1.0;
    }
    const auto n = static_cast<double>(confidence.size());
    double total = 0.0;
    for (std::size_t b = 0; b < count.size(); ++b) {
        if (count[b] == 0.0) continue;
        total += (count[b] / n) * std::abs(hit_sum[b] / count[b] - conf_sum[b] / count[b]);
    }
    return total;
}

double ece(const nn::ParamVector& model, const LabeledDataset& data, int bins) {
    if (data.empty()) throw ParameterError("ece of an empty dataset");
    const Matrix probs = nn::softmax_rows(nn::forward(model, data.features), 1.0);
    std::vector<double> conf(data.size());
    std::vector<int> hits(data.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index arg = 0;
        conf[static_cast<std::size_t>(i)] = probs.row(i).maxCoeff(&arg);
        hits[static_cast<std::size_t>(i)] = arg == data.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    return ece_from(conf, hits, bins);
}

Fairness fairness(std::span<const double> per_client_acc) {
    if (per_client_acc.empty()) throw ParameterError("fairness of an empty list");
    const auto n = static_cast<double>(per_client_acc.size());
    // Shifted by the first value so identical inputs give exactly zero.
    const double x0 = per_client_acc.front();
    double mean = 0.0;
    for (double a : per_client_acc) mean += a - x0;
    mean /= n;
    double ss = 0.0;
    for (double a : per_client_acc) ss += (a - x0 - mean) * (a - x0 - mean);
    return {std::sqrt(ss / n), *std::min_element(per_client_acc.begin(), per_client_acc.end())};
}

std::int64_t uplink_bytes(PayloadKind kind, std::int64_t classes, std::int64_t q_k, std::int64_t param_count) {
    if (classes < 0 || q_k < 0 || param_count < 0) throw ParameterError("uplink_bytes: negative count");
    return kind == PayloadKind::logits ? kBytesPerProb * classes * q_k : kBytesPerParam * param_count;
}

double energy(double uplink_mb, double downlink_mb, double j_per_mb_up, double j_per_mb_down) {
    if (uplink_mb < 0.0 || downlink_mb < 0.0 || j_per_mb_up < 0.0 || j_per_mb_down < 0.0) {
        throw ParameterError("energy: negative input");
    }
    return uplink_mb * j_per_mb_up + downlink_mb * j_per_mb_down;
}

}  // namespace fedema::metrics
