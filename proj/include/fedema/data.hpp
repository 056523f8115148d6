#pragma once

#include "fedema/dataset.hpp"
#include "fedema/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace fedema::data {

/// Gaussian mixture: class c is centred on a random point of the sphere of radius
/// `class_sep`, unit covariance. Class counts differ by at most one.
LabeledDataset gen_synthetic(int classes, int dim, std::size_t n_total, double class_sep,
                             std::uint64_t seed);

/// CSV with a header row, `d` feature columns and a trailing integer label column.
LabeledDataset load_csv(const std::filesystem::path& path);

/// Uniform sample of `held_size` rows without replacement; returns (remainder, held).
std::pair<LabeledDataset, LabeledDataset> split_holdout(const LabeledDataset& data,
                                                        std::size_t held_size, std::uint64_t seed);

class ProxyAudit;

/// Unlabeled public proxy set. Labels are kept for offline auditing only and are
/// reachable solely through ProxyAudit, never from protocol code.
class ProxySet {
public:
    ProxySet() = default;

    const Matrix& features() const { return features_; }
    const std::vector<std::size_t>& origin() const { return origin_; }
    std::size_t size() const { return origin_.size(); }
    bool empty() const { return origin_.empty(); }

private:
    friend class ProxyAudit;
    friend std::pair<LabeledDataset, ProxySet> proxy_split(const LabeledDataset&, std::size_t,
                                                           std::uint64_t);
    Matrix features_;
    std::vector<std::size_t> origin_;
    std::vector<int> labels_;
};

class ProxyAudit {
public:
    static std::span<const int> labels(const ProxySet& proxy) { return proxy.labels_; }
};

/// Returns (client pool, proxy). Throws ParameterError when proxy_size >= |data|.
std::pair<LabeledDataset, ProxySet> proxy_split(const LabeledDataset& data, std::size_t proxy_size,
                                                std::uint64_t seed);

/// Per client: pi_k ~ Dir(alpha), exactly `n_per_client` samples with class counts from
/// largest-remainder rounding of pi_k * n (ties to the lower class index). Samples are drawn
/// without replacement per class; a dry class falls back to resampling and sets `resampled`.
std::vector<ClientDataset> dirichlet_partition(const LabeledDataset& pool, int clients, double alpha,
                                               std::size_t n_per_client, std::uint64_t seed);

/// Integer counts summing to `total` by largest-remainder rounding of proportions * total.
std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total);

struct ClientStats {
    double classes_per_client_median = 0.0;
    double p_max_p10 = 0.0;
    double p_max_p50 = 0.0;
    double p_max_p90 = 0.0;
    double mean_norm_entropy = 0.0;
    std::size_t empty_clients = 0;
};

ClientStats client_stats(std::span<const ClientDataset> clients, int classes);

/// Nearest-rank percentile (pct in (0, 100]) of unsorted values.
double nearest_rank(std::vector<double> values, double pct);

/// Proxy indices assigned to each participant for one round.
using ShardMap = std::map<int, std::vector<std::size_t>>;

/// Selects U_t of size ceil(rho * |U|) by walking a seed-fixed random permutation of the
/// proxy cyclically (round t starts at t * |U_t| mod |U|), then splits U_t into near-equal
/// disjoint contiguous shards, one per participant in ascending id order. With
/// `replication` r > 1, participant i additionally receives the shards of the next r - 1
/// participants (cyclically), so every index in U_t has exactly r contributors.
ShardMap shard_proxy(std::size_t proxy_size, double rho, std::span<const int> participants, int round,
                     std::uint64_t seed, int replication = 1);

/// Size of U_t, ceil(rho * |U|) computed without floating error for dyadic rho.
std::size_t proxy_subset_size(std::size_t proxy_size, double rho);

/// FNV-1a over every client's (id, origin indices).
std::uint64_t partition_hash(std::span<const ClientDataset> clients);

}  // namespace fedema::data
