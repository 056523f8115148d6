#include "fedema/data.hpp"

#include "fedema/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace fedema::data {

namespace {

std::vector<std::size_t> iota_vec(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xFFu;
        h *= 0x100000001B3ULL;
    }
}

}  // namespace

LabeledDataset gen_synthetic(int classes, int dim, std::size_t n_total, double class_sep,
                             std::uint64_t seed) {
    if (classes < 2) throw ParameterError("gen_synthetic: need at least 2 classes");
    if (dim < 2) throw ParameterError("gen_synthetic: need dim >= 2");
    if (n_total < static_cast<std::size_t>(classes)) throw ParameterError("gen_synthetic: n_total < classes");
    if (!(class_sep >= 0.0) || !std::isfinite(class_sep)) throw ParameterError("gen_synthetic: bad class_sep");

    Rng rng = substream(seed, "synthetic");
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix means(classes, dim);
    for (int c = 0; c < classes; ++c) {
        for (int j = 0; j < dim; ++j) means(c, j) = normal(rng);
        const double norm = means.row(c).norm();
        means.row(c) *= norm > 0.0 ? class_sep / norm : 0.0;
    }

    std::vector<int> labels(n_total);
    for (std::size_t i = 0; i < n_total; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
    std::shuffle(labels.begin(), labels.end(), rng);

    LabeledDataset out;
    out.classes = classes;
    out.features.resize(static_cast<Eigen::Index>(n_total), dim);
    for (std::size_t i = 0; i < n_total; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (int j = 0; j < dim; ++j) out.features(r, j) = means(labels[i], j) + normal(rng);
    }
    out.labels = std::move(labels);
    out.origin = iota_vec(n_total);
    return out;
}

LabeledDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InputError("dataset " + path.string() + " is empty");
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 2) throw InputError("dataset needs at least one feature column and a label column");
    const std::size_t dim = columns - 1;

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                if (col < dim) {
                    values.push_back(std::stod(cell));
                } else if (col == dim) {
                    const int y = std::stoi(cell);
                    if (y < 0) throw InputError("negative label");
                    labels.push_back(y);
                }
            } catch (const std::logic_error&) {
                throw InputError("dataset line " + std::to_string(lineno) + ": cannot parse '" + cell + "'");
            }
            ++col;
        }
        if (col != columns) throw InputError("dataset line " + std::to_string(lineno) + ": wrong column count");
    }
    if (labels.empty()) throw InputError("dataset " + path.string() + " has no rows");

    LabeledDataset out;
    out.classes = *std::max_element(labels.begin(), labels.end()) + 1;
    out.features.resize(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim));
    std::copy(values.begin(), values.end(), out.features.data());
    out.labels = std::move(labels);
    out.origin = iota_vec(out.labels.size());
    if (!out.features.allFinite()) throw InputError("dataset contains non-finite features");
    return out;
}

std::pair<LabeledDataset, LabeledDataset> split_holdout(const LabeledDataset& data,
                                                        std::size_t held_size, std::uint64_t seed) {
    if (held_size >= data.size() && held_size > 0) {
        throw ParameterError("holdout size " + std::to_string(held_size) + " must be below dataset size " +
                             std::to_string(data.size()));
    }
    std::vector<std::size_t> perm = iota_vec(data.size());
    Rng rng = substream(seed, "holdout");
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> held(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(held_size));
    std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(held_size), perm.end());
    std::sort(held.begin(), held.end());
    std::sort(rest.begin(), rest.end());
    return {select_rows(data, rest), select_rows(data, held)};
}

std::pair<LabeledDataset, ProxySet> proxy_split(const LabeledDataset& data, std::size_t proxy_size,
                                                std::uint64_t seed) {
    if (proxy_size >= data.size() && proxy_size > 0) {
        throw ParameterError("proxy_size must be below the dataset size");
    }
    std::vector<std::size_t> perm = iota_vec(data.size());
    Rng rng = substream(seed, "proxy");
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> picked(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(proxy_size));
    std::vector<std::size_t> rest(perm.begin() + static_cast<std::ptrdiff_t>(proxy_size), perm.end());
    std::sort(picked.begin(), picked.end());
    std::sort(rest.begin(), rest.end());

    LabeledDataset held = select_rows(data, picked);
    ProxySet proxy;
    proxy.features_ = std::move(held.features);
    proxy.origin_ = std::move(held.origin);
    proxy.labels_ = std::move(held.labels);
    return {select_rows(data, rest), std::move(proxy)};
}

std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total) {
    const std::size_t n = proportions.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<double> remainders(n, 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = proportions[i] * static_cast<double>(total);
        const double fl = std::floor(exact);
        counts[i] = static_cast<std::size_t>(fl);
        remainders[i] = exact - fl;
        assigned += counts[i];
    }
    if (assigned > total) throw InputError("largest_remainder: proportions sum above 1");
    // Ties keep the lower class index first.
    std::vector<std::size_t> order = iota_vec(n);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % n) {
        ++counts[order[k]];
        ++assigned;
    }
    return counts;
}

std::vector<ClientDataset> dirichlet_partition(const LabeledDataset& pool, int clients, double alpha,
                                               std::size_t n_per_client, std::uint64_t seed) {
    if (clients < 1) throw ParameterError("dirichlet_partition: need at least one client");
    if (n_per_client < 1) throw ParameterError("dirichlet_partition: n_per_client must be >= 1");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("dirichlet_partition: alpha must be positive");
    const int classes = pool.classes;

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[static_cast<std::size_t>(pool.labels[i])].push_back(i);
    Rng shuffle_rng = substream(seed, "partition-pools");
    for (auto& rows : by_class) std::shuffle(rows.begin(), rows.end(), shuffle_rng);
    std::vector<std::size_t> cursor(static_cast<std::size_t>(classes), 0);

    std::vector<ClientDataset> out;
    out.reserve(static_cast<std::size_t>(clients));
    for (int k = 0; k < clients; ++k) {
        Rng rng = substream(seed, "dirichlet", static_cast<std::uint64_t>(k));
        std::gamma_distribution<double> gamma(alpha, 1.0);
        std::vector<double> pi(static_cast<std::size_t>(classes));
        double sum = 0.0;
        for (auto& p : pi) {
            p = gamma(rng);
            sum += p;
        }
        if (sum > 0.0) {
            for (auto& p : pi) p /= sum;
        } else {
            // Every gamma draw underflowed (tiny alpha): put all mass on one class.
            std::uniform_int_distribution<int> pick(0, classes - 1);
            std::fill(pi.begin(), pi.end(), 0.0);
            pi[static_cast<std::size_t>(pick(rng))] = 1.0;
        }
        const std::vector<std::size_t> counts = largest_remainder(pi, n_per_client);

        ClientDataset client;
        client.id = k;
        std::vector<std::size_t> rows;
        rows.reserve(n_per_client);
        for (int c = 0; c < classes; ++c) {
            const auto cc = static_cast<std::size_t>(c);
            auto& avail = by_class[cc];
            for (std::size_t j = 0; j < counts[cc]; ++j) {
                if (avail.empty()) throw InputError("dirichlet_partition: class " + std::to_string(c) + " absent from pool");
                if (cursor[cc] < avail.size()) {
                    rows.push_back(avail[cursor[cc]++]);
                } else {
                    std::uniform_int_distribution<std::size_t> pick(0, avail.size() - 1);
                    rows.push_back(avail[pick(rng)]);
                    client.resampled = true;
                }
            }
        }
        client.data = select_rows(pool, rows);
        out.push_back(std::move(client));
    }
    return out;
}

double nearest_rank(std::vector<double> values, double pct) {
    if (values.empty()) throw InputError("nearest_rank of empty list");
    std::sort(values.begin(), values.end());
    const double rank = std::ceil(pct / 100.0 * static_cast<double>(values.size()) - 1e-12);
    const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
    return values[idx];
}

ClientStats client_stats(std::span<const ClientDataset> clients, int classes) {
    if (clients.empty()) throw InputError("client_stats: no clients");
    if (classes < 2) throw ParameterError("client_stats: need at least 2 classes");
    std::vector<double> nonempty;
    std::vector<double> pmax;
    double entropy_sum = 0.0;
    ClientStats stats;
    for (const auto& client : clients) {
        const std::size_t n = client.data.size();
        if (n == 0) {
            ++stats.empty_clients;
            nonempty.push_back(0.0);
            pmax.push_back(1.0);
            continue;
        }
        std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
        for (int y : client.data.labels) ++counts[static_cast<std::size_t>(y)];
        double h = 0.0;
        double top = 0.0;
        int support = 0;
        for (std::size_t c : counts) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / static_cast<double>(n);
            h -= p * std::log(p);
            top = std::max(top, p);
            ++support;
        }
        entropy_sum += h / std::log(static_cast<double>(classes));
        nonempty.push_back(support);
        pmax.push_back(top);
    }
    std::vector<double> sorted = nonempty;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    stats.classes_per_client_median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    stats.p_max_p10 = nearest_rank(pmax, 10.0);
    stats.p_max_p50 = nearest_rank(pmax, 50.0);
    stats.p_max_p90 = nearest_rank(pmax, 90.0);
    stats.mean_norm_entropy = entropy_sum / static_cast<double>(clients.size());
    return stats;
}

std::size_t proxy_subset_size(std::size_t proxy_size, double rho) {
    if (!(rho > 0.0) || rho > 1.0) throw ParameterError("rho must lie in (0, 1]");
    const double exact = rho * static_cast<double>(proxy_size);
    const auto size = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
    return std::min(size, proxy_size);
}

ShardMap shard_proxy(std::size_t proxy_size, double rho, std::span<const int> participants, int round,
                     std::uint64_t seed, int replication) {
    if (participants.empty()) throw ProtocolError("shard_proxy: no participants");
    if (round < 0) throw ParameterError("shard_proxy: negative round");
    const std::size_t subset = proxy_subset_size(proxy_size, rho);
    const std::size_t parts = participants.size();
    if (subset < parts) {
        throw ProtocolError("shard_proxy: proxy subset of " + std::to_string(subset) + " is smaller than " +
                            std::to_string(parts) + " participants");
    }
    if (replication < 1 || static_cast<std::size_t>(replication) > parts) {
        throw ParameterError("shard_proxy: replication must lie in [1, participants]");
    }

    std::vector<std::size_t> perm = iota_vec(proxy_size);
    Rng rng = substream(seed, "proxy-cycle");
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t start = (static_cast<std::size_t>(round) * subset) % proxy_size;
    std::vector<std::size_t> chosen(subset);
    for (std::size_t i = 0; i < subset; ++i) chosen[i] = perm[(start + i) % proxy_size];

    std::vector<int> ids(participants.begin(), participants.end());
    std::sort(ids.begin(), ids.end());
    std::vector<std::vector<std::size_t>> shards(parts);
    const std::size_t base = subset / parts;
    const std::size_t extra = subset % parts;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < parts; ++s) {
        const std::size_t len = base + (s < extra ? 1 : 0);
        shards[s].assign(chosen.begin() + static_cast<std::ptrdiff_t>(pos),
                         chosen.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }

    ShardMap out;
    for (std::size_t s = 0; s < parts; ++s) {
        auto& mine = out[ids[s]];
        for (int r = 0; r < replication; ++r) {
            const auto& shard = shards[(s + static_cast<std::size_t>(r)) % parts];
            mine.insert(mine.end(), shard.begin(), shard.end());
        }
    }
    return out;
}

std::uint64_t partition_hash(std::span<const ClientDataset> clients) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& c : clients) {
        fnv_mix(h, static_cast<std::uint64_t>(c.id));
        fnv_mix(h, c.data.size());
        for (std::size_t o : c.data.origin) fnv_mix(h, o);
    }
    return h;
}

}  // namespace fedema::data
