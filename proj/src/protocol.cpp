#include "fedema/protocol.hpp"

#include "fedema/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

namespace fedema::protocol {

namespace {

using metrics::RoundReport;

// What one participant sends in a logit round.
struct LogitUpload {
    std::vector<std::size_t> indices;
    std::vector<nn::ProbVector> probs;
    std::optional<ParamVector> persistent_model;
};

void for_each_participant(std::size_t count, bool parallel, const std::function<void(std::size_t)>& work) {
    if (!parallel || count < 2) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(count, std::max(2u, std::thread::hardware_concurrency()));
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers) work(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// Label-flip attackers train on poisoned labels; everyone else on their own data.
const LabeledDataset& training_data(const Federation& fed, int k, std::optional<ClientDataset>& flipped) {
    const ClientDataset& client = fed.clients[static_cast<std::size_t>(k)];
    if (client.role == Role::adversarial && fed.adversary.kind == adversary::Kind::label_flip) {
        flipped = adversary::label_flip(client, fed.classes);
        return flipped->data;
    }
    return client.data;
}

bool sends_random_logits(const Federation& fed, int k) {
    return fed.clients[static_cast<std::size_t>(k)].role == Role::adversarial &&
           fed.adversary.kind == adversary::Kind::random_logit;
}

nn::LocalTrainOptions local_options(const HyperParams& hp) {
    nn::LocalTrainOptions opt;
    opt.epochs = hp.local_epochs;
    opt.lr = hp.lr_local;
    opt.batch_size = hp.batch_size;
    return opt;
}

LogitUpload client_logit_step(const RoundState& state, const HyperParams& hp, const Federation& fed, int k,
                              const std::vector<std::size_t>& shard) {
    LogitUpload up;
    up.indices = shard;
    const auto uk = static_cast<std::uint64_t>(k);
    const auto ur = static_cast<std::uint64_t>(state.round);
    if (sends_random_logits(fed, k)) {
        Rng rng = substream(fed.seed, "attack", uk, ur);
        for (const auto& p : adversary::random_logit(shard.size(), fed.classes, rng)) {
            up.probs.push_back(fp16_roundtrip(p.probs()));
        }
        return up;
    }

    ParamVector start;
    if (fed.heterogeneous(k)) {
        const auto& kept = state.client_models[static_cast<std::size_t>(k)];
        if (kept) {
            start = *kept;
        } else {
            Rng init = substream(fed.seed, "client-init", uk);
            start = nn::init_mlp(fed.proxy.features().cols(), fed.hidden_of(k),
                                 static_cast<std::size_t>(fed.classes), init);
        }
    } else {
        start = state.w;
    }
    std::optional<ClientDataset> flipped;
    const LabeledDataset& data = training_data(fed, k, flipped);
    Rng rng = substream(fed.seed, "local", uk, ur);
    ParamVector theta = nn::local_train(start, data, local_options(hp), rng);

    const bool silent = fed.clients[static_cast<std::size_t>(k)].role == Role::adversarial &&
                        fed.adversary.kind == adversary::Kind::label_flip && !fed.adversary.flip_sends_logits;
    if (silent) {
        up.indices.clear();
    } else if (!shard.empty()) {
        Matrix x(static_cast<Eigen::Index>(shard.size()), fed.proxy.features().cols());
        for (std::size_t i = 0; i < shard.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = fed.proxy.features().row(static_cast<Eigen::Index>(shard[i]));
        }
        const Matrix probs = nn::softmax_rows(nn::forward(theta, x), hp.temperature);
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            up.probs.push_back(fp16_roundtrip({probs.row(i).data(), static_cast<std::size_t>(probs.cols())}));
        }
    }
    if (fed.heterogeneous(k)) up.persistent_model = std::move(theta);
    return up;
}

std::int64_t logit_bytes(const HyperParams& hp, const Federation& fed, std::size_t q_k) {
    auto bytes = metrics::uplink_bytes(metrics::PayloadKind::logits, fed.classes, static_cast<std::int64_t>(q_k), 0);
    if (hp.count_index_bytes) bytes += metrics::kBytesPerIndex * static_cast<std::int64_t>(q_k);
    return bytes;
}

void account(const ParamVector& broadcast, RoundReport& report) {
    const auto down_per_client =
        metrics::uplink_bytes(metrics::PayloadKind::weights, 0, 0, static_cast<std::int64_t>(broadcast.size()));
    report.downlink_bytes_total = down_per_client * static_cast<std::int64_t>(report.participants.size());
    report.uplink_bytes_total = std::accumulate(report.uplink_per_client.begin(), report.uplink_per_client.end(),
                                                std::int64_t{0});
}

// Distillation round shared by fedema and feddf. `anchor_mu`, `beta` and `rule` are the
// only knobs that differ between the two methods.
RoundResult distill_round(const RoundState& state, const HyperParams& hp, const Federation& fed, double anchor_mu,
                          std::optional<double> beta, const agg::AggRule& rule) {
    RoundState next = state;
    RoundReport report;
    report.round = state.round;
    report.agg_rule_used = rule.name();

    Rng sample_rng = substream(fed.seed, "sample", 0, static_cast<std::uint64_t>(state.round));
    report.participants = sample_clients(fed.num_clients(), hp.participation, sample_rng);

    data::ShardMap shards;
    bool skipped = fed.proxy.empty();
    if (!skipped) {
        try {
            const int replication = std::min<int>(hp.proxy_replication, static_cast<int>(report.participants.size()));
            shards = data::shard_proxy(fed.proxy.size(), hp.rho, report.participants, state.round, fed.seed,
                                       replication);
        } catch (const ProtocolError&) {
            skipped = true;
        }
    }

    std::vector<LogitUpload> uploads(report.participants.size());
    if (!skipped) {
        for_each_participant(report.participants.size(), fed.parallel_clients, [&](std::size_t i) {
            const int k = report.participants[i];
            uploads[i] = client_logit_step(state, hp, fed, k, shards.at(k));
        });
    }
    for (std::size_t i = 0; i < uploads.size(); ++i) {
        report.uplink_per_client.push_back(logit_bytes(hp, fed, uploads[i].probs.size()));
        if (uploads[i].persistent_model) {
            next.client_models[static_cast<std::size_t>(report.participants[i])] =
                std::move(uploads[i].persistent_model);
        }
    }

    // Gather contributions per proxy index in ascending client id order.
    std::map<std::size_t, std::vector<nn::ProbVector>> by_index;
    for (const auto& up : uploads) {
        for (std::size_t j = 0; j < up.probs.size(); ++j) by_index[up.indices[j]].push_back(up.probs[j]);
    }
    if (by_index.empty()) skipped = true;

    if (!skipped) {
        std::vector<agg::TeacherTarget> targets;
        try {
            for (const auto& [index, vectors] : by_index) {
                targets.push_back({index, agg::aggregate(vectors, rule), static_cast<int>(vectors.size())});
            }
        } catch (const AggregationError&) {
            skipped = true;
        }
        if (!skipped) {
            const auto cols = fed.proxy.features().cols();
            Matrix x(static_cast<Eigen::Index>(targets.size()), cols);
            Matrix teacher(static_cast<Eigen::Index>(targets.size()), fed.classes);
            for (std::size_t i = 0; i < targets.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                x.row(r) = fed.proxy.features().row(static_cast<Eigen::Index>(targets[i].proxy_index));
                for (int c = 0; c < fed.classes; ++c) teacher(r, c) = targets[i].target[static_cast<std::size_t>(c)];
            }
            nn::ServerKdOptions kd;
            kd.temperature = hp.temperature;
            kd.mu_anchor = anchor_mu;
            kd.steps = hp.kd_steps;
            kd.lr = hp.lr_server;
            ParamVector u = nn::server_kd(state.w, x, teacher, kd);
            if (beta) {
                next.w_ema = ema_update(u, state.w_ema, *beta);
                next.w = next.w_ema;
            } else {
                next.w = u;
                next.w_ema = std::move(u);
            }
        }
    }

    report.skipped = skipped;
    account(state.w, report);
    next.round = state.round + 1;
    evaluate(next.w, fed, report);
    return {std::move(next), std::move(report)};
}

RoundResult weight_round(Method kind, const RoundState& state, const HyperParams& hp, const Federation& fed) {
    for (int k = 0; k < fed.num_clients(); ++k) {
        if (fed.heterogeneous(k)) throw ConfigError("weight-averaging baselines need a shared client architecture");
    }
    RoundState next = state;
    RoundReport report;
    report.round = state.round;
    report.agg_rule_used = "weighted";

    Rng sample_rng = substream(fed.seed, "sample", 0, static_cast<std::uint64_t>(state.round));
    report.participants = sample_clients(fed.num_clients(), hp.participation, sample_rng);

    std::vector<ParamVector> models(report.participants.size());
    std::vector<std::size_t> sizes(report.participants.size());
    for_each_participant(report.participants.size(), fed.parallel_clients, [&](std::size_t i) {
        const int k = report.participants[i];
        const auto uk = static_cast<std::uint64_t>(k);
        const auto ur = static_cast<std::uint64_t>(state.round);
        sizes[i] = std::max<std::size_t>(1, fed.clients[static_cast<std::size_t>(k)].data.size());
        if (sends_random_logits(fed, k)) {
            // Weight-level analogue of an information-free payload.
            Rng rng = substream(fed.seed, "attack", uk, ur);
            std::normal_distribution<double> normal(0.0, 1.0);
            ParamVector noise(state.w.shapes());
            for (double& v : noise.values()) v = normal(rng);
            models[i] = std::move(noise);
            return;
        }
        std::optional<ClientDataset> flipped;
        const LabeledDataset& data = training_data(fed, k, flipped);
        nn::LocalTrainOptions opt = local_options(hp);
        if (kind == Method::fedprox) {
            opt.prox_mu = hp.prox_mu;
            opt.prox_anchor = &state.w;
        }
        Rng rng = substream(fed.seed, "local", uk, ur);
        models[i] = nn::local_train(state.w, data, opt, rng);
    });
    for (std::size_t i = 0; i < models.size(); ++i) {
        report.uplink_per_client.push_back(
            metrics::uplink_bytes(metrics::PayloadKind::weights, 0, 0, static_cast<std::int64_t>(models[i].size())));
    }

    ParamVector averaged = agg::weight_aggregate(models, sizes);
    if (kind == Method::fedavgm) {
        // v_{t+1} = m v_t + (avg - w_t); w_{t+1} = w_t + v_{t+1}, written as avg + m v_t.
        ParamVector velocity = state.velocity;
        velocity.flat() = hp.server_momentum * state.velocity.flat() + (averaged.flat() - state.w.flat());
        next.w = averaged;
        next.w.flat() += hp.server_momentum * state.velocity.flat();
        next.velocity = std::move(velocity);
    } else {
        next.w = std::move(averaged);
    }
    next.w_ema = next.w;

    account(state.w, report);
    next.round = state.round + 1;
    evaluate(next.w, fed, report);
    return {std::move(next), std::move(report)};
}

}  // namespace

std::string to_string(Method method) {
    switch (method) {
        case Method::fedema: return "fedema";
        case Method::fedavg: return "fedavg";
        case Method::fedprox: return "fedprox";
        case Method::fedavgm: return "fedavgm";
        case Method::feddf: return "feddf";
    }
    return "unknown";
}

Method parse_method(const std::string& text) {
    if (text == "fedema") return Method::fedema;
    if (text == "fedavg") return Method::fedavg;
    if (text == "fedprox") return Method::fedprox;
    if (text == "fedavgm") return Method::fedavgm;
    if (text == "feddf") return Method::feddf;
    throw ConfigError("unknown method '" + text + "'");
}

bool uploads_logits(Method method) { return method == Method::fedema || method == Method::feddf; }

std::vector<std::string> HyperParams::validate() const {
    std::vector<std::string> errs;
    if (!(temperature > 0.0)) errs.push_back("T must be > 0");
    if (!(beta >= 0.0 && beta < 1.0)) errs.push_back("beta must lie in [0, 1)");
    if (!(mu_anchor >= 0.0)) errs.push_back("mu_anchor must be >= 0");
    if (!(rho > 0.0 && rho <= 1.0)) errs.push_back("rho must lie in (0, 1]");
    if (local_epochs < 1) errs.push_back("E (local_epochs) must be >= 1");
    if (!(participation > 0.0 && participation <= 1.0)) errs.push_back("participation must lie in (0, 1]");
    if (!(lr_local > 0.0)) errs.push_back("lr_local must be > 0");
    if (!(lr_server > 0.0)) errs.push_back("lr_server must be > 0");
    if (kd_steps < 1) errs.push_back("kd_steps must be >= 1");
    if (warmup_rounds < 0) errs.push_back("warmup_rounds must be >= 0");
    if (agg_rule.rule == agg::Rule::trimmed && !(agg_rule.trim_frac >= 0.0 && agg_rule.trim_frac < 0.5)) {
        errs.push_back("trim fraction must lie in [0, 0.5)");
    }
    if (!(prox_mu >= 0.0)) errs.push_back("prox_mu must be >= 0");
    if (!(server_momentum >= 0.0 && server_momentum < 1.0)) errs.push_back("server_momentum must lie in [0, 1)");
    if (batch_size < 1) errs.push_back("batch_size must be >= 1");
    if (proxy_replication < 1) errs.push_back("proxy_replication must be >= 1");
    return errs;
}

std::size_t Federation::hidden_of(int client) const {
    if (client_hidden.empty()) return server_hidden;
    return client_hidden[static_cast<std::size_t>(client) % client_hidden.size()];
}

RoundState init_state(const Federation& fed) {
    RoundState state;
    state.seed = fed.seed;
    Rng rng = substream(fed.seed, "global-init");
    state.w = nn::init_mlp(static_cast<std::size_t>(fed.proxy.features().cols() > 0 ? fed.proxy.features().cols()
                                                                                     : fed.test.features.cols()),
                           fed.server_hidden, static_cast<std::size_t>(fed.classes), rng);
    state.w_ema = state.w;
    state.velocity = ParamVector(state.w.shapes());
    state.client_models.resize(fed.clients.size());
    return state;
}

std::vector<int> sample_clients(int clients, double participation, Rng& rng) {
    if (clients < 1) throw ParameterError("sample_clients: need at least one client");
    if (!(participation > 0.0 && participation <= 1.0)) throw ParameterError("participation must lie in (0, 1]");
    const double exact = participation * clients;
    auto m = static_cast<int>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
    m = std::clamp(m, 1, clients);
    std::vector<int> ids(static_cast<std::size_t>(clients));
    std::iota(ids.begin(), ids.end(), 0);
    // Partial Fisher-Yates: the first m slots are a uniform sample without replacement.
    for (int i = 0; i < m; ++i) {
        std::uniform_int_distribution<int> pick(i, clients - 1);
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
    }
    ids.resize(static_cast<std::size_t>(m));
    std::sort(ids.begin(), ids.end());
    return ids;
}

ParamVector ema_update(const ParamVector& u_next, const ParamVector& w_ema, double beta) {
    if (!u_next.same_shape(w_ema)) throw ConfigError("ema_update: shape mismatch");
    if (!(beta >= 0.0 && beta < 1.0)) throw ParameterError("ema_update: beta must lie in [0, 1)");
    ParamVector out(u_next.shapes());
    out.flat() = (1.0 - beta) * u_next.flat() + beta * w_ema.flat();
    return out;
}

double round_to_half(double value) {
    if (!std::isfinite(value)) return value;
    const double mag = std::abs(value);
    constexpr double kMaxHalf = 65504.0;
    if (mag >= kMaxHalf) return std::copysign(kMaxHalf, value);
    // Subnormal halves are spaced 2^-24 apart, normal ones 2^(e - 10).
    int exp = 0;
    std::frexp(mag, &exp);  // mag = f * 2^exp, f in [0.5, 1)
    const int e = std::max(exp - 1, -14);
    const double quantum = std::ldexp(1.0, e - 10);
    return std::copysign(std::nearbyint(mag / quantum) * quantum, value);
}

nn::ProbVector fp16_roundtrip(std::span<const double> probs) {
    std::vector<double> q(probs.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        q[i] = round_to_half(probs[i]);
        sum += q[i];
    }
    if (!(sum > 0.0)) throw InputError("soft label quantized to zero mass");
    for (double& v : q) v /= sum;
    return nn::ProbVector::from(std::move(q));
}

RoundResult run_round_fedema(const RoundState& state, const HyperParams& hp, const Federation& fed) {
    const agg::AggRule rule = state.round < hp.warmup_rounds ? agg::AggRule{agg::Rule::mean, 0.0} : hp.agg_rule;
    return distill_round(state, hp, fed, hp.mu_anchor, hp.beta, rule);
}

RoundResult run_round_baseline(Method kind, const RoundState& state, const HyperParams& hp, const Federation& fed) {
    switch (kind) {
        case Method::fedavg:
        case Method::fedprox:
        case Method::fedavgm: return weight_round(kind, state, hp, fed);
        case Method::feddf: return distill_round(state, hp, fed, 0.0, std::nullopt, {agg::Rule::mean, 0.0});
        case Method::fedema: break;
    }
    throw ConfigError("run_round_baseline: '" + to_string(kind) + "' is not a baseline");
}

RoundResult run_round(Method method, const RoundState& state, const HyperParams& hp, const Federation& fed) {
    return method == Method::fedema ? run_round_fedema(state, hp, fed) : run_round_baseline(method, state, hp, fed);
}

void evaluate(const ParamVector& model, const Federation& fed, metrics::RoundReport& report) {
    report.global_test_acc = metrics::accuracy(model, fed.test);
    report.ece = metrics::ece(model, fed.test, fed.ece_bins);
    // A client's accuracy is the global model's test accuracy reweighted by that
    // client's label marginal.
    const auto per_class = metrics::per_class_accuracy(model, fed.test);
    report.per_client_acc.clear();
    for (const auto& client : fed.clients) {
        if (client.data.empty()) continue;
        std::vector<double> counts(static_cast<std::size_t>(fed.classes), 0.0);
        for (int y : client.data.labels) counts[static_cast<std::size_t>(y)] += 1.0;
        double acc = 0.0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            if (counts[c] > 0.0 && !std::isnan(per_class[c])) {
                acc += counts[c] / static_cast<double>(client.data.size()) * per_class[c];
            }
        }
        report.per_client_acc.push_back(acc);
    }
    if (!report.per_client_acc.empty()) {
        const auto fair = metrics::fairness(report.per_client_acc);
        report.fair_std = fair.std_dev;
        report.fair_worst = fair.worst_case;
    }
}

}  // namespace fedema::protocol
