#pragma once

#include "fedema/adversary.hpp"
#include "fedema/aggregation.hpp"
#include "fedema/data.hpp"
#include "fedema/metrics.hpp"
#include "fedema/nn.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedema::protocol {

using nn::ParamVector;

enum class Method { fedema, fedavg, fedprox, fedavgm, feddf };

std::string to_string(Method method);
Method parse_method(const std::string& text);
bool uploads_logits(Method method);

struct HyperParams {
    double temperature = 5.0;
    double beta = 0.9;
    double mu_anchor = 1e-4;
    double rho = 1.0;
    int local_epochs = 5;
    double participation = 0.2;
    double lr_local = 0.05;
    double lr_server = 0.05;
    int kd_steps = 50;
    int warmup_rounds = 2;
    agg::AggRule agg_rule{agg::Rule::mean, 0.0};
    double prox_mu = 1e-2;
    double server_momentum = 0.9;
    std::size_t batch_size = 32;
    // Contributors per proxy sample; 1 keeps the shards disjoint.
    int proxy_replication = 1;
    // Count 4 bytes per uploaded proxy index on top of the probabilities.
    bool count_index_bytes = false;

    /// One message per violated range constraint; empty when valid.
    std::vector<std::string> validate() const;

    bool operator==(const HyperParams&) const = default;
};

/// Everything a run needs that stays fixed across rounds and methods for one seed.
struct Federation {
    std::vector<ClientDataset> clients;  // roles already assigned
    data::ProxySet proxy;
    LabeledDataset test;
    int classes = 0;
    std::size_t server_hidden = 0;
    // Per-client hidden width; empty means every client uses the server architecture.
    std::vector<std::size_t> client_hidden;
    adversary::AdversarySpec adversary;
    std::uint64_t seed = 0;
    bool parallel_clients = false;
    int ece_bins = metrics::kDefaultEceBins;

    int num_clients() const { return static_cast<int>(clients.size()); }
    std::size_t hidden_of(int client) const;
    bool heterogeneous(int client) const { return hidden_of(client) != server_hidden; }
};

struct RoundState {
    ParamVector w;
    ParamVector w_ema;
    ParamVector velocity;
    int round = 0;
    // Random streams are derived from (seed, purpose, client, round), so the seed is
    // the only generator state carried between rounds.
    std::uint64_t seed = 0;
    // Persistent local models of clients whose architecture differs from the server's.
    std::vector<std::optional<ParamVector>> client_models;

    bool operator==(const RoundState&) const = default;
};

/// w_0 from the "global-init" stream; w_ema = w_0; zero velocity.
RoundState init_state(const Federation& fed);

/// ceil(C_part * K) distinct ids drawn uniformly, returned in ascending order.
std::vector<int> sample_clients(int clients, double participation, Rng& rng);

/// (1 - beta) * u_next + beta * w_ema.
ParamVector ema_update(const ParamVector& u_next, const ParamVector& w_ema, double beta);

/// Rounds a probability to the nearest IEEE binary16 value (ties to even).
double round_to_half(double value);

/// FP16 wire encoding of a soft label followed by the server's renormalization on receipt.
nn::ProbVector fp16_roundtrip(std::span<const double> probs);

using RoundResult = std::pair<RoundState, metrics::RoundReport>;

/// One round of EMA-smoothed, anchored distillation from logits-only uploads.
RoundResult run_round_fedema(const RoundState& state, const HyperParams& hp, const Federation& fed);

/// fedavg / fedprox / fedavgm average weights; feddf distills the mean teacher without anchor or EMA.
RoundResult run_round_baseline(Method kind, const RoundState& state, const HyperParams& hp,
                               const Federation& fed);

RoundResult run_round(Method method, const RoundState& state, const HyperParams& hp, const Federation& fed);

/// Model-level accuracy, calibration and fairness of `model` written into `report`.
void evaluate(const ParamVector& model, const Federation& fed, metrics::RoundReport& report);

}  // namespace fedema::protocol
