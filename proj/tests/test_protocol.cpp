#include "fedema/errors.hpp"
#include "fedema/protocol.hpp"
#include "fedema/runner.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <set>

using namespace fedema;
using protocol::HyperParams;
using protocol::Method;
using protocol::RoundState;

namespace {

runner::ExperimentConfig small_config() {
    runner::ExperimentConfig c;
    c.data.classes = 4;
    c.data.dim = 5;
    c.data.clients = 8;
    c.data.n_per_client = 40;
    c.data.proxy_size = 60;
    c.data.test_size = 200;
    c.data.alpha = 0.3;
    c.hidden = 12;
    return c;
}

HyperParams small_hp() {
    HyperParams hp;
    hp.local_epochs = 1;
    hp.participation = 0.5;
    hp.kd_steps = 5;
    hp.lr_server = 0.01;
    return hp;
}

std::vector<RoundState> trajectory(Method m, const HyperParams& hp, const protocol::Federation& fed, int rounds) {
    std::vector<RoundState> out{protocol::init_state(fed)};
    for (int t = 0; t < rounds; ++t) out.push_back(protocol::run_round(m, out.back(), hp, fed).first);
    return out;
}

}  // namespace

TEST_CASE("client sampling") {
    Rng rng(1);
    auto all = protocol::sample_clients(10, 1.0, rng);
    CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    Rng a(4), b(4);
    auto sa = protocol::sample_clients(100, 0.2, a);
    auto sb = protocol::sample_clients(100, 0.2, b);
    CHECK(sa.size() == 20);
    CHECK(sa == sb);
    CHECK(std::is_sorted(sa.begin(), sa.end()));
    CHECK(std::set<int>(sa.begin(), sa.end()).size() == 20);
    CHECK(protocol::sample_clients(50, 0.3, a).size() == 15);
    CHECK_THROWS_AS(protocol::sample_clients(10, 0.0, a), ParameterError);
}

TEST_CASE("ema update") {
    std::vector<nn::LayerShape> s{{2, 2, 2}};
    nn::ParamVector u(s, std::vector<double>(6, 1.0)), z(s);
    CHECK(protocol::ema_update(u, z, 0.0) == u);
    for (double v : protocol::ema_update(u, z, 0.9).values()) CHECK(v == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(protocol::ema_update(u, u, 0.9) == u);
    CHECK_THROWS_AS(protocol::ema_update(u, z, 1.0), ParameterError);
    nn::ParamVector other(std::vector<nn::LayerShape>{{3, 2, 3}});
    CHECK_THROWS_AS(protocol::ema_update(u, other, 0.5), ConfigError);

    Rng rng(2);
    auto a = nn::init_mlp(3, 4, 2, rng), b = nn::init_mlp(3, 4, 2, rng);
    auto m = protocol::ema_update(a, b, 0.7);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(m.values()[i] >= std::min(a.values()[i], b.values()[i]) - 1e-15);
        CHECK(m.values()[i] <= std::max(a.values()[i], b.values()[i]) + 1e-15);
    }
}

TEST_CASE("half-precision rounding matches exhaustive search") {
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 300; ++i) {
        const double x = i < 100 ? u(rng) : std::ldexp(u(rng), -static_cast<int>(rng() % 30));
        CHECK(protocol::round_to_half(x) == oracle::nearest_half(x));
    }
    CHECK(protocol::round_to_half(1.0 / 3) == 0.333251953125);
    CHECK(protocol::round_to_half(1.0) == 1.0);
    CHECK(protocol::round_to_half(0.0) == 0.0);
    // Exactly halfway between 1 and the next half (1 + 2^-10) rounds to the even mantissa.
    CHECK(protocol::round_to_half(1.0 + std::ldexp(1.0, -11)) == 1.0);
    CHECK(protocol::round_to_half(1.0 + 3 * std::ldexp(1.0, -11)) == 1.0 + std::ldexp(1.0, -9));
}

TEST_CASE("quantized soft labels stay on the simplex") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> z(10);
        for (auto& v : z) v = 8.0 * std::normal_distribution<double>()(rng);
        auto p = nn::softmax_temp(z, 1.0);
        auto q = protocol::fp16_roundtrip(p.probs());
        CHECK(nn::on_simplex(q.probs()));
        for (std::size_t c = 0; c < 10; ++c) CHECK(std::abs(q[c] - p[c]) < 1e-3);
    }
}

TEST_CASE("distillation without anchor, smoothing or warm-up is exactly the FedDF round") {
    auto fed = runner::build_federation(small_config(), 3);
    HyperParams hp = small_hp();
    hp.beta = 0.0;
    hp.mu_anchor = 0.0;
    hp.warmup_rounds = 0;
    hp.agg_rule = {agg::Rule::mean, 0.1};
    auto a = trajectory(Method::fedema, hp, fed, 5);
    auto b = trajectory(Method::feddf, hp, fed, 5);
    for (int t = 0; t <= 5; ++t) CHECK(a[t].w == b[t].w);
    CHECK_FALSE(a[5].w == a[0].w);
}

TEST_CASE("FedProx without the proximal term and FedAvgM without momentum are FedAvg") {
    auto fed = runner::build_federation(small_config(), 4);
    HyperParams hp = small_hp();
    hp.prox_mu = 0.0;
    hp.server_momentum = 0.0;
    auto avg = trajectory(Method::fedavg, hp, fed, 5);
    auto prox = trajectory(Method::fedprox, hp, fed, 5);
    auto mom = trajectory(Method::fedavgm, hp, fed, 5);
    for (int t = 0; t <= 5; ++t) {
        CHECK(avg[t].w == prox[t].w);
        CHECK(avg[t].w == mom[t].w);
    }
    hp.prox_mu = 0.1;
    hp.server_momentum = 0.9;
    CHECK_FALSE(trajectory(Method::fedprox, hp, fed, 2)[2].w == avg[2].w);
    CHECK_FALSE(trajectory(Method::fedavgm, hp, fed, 2)[2].w == avg[2].w);
}

TEST_CASE("FedAvg with one client adopts that client's model") {
    auto cfg = small_config();
    cfg.data.clients = 1;
    auto fed = runner::build_federation(cfg, 5);
    HyperParams hp = small_hp();
    hp.participation = 1.0;
    auto s0 = protocol::init_state(fed);
    auto [s1, report] = protocol::run_round(Method::fedavg, s0, hp, fed);
    Rng rng = substream(fed.seed, "local", 0, 0);
    auto expect = nn::local_train(s0.w, fed.clients[0].data, {.epochs = hp.local_epochs, .lr = hp.lr_local}, rng);
    CHECK(s1.w == expect);
    CHECK(report.uplink_bytes_total == 4 * static_cast<std::int64_t>(s0.w.size()));
}

TEST_CASE("warm-up rounds fall back to the mean") {
    auto fed = runner::build_federation(small_config(), 6);
    HyperParams hp = small_hp();
    hp.agg_rule = {agg::Rule::median, 0.1};
    hp.warmup_rounds = 2;
    RoundState s = protocol::init_state(fed);
    std::vector<std::string> used;
    for (int t = 0; t < 4; ++t) {
        auto [next, r] = protocol::run_round_fedema(s, hp, fed);
        used.push_back(r.agg_rule_used);
        s = next;
    }
    CHECK(used == std::vector<std::string>{"mean", "mean", "median", "median"});
}

TEST_CASE("logit round accounting") {
    auto fed = runner::build_federation(small_config(), 7);
    HyperParams hp = small_hp();
    auto s0 = protocol::init_state(fed);
    auto [s1, r] = protocol::run_round_fedema(s0, hp, fed);
    CHECK(r.participants.size() == 4);
    std::int64_t total = 0;
    for (auto b : r.uplink_per_client) {
        CHECK(b == 2 * 4 * 15);
        total += b;
    }
    CHECK(r.uplink_bytes_total == total);
    CHECK(r.downlink_bytes_total == 4 * 4 * static_cast<std::int64_t>(s0.w.size()));
    CHECK(s1.round == 1);
    CHECK_FALSE(r.skipped);

    hp.count_index_bytes = true;
    auto r2 = protocol::run_round_fedema(s0, hp, fed).second;
    CHECK(r2.uplink_per_client[0] == 2 * 4 * 15 + 4 * 15);
}

TEST_CASE("a round without proxy data is skipped and leaves the model alone") {
    auto cfg = small_config();
    cfg.data.proxy_size = 0;
    auto fed = runner::build_federation(cfg, 8);
    auto s0 = protocol::init_state(fed);
    auto [s1, r] = protocol::run_round_fedema(s0, small_hp(), fed);
    CHECK(r.skipped);
    CHECK(s1.w == s0.w);
    CHECK(s1.round == 1);
    CHECK(r.uplink_bytes_total == 0);
}

TEST_CASE("silent label-flip attackers upload nothing") {
    auto cfg = small_config();
    cfg.adversary = {.kind = adversary::Kind::label_flip, .fraction = 0.5, .flip_sends_logits = false};
    auto fed = runner::build_federation(cfg, 9);
    HyperParams hp = small_hp();
    hp.participation = 1.0;
    auto r = protocol::run_round_fedema(protocol::init_state(fed), hp, fed).second;
    int silent = 0;
    for (std::size_t i = 0; i < r.participants.size(); ++i) {
        if (fed.clients[r.participants[i]].role == Role::adversarial) {
            CHECK(r.uplink_per_client[i] == 0);
            ++silent;
        }
    }
    CHECK(silent == 4);
}

TEST_CASE("parallel clients reproduce the sequential run") {
    auto cfg = small_config();
    cfg.adversary = {.kind = adversary::Kind::random_logit, .fraction = 0.25};
    auto seq = runner::build_federation(cfg, 10);
    cfg.parallel_clients = true;
    auto par = runner::build_federation(cfg, 10);
    for (Method m : {Method::fedema, Method::fedavg, Method::feddf}) {
        auto a = trajectory(m, small_hp(), seq, 3);
        auto b = trajectory(m, small_hp(), par, 3);
        CHECK(a.back() == b.back());
    }
}

TEST_CASE("heterogeneous clients keep their own models between rounds") {
    auto cfg = small_config();
    cfg.client_hidden = {12, 6};
    auto fed = runner::build_federation(cfg, 11);
    HyperParams hp = small_hp();
    hp.participation = 1.0;
    auto s0 = protocol::init_state(fed);
    auto s1 = protocol::run_round_fedema(s0, hp, fed).first;
    for (int k = 0; k < fed.num_clients(); ++k) {
        CHECK(s1.client_models[k].has_value() == fed.heterogeneous(k));
        if (fed.heterogeneous(k)) CHECK(s1.client_models[k]->shapes() == nn::mlp_shapes(5, 6, 4));
    }
    auto s2 = protocol::run_round_fedema(s1, hp, fed).first;
    CHECK_FALSE(s2.client_models[1] == s1.client_models[1]);
    CHECK_THROWS_AS(protocol::run_round(Method::fedavg, s0, hp, fed), ConfigError);
}

TEST_CASE("single-node distillation keeps improving on separable data") {
    auto cfg = small_config();
    cfg.data.clients = 1;
    cfg.data.class_sep = 10.0;
    cfg.data.alpha = 1e6;
    cfg.data.n_per_client = 200;
    cfg.data.proxy_size = 200;
    auto fed = runner::build_federation(cfg, 12);
    HyperParams hp = small_hp();
    hp.participation = 1.0;
    hp.kd_steps = 20;
    RoundState s = protocol::init_state(fed);
    double prev = metrics::accuracy(s.w, fed.clients[0].data);
    for (int t = 0; t < 20; ++t) {
        s = protocol::run_round_fedema(s, hp, fed).first;
        const double acc = metrics::accuracy(s.w, fed.clients[0].data);
        CHECK(acc >= prev);
        prev = acc;
    }
    CHECK(prev > 0.9);
}

TEST_CASE("hyperparameter validation lists every problem") {
    HyperParams hp;
    CHECK(hp.validate().empty());
    hp.beta = 1.0;
    hp.rho = 0.0;
    hp.kd_steps = 0;
    CHECK(hp.validate().size() == 3);
}
