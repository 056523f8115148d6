#include "fedema/adversary.hpp"

#include "fedema/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedema::adversary {

std::string to_string(Kind kind) {
    switch (kind) {
        case Kind::none: return "none";
        case Kind::label_flip: return "label_flip";
        case Kind::random_logit: return "random_logit";
    }
    return "none";
}

Kind parse_kind(const std::string& text) {
    if (text == "none") return Kind::none;
    if (text == "label_flip") return Kind::label_flip;
    if (text == "random_logit") return Kind::random_logit;
    throw ConfigError("unknown adversary kind '" + text + "'");
}

std::vector<Role> assign_roles(int clients, const AdversarySpec& spec, Rng& rng) {
    if (clients < 0) throw ParameterError("assign_roles: negative client count");
    if (!(spec.fraction >= 0.0 && spec.fraction < 1.0)) {
        throw ParameterError("adversary fraction must lie in [0, 1)");
    }
    std::vector<Role> roles(static_cast<std::size_t>(clients), Role::honest);
    if (spec.kind == Kind::none) return roles;
    const auto count = static_cast<std::size_t>(std::floor(spec.fraction * clients + 1e-9));
    std::vector<std::size_t> ids(roles.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < count; ++i) roles[ids[i]] = Role::adversarial;
    return roles;
}

ClientDataset label_flip(const ClientDataset& data, int classes) {
    if (classes < 2) throw ParameterError("label_flip needs at least 2 classes");
    ClientDataset out = data;
    for (int& y : out.data.labels) y = (y + 1) % classes;
    return out;
}

std::vector<nn::ProbVector> random_logit(std::size_t shard_size, int classes, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<nn::ProbVector> out;
    out.reserve(shard_size);
    std::vector<double> g(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < shard_size; ++i) {
        for (double& v : g) v = normal(rng);
        out.push_back(nn::softmax_temp(g, 1.0));
    }
    return out;
}

}  // namespace fedema::adversary
