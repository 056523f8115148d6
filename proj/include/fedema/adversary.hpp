#pragma once

#include "fedema/dataset.hpp"
#include "fedema/nn.hpp"
#include "fedema/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fedema::adversary {

enum class Kind { none, label_flip, random_logit };

std::string to_string(Kind kind);
Kind parse_kind(const std::string& text);

struct AdversarySpec {
    Kind kind = Kind::none;
    double fraction = 0.0;
    std::uint64_t seed = 0;
    // Label-flip attackers still upload soft labels from their poisoned model.
    bool flip_sends_logits = true;

    bool operator==(const AdversarySpec&) const = default;
};

/// Exactly floor(fraction * K) clients tagged adversarial, chosen uniformly without
/// replacement. Roles stay fixed for the whole run.
std::vector<Role> assign_roles(int clients, const AdversarySpec& spec, Rng& rng);

/// Every label y becomes (y + 1) mod C; features are copied untouched.
ClientDataset label_flip(const ClientDataset& data, int classes);

/// softmax(g, T = 1) with g ~ N(0, I_C), one vector per proxy sample.
std::vector<nn::ProbVector> random_logit(std::size_t shard_size, int classes, Rng& rng);

}  // namespace fedema::adversary
