#pragma once

#include "fedema/nn.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fedema::agg {

using nn::ParamVector;
using nn::ProbVector;

/// Teacher soft label for one proxy sample.
struct TeacherTarget {
    std::size_t proxy_index = 0;
    ProbVector target;
    int contributor_count = 0;
};

enum class Rule { mean, median, trimmed };

struct AggRule {
    Rule rule = Rule::mean;
    double trim_frac = 0.0;

    std::string name() const;
    bool operator==(const AggRule&) const = default;
};

/// Parses "mean", "median", "trimmed" (10%) or "trimmed:<frac>".
AggRule parse_rule(const std::string& text);

// Each coordinate is reduced over its sorted values, so every aggregator is
// bit-invariant under permutations of the input list.

/// Coordinate-wise arithmetic mean.
ProbVector agg_mean(std::span<const ProbVector> vectors);

/// Coordinate-wise median (even count: midpoint of the two central values), renormalized.
/// Throws AggregationError when every median coordinate is zero.
ProbVector agg_median(std::span<const ProbVector> vectors);

/// Drops floor(trim_frac * n) values from each tail per coordinate, averages the rest and
/// renormalizes. With nothing trimmed the result is agg_mean, bit for bit.
ProbVector agg_trimmed_mean(std::span<const ProbVector> vectors, double trim_frac);

ProbVector aggregate(std::span<const ProbVector> vectors, const AggRule& rule);

/// Coordinate values before renormalization; exposed for containment checks.
std::vector<double> median_coordinates(std::span<const ProbVector> vectors);

/// sum_k (n_k / N) theta_k, accumulated as a running weighted mean in list order.
ParamVector weight_aggregate(std::span<const ParamVector> models, std::span<const std::size_t> sizes);

}  // namespace fedema::agg
