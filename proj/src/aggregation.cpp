#include "fedema/aggregation.hpp"

#include "fedema/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fedema::agg {

namespace {

std::size_t check_inputs(std::span<const ProbVector> vectors) {
    if (vectors.empty()) throw ProtocolError("aggregation over an empty list");
    const std::size_t c = vectors.front().classes();
    for (const auto& v : vectors) {
        if (v.classes() != c) throw InputError("aggregation: vectors differ in length");
    }
    return c;
}

std::vector<double> sorted_column(std::span<const ProbVector> vectors, std::size_t coord) {
    std::vector<double> col;
    col.reserve(vectors.size());
    for (const auto& v : vectors) col.push_back(v[coord]);
    std::sort(col.begin(), col.end());
    return col;
}

double mean_of(const std::vector<double>& sorted, std::size_t lo, std::size_t hi) {
    double sum = 0.0;
    for (std::size_t i = lo; i < hi; ++i) sum += sorted[i];
    return sum / static_cast<double>(hi - lo);
}

ProbVector renormalize(std::vector<double> coords) {
    double sum = 0.0;
    for (double v : coords) sum += v;
    if (!(sum > 0.0)) throw AggregationError("robust aggregate has zero mass");
    for (double& v : coords) v /= sum;
    return ProbVector::from(std::move(coords));
}

}  // namespace

std::string AggRule::name() const {
    switch (rule) {
        case Rule::mean: return "mean";
        case Rule::median: return "median";
        case Rule::trimmed: {
            std::string s = std::to_string(trim_frac);
            s.erase(s.find_last_not_of('0') + 1);
            if (!s.empty() && s.back() == '.') s.pop_back();
            return "trimmed:" + s;
        }
    }
    return "unknown";
}

AggRule parse_rule(const std::string& text) {
    if (text == "mean") return {Rule::mean, 0.0};
    if (text == "median") return {Rule::median, 0.0};
    if (text == "trimmed") return {Rule::trimmed, 0.1};
    if (text.rfind("trimmed:", 0) == 0) {
        double frac = 0.0;
        try {
            frac = std::stod(text.substr(8));
        } catch (const std::logic_error&) {
            throw ParameterError("bad trim fraction in '" + text + "'");
        }
        if (!(frac >= 0.0 && frac < 0.5)) throw ParameterError("trim fraction must lie in [0, 0.5)");
        return {Rule::trimmed, frac};
    }
    throw ConfigError("unknown aggregation rule '" + text + "'");
}

ProbVector agg_mean(std::span<const ProbVector> vectors) {
    const std::size_t c = check_inputs(vectors);
    std::vector<double> out(c);
    for (std::size_t j = 0; j < c; ++j) out[j] = mean_of(sorted_column(vectors, j), 0, vectors.size());
    return ProbVector::from(std::move(out));
}

std::vector<double> median_coordinates(std::span<const ProbVector> vectors) {
    const std::size_t c = check_inputs(vectors);
    const std::size_t n = vectors.size();
    std::vector<double> out(c);
    for (std::size_t j = 0; j < c; ++j) {
        const auto col = sorted_column(vectors, j);
        out[j] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return out;
}

ProbVector agg_median(std::span<const ProbVector> vectors) {
    return renormalize(median_coordinates(vectors));
}

ProbVector agg_trimmed_mean(std::span<const ProbVector> vectors, double trim_frac) {
    if (!(trim_frac >= 0.0 && trim_frac < 0.5)) throw ParameterError("trim_frac must lie in [0, 0.5)");
    const std::size_t c = check_inputs(vectors);
    const std::size_t n = vectors.size();
    const auto cut = static_cast<std::size_t>(std::floor(trim_frac * static_cast<double>(n)));
    if (2 * cut >= n) throw ParameterError("trimming removes every value");
    if (cut == 0) return agg_mean(vectors);
    std::vector<double> out(c);
    for (std::size_t j = 0; j < c; ++j) out[j] = mean_of(sorted_column(vectors, j), cut, n - cut);
    return renormalize(std::move(out));
}

ProbVector aggregate(std::span<const ProbVector> vectors, const AggRule& rule) {
    switch (rule.rule) {
        case Rule::mean: return agg_mean(vectors);
        case Rule::median: return agg_median(vectors);
        case Rule::trimmed: return agg_trimmed_mean(vectors, rule.trim_frac);
    }
    throw ConfigError("unknown aggregation rule");
}

ParamVector weight_aggregate(std::span<const ParamVector> models, std::span<const std::size_t> sizes) {
    if (models.empty()) throw ProtocolError("weight_aggregate: no models");
    if (models.size() != sizes.size()) throw ConfigError("weight_aggregate: one size per model required");
    for (std::size_t k = 0; k < models.size(); ++k) {
        if (!models[k].same_shape(models.front())) throw ConfigError("weight_aggregate: shape mismatch");
        if (sizes[k] == 0) throw ParameterError("weight_aggregate: sizes must be positive");
    }
    ParamVector out = models.front();
    std::size_t seen = sizes.front();
    for (std::size_t k = 1; k < models.size(); ++k) {
        seen += sizes[k];
        const double w = static_cast<double>(sizes[k]) / static_cast<double>(seen);
        out.flat() += w * (models[k].flat() - out.flat());
    }
    return out;
}

}  // namespace fedema::agg
