#pragma once

// Reference implementations used only by the tests. They deliberately avoid Eigen and the
// library's helpers so a shared bug cannot make both sides agree.

#include "fedema/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid matmul_forward(const fedema::nn::ParamVector& model, const Grid& x) {
    std::span<const double> v = model.values();
    Grid act = x;
    std::size_t off = 0;
    for (std::size_t l = 0; l < model.layers(); ++l) {
        const auto& s = model.shapes()[l];
        Grid next(act.size(), std::vector<double>(s.rows, 0.0));
        for (std::size_t n = 0; n < act.size(); ++n) {
            for (std::size_t r = 0; r < s.rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < s.cols; ++c) acc += v[off + r * s.cols + c] * act[n][c];
                acc += v[off + s.rows * s.cols + r];
                next[n][r] = (l + 1 < model.layers()) ? std::max(acc, 0.0) : acc;
            }
        }
        off += s.rows * s.cols + s.bias;
        act = std::move(next);
    }
    return act;
}

inline std::vector<long double> softmax_ld(const std::vector<double>& z, double T) {
    std::vector<long double> e(z.size());
    long double sum = 0.0L;
    for (std::size_t i = 0; i < z.size(); ++i) {
        e[i] = std::exp(static_cast<long double>(z[i]) / static_cast<long double>(T));
        sum += e[i];
    }
    for (auto& v : e) v /= sum;
    return e;
}

inline double kl_terms(const std::vector<double>& p, const std::vector<double>& q) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        total += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
    }
    return total;
}

/// Central differences of f at x, step h.
inline std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double max_rel_err(std::span<const double> a, std::span<const double> b) {
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
        diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    return scale == 0.0 ? diff : diff / scale;
}

inline double sorted_slice_mean(std::vector<double> values, std::size_t cut) {
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (std::size_t i = cut; i < values.size() - cut; ++i) s += values[i];
    return s / static_cast<double>(values.size() - 2 * cut);
}

struct TwoPass {
    double mean;
    double var_pop;
    double var_sample;
};

inline TwoPass two_pass(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, ss / static_cast<double>(v.size()),
            v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0};
}

/// Fits class centroids on (train_x, train_y) and returns accuracy on (test_x, test_y).
inline double nearest_centroid(const Grid& train_x, const std::vector<int>& train_y, const Grid& test_x,
                               const std::vector<int>& test_y, int classes) {
    const std::size_t d = train_x.front().size();
    Grid mu(classes, std::vector<double>(d, 0.0));
    std::vector<int> count(classes, 0);
    for (std::size_t i = 0; i < train_x.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) mu[train_y[i]][j] += train_x[i][j];
        ++count[train_y[i]];
    }
    for (int c = 0; c < classes; ++c)
        for (auto& v : mu[c]) v /= std::max(count[c], 1);
    int hits = 0;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        int best = 0;
        double best_d = INFINITY;
        for (int c = 0; c < classes; ++c) {
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) dist += (test_x[i][j] - mu[c][j]) * (test_x[i][j] - mu[c][j]);
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        hits += best == test_y[i];
    }
    return static_cast<double>(hits) / static_cast<double>(test_x.size());
}

inline double decode_half(unsigned bits) {
    const unsigned exp = (bits >> 10) & 0x1F, frac = bits & 0x3FF;
    const double mag = exp == 0 ? std::ldexp(static_cast<double>(frac), -24)
                                : std::ldexp(1.0 + frac / 1024.0, static_cast<int>(exp) - 15);
    return (bits & 0x8000) ? -mag : mag;
}

/// Nearest non-negative finite binary16 value by exhaustive search, ties to an even mantissa.
inline double nearest_half(double x) {
    double best = 0.0, best_d = INFINITY;
    unsigned best_bits = 0;
    for (unsigned bits = 0; bits < 0x7C00; ++bits) {
        const double v = decode_half(bits);
        const double d = std::abs(v - x);
        if (d < best_d || (d == best_d && (bits & 1u) == 0 && (best_bits & 1u) == 1)) {
            best = v;
            best_d = d;
            best_bits = bits;
        }
    }
    return best;
}

inline Grid to_grid(const fedema::Matrix& m) {
    Grid g(m.rows(), std::vector<double>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) g[r][c] = m(r, c);
    return g;
}

}  // namespace oracle
