#pragma once

#include "fedema/dataset.hpp"
#include "fedema/rng.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace fedema::nn {

/// One dense layer: a rows x cols weight matrix (out x in) followed by a bias of length `bias`.
struct LayerShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t bias = 0;

    bool operator==(const LayerShape&) const = default;
};

/// Flat parameter storage with per-layer shape metadata. Layer l occupies
/// rows*cols weights (row-major) followed by its bias.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<LayerShape> shapes);
    ParamVector(std::vector<LayerShape> shapes, std::vector<double> values);

    static std::size_t count_for(const std::vector<LayerShape>& shapes);

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    const std::vector<LayerShape>& shapes() const { return shapes_; }
    std::size_t size() const { return values_.size(); }
    std::size_t layers() const { return shapes_.size(); }
    std::size_t input_dim() const { return shapes_.empty() ? 0 : shapes_.front().cols; }
    std::size_t output_dim() const { return shapes_.empty() ? 0 : shapes_.back().rows; }

    bool same_shape(const ParamVector& other) const { return shapes_ == other.shapes_; }
    bool all_finite() const;

    using WeightMap = Eigen::Map<Matrix>;
    using ConstWeightMap = Eigen::Map<const Matrix>;
    WeightMap weight(std::size_t layer);
    ConstWeightMap weight(std::size_t layer) const;
    Eigen::Map<Vector> bias(std::size_t layer);
    Eigen::Map<const Vector> bias(std::size_t layer) const;

    Eigen::Map<Vector> flat() { return {values_.data(), static_cast<Eigen::Index>(values_.size())}; }
    Eigen::Map<const Vector> flat() const {
        return {values_.data(), static_cast<Eigen::Index>(values_.size())};
    }

    bool operator==(const ParamVector& other) const {
        return shapes_ == other.shapes_ && values_ == other.values_;
    }

private:
    std::vector<LayerShape> shapes_;
    std::vector<std::size_t> offsets_;
    // Aligned so vectorized products sum in the same order wherever the buffer lands.
    std::vector<double, Eigen::aligned_allocator<double>> values_;
};

/// Shapes of a d -> hidden -> C MLP with ReLU; hidden == 0 gives softmax regression.
std::vector<LayerShape> mlp_shapes(std::size_t input_dim, std::size_t hidden, std::size_t classes);

/// Glorot-uniform weights in (-a, a), a = sqrt(6 / (fan_in + fan_out)); zero biases.
ParamVector init_mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, Rng& rng);

/// A length-C vector on the probability simplex (entries >= 0, sum within 1e-9 of 1).
class ProbVector {
public:
    static constexpr double kSumTolerance = 1e-9;

    /// Validates; throws InputError when the vector is off the simplex.
    static ProbVector from(std::vector<double> probs);

    std::span<const double> probs() const { return probs_; }
    std::size_t classes() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }

    bool operator==(const ProbVector&) const = default;

private:
    explicit ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {}
    std::vector<double> probs_;
};

bool on_simplex(std::span<const double> p, double tolerance = ProbVector::kSumTolerance);

/// Raw logits, one row per sample. Throws ConfigError if the feature width is wrong.
Matrix forward(const ParamVector& model, const Matrix& features);

/// softmax(z / T) with max-subtraction.
ProbVector softmax_temp(std::span<const double> logits, double temperature);

/// Row-wise softmax(z / T); same arithmetic as softmax_temp.
Matrix softmax_rows(const Matrix& logits, double temperature);

inline constexpr double kLogClamp = 1e-12;

/// KL(p || q) = sum_i p_i ln(p_i / q_i), with q clamped below by 1e-12 and 0 ln 0 = 0.
double kl_div(const ProbVector& p, const ProbVector& q);
double kl_div(std::span<const double> p, std::span<const double> q);

/// Mean cross-entropy over the batch. When `grad` is non-null it receives dLoss/dmodel.
double cross_entropy(const ParamVector& model, const Matrix& features, std::span<const int> labels,
                     ParamVector* grad = nullptr);

/// Anchored distillation objective
///   sum_x KL(teacher(x) || softmax(f(x; u) / T)) + (mu / 2) ||u - anchor||^2.
/// `teacher` holds one probability row per feature row.
double kd_objective(const ParamVector& u, const Matrix& features, const Matrix& teacher,
                    double temperature, double mu, const ParamVector& anchor,
                    ParamVector* grad = nullptr);

struct LocalTrainOptions {
    int epochs = 1;
    double lr = 0.05;
    std::size_t batch_size = 32;
    double prox_mu = 0.0;
    const ParamVector* prox_anchor = nullptr;
};

/// Mini-batch SGD on mean cross-entropy plus (prox_mu / 2) ||theta - anchor||^2.
/// epochs == 0 returns the model untouched.
ParamVector local_train(const ParamVector& model, const LabeledDataset& data,
                        const LocalTrainOptions& options, Rng& rng);

struct ServerKdOptions {
    double temperature = 5.0;
    double mu_anchor = 1e-4;
    int steps = 50;
    double lr = 0.05;
};

/// Starts from w_t and runs `steps` full-batch gradient steps on kd_objective anchored at w_t.
/// Throws ProtocolError on an empty teacher set.
ParamVector server_kd(const ParamVector& w_t, const Matrix& proxy_features, const Matrix& teacher,
                      const ServerKdOptions& options);

}  // namespace fedema::nn
