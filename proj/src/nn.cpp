#include "fedema/nn.hpp"

#include "fedema/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fedema {

LabeledDataset select_rows(const LabeledDataset& src, const std::vector<std::size_t>& rows) {
    LabeledDataset out;
    out.classes = src.classes;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), src.features.cols());
    out.labels.reserve(rows.size());
    out.origin.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        out.features.row(static_cast<Eigen::Index>(i)) = src.features.row(r);
        out.labels.push_back(src.labels[rows[i]]);
        out.origin.push_back(src.origin.empty() ? rows[i] : src.origin[rows[i]]);
    }
    return out;
}

}  // namespace fedema

namespace fedema::nn {

namespace {

using Index = Eigen::Index;

// Activations per layer; acts[0] is the input, acts.back() the logits.
struct Trace {
    std::vector<Matrix> acts;
};

Trace run_forward(const ParamVector& model, const Matrix& features) {
    if (static_cast<std::size_t>(features.cols()) != model.input_dim()) {
        throw ConfigError("feature width " + std::to_string(features.cols()) +
                          " does not match model input " + std::to_string(model.input_dim()));
    }
    Trace trace;
    trace.acts.reserve(model.layers() + 1);
    trace.acts.push_back(features);
    for (std::size_t l = 0; l < model.layers(); ++l) {
        Matrix z = trace.acts.back() * model.weight(l).transpose();
        z.rowwise() += model.bias(l).transpose();
        if (l + 1 < model.layers()) z = z.cwiseMax(0.0);
        trace.acts.push_back(std::move(z));
    }
    return trace;
}

// Accumulates dLoss/dparams into `grad` given dLoss/dlogits.
void run_backward(const ParamVector& model, const Trace& trace, Matrix delta, ParamVector& grad) {
    for (std::size_t l = model.layers(); l-- > 0;) {
        const Matrix& input = trace.acts[l];
        grad.weight(l).noalias() += delta.transpose() * input;
        grad.bias(l) += delta.colwise().sum().transpose();
        if (l == 0) break;
        Matrix upstream = delta * model.weight(l);
        // ReLU mask from the stored post-activation.
        upstream = (input.array() > 0.0).select(upstream, 0.0);
        delta = std::move(upstream);
    }
}

void check_temperature(double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ParameterError("temperature must be positive, got " + std::to_string(temperature));
    }
}

}  // namespace

ParamVector::ParamVector(std::vector<LayerShape> shapes)
    : ParamVector(shapes, std::vector<double>(count_for(shapes), 0.0)) {}

ParamVector::ParamVector(std::vector<LayerShape> shapes, std::vector<double> values)
    : shapes_(std::move(shapes)), values_(values.begin(), values.end()) {
    if (values_.size() != count_for(shapes_)) {
        throw ConfigError("parameter count " + std::to_string(values_.size()) +
                          " does not match layer shapes (" + std::to_string(count_for(shapes_)) +
                          ")");
    }
    std::size_t offset = 0;
    for (const auto& s : shapes_) {
        offsets_.push_back(offset);
        offset += s.rows * s.cols + s.bias;
    }
}

std::size_t ParamVector::count_for(const std::vector<LayerShape>& shapes) {
    std::size_t n = 0;
    for (const auto& s : shapes) n += s.rows * s.cols + s.bias;
    return n;
}

bool ParamVector::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ParamVector::WeightMap ParamVector::weight(std::size_t layer) {
    const auto& s = shapes_.at(layer);
    return {values_.data() + offsets_[layer], static_cast<Index>(s.rows), static_cast<Index>(s.cols)};
}

ParamVector::ConstWeightMap ParamVector::weight(std::size_t layer) const {
    const auto& s = shapes_.at(layer);
    return {values_.data() + offsets_[layer], static_cast<Index>(s.rows), static_cast<Index>(s.cols)};
}

Eigen::Map<Vector> ParamVector::bias(std::size_t layer) {
    const auto& s = shapes_.at(layer);
    return {values_.data() + offsets_[layer] + s.rows * s.cols, static_cast<Index>(s.bias)};
}

Eigen::Map<const Vector> ParamVector::bias(std::size_t layer) const {
    const auto& s = shapes_.at(layer);
    return {values_.data() + offsets_[layer] + s.rows * s.cols, static_cast<Index>(s.bias)};
}

std::vector<LayerShape> mlp_shapes(std::size_t input_dim, std::size_t hidden, std::size_t classes) {
    if (input_dim == 0 || classes < 2) throw ConfigError("MLP needs input_dim >= 1 and classes >= 2");
    if (hidden == 0) return {{classes, input_dim, classes}};
    return {{hidden, input_dim, hidden}, {classes, hidden, classes}};
}

ParamVector init_mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes, Rng& rng) {
    ParamVector model(mlp_shapes(input_dim, hidden, classes));
    for (std::size_t l = 0; l < model.layers(); ++l) {
        const auto& s = model.shapes()[l];
        const double a = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
        std::uniform_real_distribution<double> dist(-a, a);
        auto w = model.weight(l);
        for (Index i = 0; i < w.rows(); ++i)
            for (Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    }
    return model;
}

bool on_simplex(std::span<const double> p, double tolerance) {
    if (p.empty()) return false;
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tolerance;
}

ProbVector ProbVector::from(std::vector<double> probs) {
    if (!on_simplex(probs)) throw InputError("vector is not a valid probability distribution");
    return ProbVector(std::move(probs));
}

Matrix forward(const ParamVector& model, const Matrix& features) {
    return std::move(run_forward(model, features).acts.back());
}

Matrix softmax_rows(const Matrix& logits, double temperature) {
    check_temperature(temperature);
    if (!logits.allFinite()) throw InputError("non-finite logit");
    Matrix out(logits.rows(), logits.cols());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Index c = 0; c < logits.cols(); ++c) {
            const double e = std::exp((logits(i, c) - m) / temperature);
            out(i, c) = e;
            sum += e;
        }
        out.row(i) /= sum;
    }
    return out;
}

ProbVector softmax_temp(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw InputError("softmax of an empty vector");
    Matrix row(1, static_cast<Index>(logits.size()));
    for (std::size_t c = 0; c < logits.size(); ++c) row(0, static_cast<Index>(c)) = logits[c];
    const Matrix p = softmax_rows(row, temperature);
    return ProbVector::from(std::vector<double>(p.data(), p.data() + p.size()));
}

double kl_div(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InputError("kl_div: length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        kl += p[i] * std::log(p[i] / std::max(q[i], kLogClamp));
    }
    return kl;
}

double kl_div(const ProbVector& p, const ProbVector& q) { return kl_div(p.probs(), q.probs()); }

double cross_entropy(const ParamVector& model, const Matrix& features, std::span<const int> labels,
                     ParamVector* grad) {
    const auto n = static_cast<Index>(labels.size());
    if (n == 0 || features.rows() != n) throw InputError("cross_entropy: empty or mismatched batch");
    const Trace trace = run_forward(model, features);
    const Matrix& logits = trace.acts.back();
    Matrix probs = softmax_rows(logits, 1.0);
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols()) throw InputError("label out of range");
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        loss += lse - logits(i, y);
    }
    loss /= static_cast<double>(n);
    if (grad != nullptr) {
        *grad = ParamVector(model.shapes());
        for (Index i = 0; i < n; ++i) probs(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
        probs /= static_cast<double>(n);
        run_backward(model, trace, std::move(probs), *grad);
    }
    return loss;
}

double kd_objective(const ParamVector& u, const Matrix& features, const Matrix& teacher,
                    double temperature, double mu, const ParamVector& anchor, ParamVector* grad) {
    check_temperature(temperature);
    if (features.rows() != teacher.rows() || teacher.cols() != static_cast<Index>(u.output_dim())) {
        throw InputError("kd_objective: teacher shape does not match features/model");
    }
    if (!u.same_shape(anchor)) throw ConfigError("kd_objective: anchor shape mismatch");
    const Trace trace = run_forward(u, features);
    Matrix student = softmax_rows(trace.acts.back(), temperature);
    double loss = 0.0;
    for (Index i = 0; i < teacher.rows(); ++i) {
        const std::span<const double> p(teacher.row(i).data(), static_cast<std::size_t>(teacher.cols()));
        const std::span<const double> q(student.row(i).data(), static_cast<std::size_t>(student.cols()));
        loss += kl_div(p, q);
    }
    const Vector diff = u.flat() - anchor.flat();
    loss += 0.5 * mu * diff.squaredNorm();
    if (grad != nullptr) {
        *grad = ParamVector(u.shapes());
        // d KL(p || softmax(z/T)) / dz = (q - p) / T
        Matrix delta = (student - teacher) / temperature;
        run_backward(u, trace, std::move(delta), *grad);
        grad->flat() += mu * diff;
    }
    return loss;
}

ParamVector local_train(const ParamVector& model, const LabeledDataset& data,
                        const LocalTrainOptions& options, Rng& rng) {
    if (options.epochs < 0) throw ParameterError("local_train: epochs must be >= 0");
    if (!(options.lr > 0.0)) throw ParameterError("local_train: lr must be positive");
    if (options.batch_size == 0) throw ParameterError("local_train: batch_size must be positive");
    if (options.prox_mu < 0.0) throw ParameterError("local_train: prox_mu must be >= 0");
    if (options.prox_mu > 0.0 &&
        (options.prox_anchor == nullptr || !options.prox_anchor->same_shape(model))) {
        throw ConfigError("local_train: proximal term needs a shape-compatible anchor");
    }
    ParamVector theta = model;
    if (options.epochs == 0 || data.empty()) return theta;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const Index d = data.features.cols();
    ParamVector grad;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            Matrix x(static_cast<Index>(end - start), d);
            std::vector<int> y(end - start);
            for (std::size_t i = start; i < end; ++i) {
                x.row(static_cast<Index>(i - start)) = data.features.row(static_cast<Index>(order[i]));
                y[i - start] = data.labels[order[i]];
            }
            cross_entropy(theta, x, y, &grad);
            if (options.prox_mu > 0.0) {
                grad.flat() += options.prox_mu * (theta.flat() - options.prox_anchor->flat());
            }
            theta.flat() -= options.lr * grad.flat();
        }
    }
    if (!theta.all_finite()) throw InputError("local_train diverged (non-finite parameters)");
    return theta;
}

ParamVector server_kd(const ParamVector& w_t, const Matrix& proxy_features, const Matrix& teacher,
                      const ServerKdOptions& options) {
    if (teacher.rows() == 0) throw ProtocolError("server_kd: empty teacher set");
    if (options.steps < 0) throw ParameterError("server_kd: steps must be >= 0");
    if (options.lr < 0.0) throw ParameterError("server_kd: lr must be >= 0");
    if (options.mu_anchor < 0.0) throw ParameterError("server_kd: mu_anchor must be >= 0");
    ParamVector u = w_t;
    if (options.lr == 0.0) return u;
    ParamVector grad;
    for (int step = 0; step < options.steps; ++step) {
        kd_objective(u, proxy_features, teacher, options.temperature, options.mu_anchor, w_t, &grad);
        u.flat() -= options.lr * grad.flat();
    }
    if (!u.all_finite()) throw InputError("server_kd diverged (non-finite parameters)");
    return u;
}

}  // namespace fedema::nn
