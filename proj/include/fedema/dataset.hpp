#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace fedema {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Features are row-per-sample. `origin` records each row's index in the
/// generated source pool so disjointness can be checked after any split.
struct LabeledDataset {
    Matrix features;
    std::vector<int> labels;
    int classes = 0;
    std::vector<std::size_t> origin;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
    bool empty() const { return labels.empty(); }
};

enum class Role { honest, adversarial };

struct ClientDataset {
    int id = 0;
    LabeledDataset data;
    Role role = Role::honest;
    // Set when a class pool ran dry and samples were drawn with replacement.
    bool resampled = false;
};

/// Rows of `src` selected by `rows`, in that order.
LabeledDataset select_rows(const LabeledDataset& src, const std::vector<std::size_t>& rows);

}  // namespace fedema
