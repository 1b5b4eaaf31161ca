#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "dimdm/core/error.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/nn/layers.hpp"

namespace dimdm {

/// Inputs X as an n x D matrix (one sample per row; images are stored
/// row-major, channels last) with optional integer class labels.
struct Dataset {
    Matrix inputs;
    std::optional<std::vector<int>> labels;
    std::string name;
    nn::ImageShape shape{1, 1, 1};

    Eigen::Index n() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }
    bool is_image() const { return shape.height > 1 && shape.width > 1; }

    int num_classes() const {
        if (!labels || labels->empty()) return 0;
        return *std::max_element(labels->begin(), labels->end()) + 1;
    }

    /// Throws DomainError when an invariant does not hold.
    void validate() const {
        detail::require(inputs.rows() >= 1, "dataset '" + name + "' is empty");
        detail::require(inputs.allFinite(), "dataset '" + name + "' has non-finite inputs");
        detail::require(shape.size() == inputs.cols(), "dataset '" + name + "' shape does not match its input width");
        if (labels) {
            detail::require(static_cast<Eigen::Index>(labels->size()) == inputs.rows(),
                            "dataset '" + name + "' has a label count different from its sample count");
            detail::require(std::all_of(labels->begin(), labels->end(), [](int v) { return v >= 0; }),
                            "dataset '" + name + "' has negative labels");
        }
    }

    /// Rows `idx` as a new dataset.
    Dataset subset(const std::vector<Eigen::Index>& idx) const {
        Dataset out{Matrix(static_cast<Eigen::Index>(idx.size()), dim()), std::nullopt, name, shape};
        for (std::size_t i = 0; i < idx.size(); ++i) out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(idx[i]);
        if (labels) {
            out.labels.emplace();
            for (auto i : idx) out.labels->push_back((*labels)[static_cast<std::size_t>(i)]);
        }
        return out;
    }
};

} // namespace dimdm
