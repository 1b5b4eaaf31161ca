#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "dimdm/core/error.hpp"
#include "dimdm/core/types.hpp"
#include "dimdm/oracle/kdtree.hpp"

namespace dimdm::oracle {

namespace detail {

inline std::vector<double> row_major(const Matrix& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    return out;
}

/// Strict max-norm ball counts around every point of `m` (self excluded).
class MarginalCounter {
public:
    explicit MarginalCounter(const Matrix& m) : m_(m) {
        if (m.cols() == 1) {
            sorted_.assign(m.data(), m.data() + m.rows());
            std::sort(sorted_.begin(), sorted_.end());
        } else {
            tree_.emplace(row_major(m), static_cast<std::size_t>(m.cols()));
        }
    }

    std::size_t count(Eigen::Index i, double r) const {
        if (!(r > 0.0)) return 0;
        if (tree_) {
            std::vector<double> q(static_cast<std::size_t>(m_.cols()));
            for (Eigen::Index j = 0; j < m_.cols(); ++j) q[static_cast<std::size_t>(j)] = m_(i, j);
            return tree_->count_within(q, r) - 1;
        }
        // binary search for the window, then settle the edges with the exact
        // predicate so rounding in v +- r cannot move a boundary point
        const double v = m_(i, 0);
        auto inside = [&](double w) { return std::abs(w - v) < r; };
        auto lo = std::upper_bound(sorted_.begin(), sorted_.end(), v - r);
        while (lo != sorted_.begin() && inside(*(lo - 1))) --lo;
        while (lo != sorted_.end() && *lo < v && !inside(*lo)) ++lo;
        auto hi = std::lower_bound(lo, sorted_.end(), v + r);
        while (hi != sorted_.end() && inside(*hi)) ++hi;
        while (hi != lo && *(hi - 1) > v && !inside(*(hi - 1))) --hi;
        return static_cast<std::size_t>(hi - lo) - 1;
    }

private:
    const Matrix& m_;
    std::vector<double> sorted_;
    std::optional<MaxNormKdTree> tree_;
};

} // namespace detail

/// Kraskov-Stoegbauer-Grassberger MI estimator (variant 1, max-norm
/// neighbourhoods) in nats, clipped at zero.
///   I = psi(k) + psi(n) - < psi(n_x + 1) + psi(n_y + 1) >
inline double ksg_mi(const Matrix& x, const Matrix& y, int k = 5) {
    dimdm::detail::require(k >= 1, "ksg_mi needs k >= 1");
    dimdm::detail::require(x.rows() == y.rows(), "ksg_mi: x and y must have the same number of rows");
    dimdm::detail::require(x.cols() >= 1 && y.cols() >= 1, "ksg_mi: empty dimension");
    dimdm::detail::require(x.rows() > k, "ksg_mi needs n > k");
    dimdm::detail::require(x.allFinite() && y.allFinite(), "ksg_mi: non-finite input");

    const Eigen::Index n = x.rows();
    Matrix joint(n, x.cols() + y.cols());
    joint << x, y;
    const MaxNormKdTree tree(detail::row_major(joint), static_cast<std::size_t>(joint.cols()));
    const detail::MarginalCounter cx(x), cy(y);

    using boost::math::digamma;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double eps = tree.kth_neighbor_distance(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
        const auto nx = static_cast<double>(cx.count(i, eps));
        const auto ny = static_cast<double>(cy.count(i, eps));
        acc += digamma(nx + 1.0) + digamma(ny + 1.0);
    }
    const double mi = digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n);
    return std::max(0.0, mi);
}

} // namespace dimdm::oracle
