#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

namespace dimdm::oracle {

/// Static kd-tree over points in R^dim under the max (Chebyshev) norm.
/// Supports k-th neighbour distance queries and strict ball counting, which is
/// all the KSG estimator needs.
class MaxNormKdTree {
public:
    /// `points` is row-major, n rows of `dim` coordinates; the tree keeps a copy.
    MaxNormKdTree(std::span<const double> points, std::size_t dim, std::size_t leaf_size = 16)
        : dim_(dim), leaf_size_(std::max<std::size_t>(leaf_size, 1)), data_(points.begin(), points.end()) {
        n_ = dim_ == 0 ? 0 : data_.size() / dim_;
        order_.resize(n_);
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (n_ > 0) build(0, n_);
    }

    std::size_t size() const noexcept { return n_; }
    std::size_t dim() const noexcept { return dim_; }

    /// Max-norm distance from point `self` to its k-th nearest other point.
    double kth_neighbor_distance(std::size_t self, std::size_t k) const {
        std::priority_queue<double> heap; // k smallest distances seen so far
        const double* q = point(self);
        knn(0, q, self, k, heap);
        return heap.top();
    }

    /// Number of stored points p with max_i |p_i - q_i| < r.
    std::size_t count_within(std::span<const double> q, double r) const { return count(0, q.data(), r); }

private:
    struct Node {
        std::size_t begin, end;
        std::size_t left = 0, right = 0; // 0 means leaf (root is never a child)
    };

    const double* lo(std::size_t id) const { return box_lo_.data() + id * dim_; }
    const double* hi(std::size_t id) const { return box_hi_.data() + id * dim_; }

    const double* point(std::size_t i) const { return data_.data() + i * dim_; }

    double dist(const double* a, const double* b) const {
        double m = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) m = std::max(m, std::abs(a[j] - b[j]));
        return m;
    }

    double box_dist(std::size_t id, const double* q) const {
        const double* l = lo(id);
        const double* h = hi(id);
        double m = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            double v = q[j] < l[j] ? l[j] - q[j] : (q[j] > h[j] ? q[j] - h[j] : 0.0);
            m = std::max(m, v);
        }
        return m;
    }

    double box_far(std::size_t id, const double* q) const {
        const double* l = lo(id);
        const double* h = hi(id);
        double m = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) m = std::max({m, std::abs(q[j] - l[j]), std::abs(q[j] - h[j])});
        return m;
    }

    std::size_t build(std::size_t begin, std::size_t end) {
        const std::size_t id = nodes_.size();
        nodes_.push_back(Node{begin, end});
        box_lo_.resize(box_lo_.size() + dim_, std::numeric_limits<double>::infinity());
        box_hi_.resize(box_hi_.size() + dim_, -std::numeric_limits<double>::infinity());
        for (std::size_t i = begin; i < end; ++i) {
            const double* p = point(order_[i]);
            for (std::size_t j = 0; j < dim_; ++j) {
                box_lo_[id * dim_ + j] = std::min(box_lo_[id * dim_ + j], p[j]);
                box_hi_[id * dim_ + j] = std::max(box_hi_[id * dim_ + j], p[j]);
            }
        }
        if (end - begin <= leaf_size_) return id;

        std::size_t axis = 0;
        double widest = -1.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            double w = box_hi_[id * dim_ + j] - box_lo_[id * dim_ + j];
            if (w > widest) widest = w, axis = j;
        }
        if (widest <= 0.0) return id; // all points coincide

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) { return point(a)[axis] < point(b)[axis]; });
        const std::size_t l = build(begin, mid);
        const std::size_t r = build(mid, end);
        nodes_[id].left = l;
        nodes_[id].right = r;
        return id;
    }

    void knn(std::size_t id, const double* q, std::size_t self, std::size_t k, std::priority_queue<double>& heap) const {
        const Node& nd = nodes_[id];
        if (heap.size() == k && box_dist(id, q) >= heap.top()) return;
        if (nd.left == 0) {
            for (std::size_t i = nd.begin; i < nd.end; ++i) {
                const std::size_t idx = order_[i];
                if (idx == self) continue;
                const double dd = dist(point(idx), q);
                if (heap.size() < k) heap.push(dd);
                else if (dd < heap.top()) {
                    heap.pop();
                    heap.push(dd);
                }
            }
            return;
        }
        const double dl = box_dist(nd.left, q);
        const double dr = box_dist(nd.right, q);
        if (dl <= dr) {
            knn(nd.left, q, self, k, heap);
            knn(nd.right, q, self, k, heap);
        } else {
            knn(nd.right, q, self, k, heap);
            knn(nd.left, q, self, k, heap);
        }
    }

    std::size_t count(std::size_t id, const double* q, double r) const {
        const Node& nd = nodes_[id];
        if (box_dist(id, q) >= r) return 0;
        if (box_far(id, q) < r) return nd.end - nd.begin;
        if (nd.left == 0) {
            std::size_t c = 0;
            for (std::size_t i = nd.begin; i < nd.end; ++i) c += dist(point(order_[i]), q) < r;
            return c;
        }
        return count(nd.left, q, r) + count(nd.right, q, r);
    }

    std::size_t dim_;
    std::size_t leaf_size_;
    std::size_t n_ = 0;
    std::vector<double> data_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    std::vector<double> box_lo_, box_hi_;
};

} // namespace dimdm::oracle
