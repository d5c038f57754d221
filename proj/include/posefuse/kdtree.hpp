#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace posefuse {

/**
 * @brief Exact k-d tree over a fixed point set in Dim dimensions.
 *
 * Queries return the same answer as an exhaustive scan ordered by
 * (squared distance, original index). Buckets are stored contiguously so
 * leaf scans stay cache friendly.
 */
template <int Dim>
class KdTree {
 public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  struct Neighbor {
    double sq_dist = std::numeric_limits<double>::infinity();
    std::size_t index = std::numeric_limits<std::size_t>::max();

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
      return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
    }
  };

  KdTree() = default;

  explicit KdTree(std::span<const Point> points, std::size_t leaf_size = 12) : leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    const std::size_t n = points.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (n > 0) build(points, order, 0, n);
    coords_.resize(n * Dim);
    ids_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ids_[i] = order[i];
      for (int d = 0; d < Dim; ++d) coords_[i * Dim + d] = points[order[i]][d];
    }
  }

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  /// Nearest point; returns a neighbor with infinite distance on an empty tree.
  Neighbor nearest(const Point& q) const {
    Neighbor best;
    if (!nodes_.empty()) search_nearest(0, q, best);
    return best;
  }

  /// Nearest point, starting from a known candidate (its exact distance to q) to prune early.
  Neighbor nearest(const Point& q, Neighbor seed) const {
    if (!nodes_.empty()) search_nearest(0, q, seed);
    return seed;
  }

  /// Indices of all points with squared distance <= sq_radius, in ascending index order.
  std::vector<std::size_t> within(const Point& q, double sq_radius) const {
    std::vector<std::size_t> out;
    if (!nodes_.empty()) search_within(0, q, sq_radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// k nearest points sorted by (squared distance, index).
  std::vector<Neighbor> knn(const Point& q, std::size_t k) const {
    k = std::min(k, size());
    std::vector<Neighbor> heap;
    if (k == 0) return heap;
    heap.reserve(k + 1);
    search_knn(0, q, k, heap);
    std::sort(heap.begin(), heap.end());
    return heap;
  }

 private:
  struct Node {
    int dim = -1;  // -1 marks a leaf
    double split = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };

  std::uint32_t build(std::span<const Point> points, std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    if (end - begin <= leaf_size_) {
      nodes_[id].begin = static_cast<std::uint32_t>(begin);
      nodes_[id].end = static_cast<std::uint32_t>(end);
      return id;
    }
    Point lo = points[order[begin]];
    Point hi = lo;
    for (std::size_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points[order[i]]);
      hi = hi.cwiseMax(points[order[i]]);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](std::size_t a, std::size_t b) { return points[a][dim] < points[b][dim]; });
    const double split = points[order[mid]][dim];
    const std::uint32_t left = build(points, order, begin, mid);
    const std::uint32_t right = build(points, order, mid, end);
    nodes_[id].dim = dim;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  double sq_dist_to(std::size_t slot, const Point& q) const {
    const double* c = &coords_[slot * Dim];
    double s = 0.0;
    for (int d = 0; d < Dim; ++d) {
      const double diff = c[d] - q[d];
      s += diff * diff;
    }
    return s;
  }

  void search_nearest(std::uint32_t id, const Point& q, Neighbor& best) const {
    const Node& node = nodes_[id];
    if (node.dim < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{sq_dist_to(i, q), ids_[i]};
        if (cand < best) best = cand;
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    search_nearest(near, q, best);
    if (diff * diff <= best.sq_dist) search_nearest(far, q, best);
  }

  void search_within(std::uint32_t id, const Point& q, double sq_radius, std::vector<std::size_t>& out) const {
    const Node& node = nodes_[id];
    if (node.dim < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        if (sq_dist_to(i, q) <= sq_radius) out.push_back(ids_[i]);
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    search_within(diff < 0.0 ? node.left : node.right, q, sq_radius, out);
    if (diff * diff <= sq_radius) search_within(diff < 0.0 ? node.right : node.left, q, sq_radius, out);
  }

  void search_knn(std::uint32_t id, const Point& q, std::size_t k, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[id];
    if (node.dim < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Neighbor cand{sq_dist_to(i, q), ids_[i]};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    search_knn(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().sq_dist) search_knn(far, q, k, heap);
  }

  std::size_t leaf_size_ = 12;
  std::vector<Node> nodes_;
  std::vector<double> coords_;
  std::vector<std::size_t> ids_;
};

}  // namespace posefuse
