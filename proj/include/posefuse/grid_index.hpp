#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "posefuse/geometry.hpp"
#include "posefuse/kdtree.hpp"

namespace posefuse {

/**
 * @brief Exact closest-point lookup on a uniform grid around a point set.
 *
 * Each indexed cell keeps every point that can be the nearest neighbor of
 * some location inside the cell. With d0 the distance from the cell center
 * to its nearest point and h the half diagonal, only points within d0 + 2h
 * of the center can qualify; of those, a point is dropped when one of the
 * center's nearest points is strictly closer everywhere in the cell (a
 * half-space test against the cell box). Candidates are sorted by distance
 * to the center so a scan can stop once the triangle inequality rules the
 * rest out. Answers, including the lower-index tie rule, match an
 * exhaustive scan.
 *
 * Only cells within `band` of the points with at most `max_candidates`
 * candidates are indexed; queries anywhere else report a miss and the caller
 * falls back to another index.
 */
class GridIndex {
 public:
  static constexpr std::size_t kPruners = 8;
  static constexpr std::size_t kMaxSuperset = 4096;

  GridIndex() = default;

  /// Covers the cube [-extent, extent]^3 with `cells` cells per axis.
  GridIndex(std::span<const Vec3> points, const KdTree<3>& tree, double extent, std::size_t cells, double band,
            std::size_t max_candidates = 64)
      : cells_(std::max<std::size_t>(1, cells)), lo_(-extent), size_(2.0 * extent / static_cast<double>(cells_)) {
    inv_size_ = 1.0 / size_;
    half_diag_ = 0.5 * std::sqrt(3.0) * size_;
    coords_.reserve(points.size() * 3);
    for (const Vec3& p : points) {
      coords_.push_back(p.x());
      coords_.push_back(p.y());
      coords_.push_back(p.z());
    }
    box_lo_ = box_hi_ = points.empty() ? Vec3::Zero() : points[0];
    for (const Vec3& p : points) {
      box_lo_ = box_lo_.cwiseMin(p);
      box_hi_ = box_hi_.cwiseMax(p);
    }

    const std::size_t total = cells_ * cells_ * cells_;
    offsets_.assign(total + 1, 0);
    indexed_.assign(total, 0);
    center_dist_.assign(total, 0.0);
    center_nn_.assign(total, 0);
    std::vector<std::pair<double, std::uint32_t>> sorted;
    const double half_side = 0.5 * size_;
    for (std::size_t cell = 0; cell < total; ++cell) {
      const Vec3 center = cell_center(cell);
      const auto nn = tree.nearest(center);
      const double d0 = std::sqrt(nn.sq_dist);
      center_dist_[cell] = d0;
      center_nn_[cell] = static_cast<std::uint32_t>(nn.index);
      if (d0 <= band) {
        const double r = (d0 + 2.0 * half_diag_) * (1.0 + 1e-9) + 1e-12;
        const auto superset = tree.within(center, r * r);
        if (superset.size() <= kMaxSuperset) {
          const auto pruners = tree.knn(center, kPruners);
          sorted.clear();
          for (std::size_t id : superset) {
            const Vec3& p = points[id];
            bool dominated = false;
            for (const auto& pr : pruners) {
              if (pr.index == id) continue;
              // |q-p|^2 - |q-p'|^2 is linear in q; if its minimum over the cell is positive, p' always wins.
              const Vec3& pp = points[pr.index];
              const Vec3 diff = p - pp;
              const double at_center = (center - p).squaredNorm() - (center - pp).squaredNorm();
              const double slack = 2.0 * half_side * diff.cwiseAbs().sum();
              const double scale = (center - p).squaredNorm() + (center - pp).squaredNorm() + 1e-300;
              if (at_center - slack > 1e-9 * scale) {
                dominated = true;
                break;
              }
            }
            if (!dominated) sorted.emplace_back((p - center).norm(), static_cast<std::uint32_t>(id));
          }
          if (sorted.size() <= max_candidates) {
            indexed_[cell] = 1;
            std::sort(sorted.begin(), sorted.end());
            for (const auto& [dist, id] : sorted) {
              ids_.push_back(id);
              cand_dist_.push_back(dist);
            }
          }
        }
      }
      offsets_[cell + 1] = static_cast<std::uint32_t>(ids_.size());
    }
  }

  bool empty() const { return offsets_.empty(); }

  /// Nearest point to q as (squared distance, index), or false when q is not in an indexed cell.
  bool nearest(const Vec3& q, double& sq_dist, std::size_t& index) const {
    std::size_t cell = 0;
    Vec3 center;
    if (!locate(q, cell, center) || !indexed_[cell]) return false;
    const double reach = (q - center).norm();
    double best = std::numeric_limits<double>::infinity();
    double best_dist = std::numeric_limits<double>::infinity();
    std::uint32_t best_id = 0;
    for (std::uint32_t i = offsets_[cell]; i < offsets_[cell + 1]; ++i) {
      // |q - p| >= |c - p| - |q - c|; the margin keeps exact ties in play
      if (cand_dist_[i] - reach > best_dist * (1.0 + 1e-12) + 1e-15) break;
      const std::uint32_t id = ids_[i];
      const double* p = &coords_[3 * static_cast<std::size_t>(id)];
      const double dx = p[0] - q[0];
      const double dy = p[1] - q[1];
      const double dz = p[2] - q[2];
      const double s = dx * dx + dy * dy + dz * dz;
      if (s < best || (s == best && id < best_id)) {
        best = s;
        best_id = id;
        best_dist = std::sqrt(s);
      }
    }
    sq_dist = best;
    index = best_id;
    return true;
  }

  /**
   * @brief A point near q for seeding another search: the nearest point to
   * the center of q's cell, with its exact squared distance to q.
   */
  bool seed(const Vec3& q, double& sq_dist, std::size_t& index) const {
    std::size_t cell = 0;
    if (!locate(q, cell)) return false;
    index = center_nn_[cell];
    const double* p = &coords_[3 * index];
    const double dx = p[0] - q[0];
    const double dy = p[1] - q[1];
    const double dz = p[2] - q[2];
    sq_dist = dx * dx + dy * dy + dz * dz;
    return true;
  }

  /**
   * @brief A cheap lower bound on the distance from q to the nearest point.
   *
   * Inside the grid this is the cell center's nearest distance minus the half
   * diagonal (distance is 1-Lipschitz); outside it is the distance to the
   * bounding box of the points. Slightly deflated to absorb rounding.
   */
  double lower_bound(const Vec3& q) const {
    if (offsets_.empty()) return 0.0;
    std::size_t cell = 0;
    const double bound = locate(q, cell) ? center_dist_[cell] - half_diag_ : (q - q.cwiseMax(box_lo_).cwiseMin(box_hi_)).norm();
    return std::max(0.0, bound * (1.0 - 1e-9) - 1e-12);
  }

 private:
  bool locate(const Vec3& q, std::size_t& cell) const {
    Vec3 center;
    return locate(q, cell, center);
  }

  bool locate(const Vec3& q, std::size_t& cell, Vec3& center) const {
    if (offsets_.empty()) return false;
    std::size_t c[3];
    for (int d = 0; d < 3; ++d) {
      const double f = (q[d] - lo_) * inv_size_;
      if (!(f >= 0.0) || f >= static_cast<double>(cells_)) return false;
      c[d] = static_cast<std::size_t>(f);
      center[d] = lo_ + (static_cast<double>(c[d]) + 0.5) * size_;
    }
    cell = (c[2] * cells_ + c[1]) * cells_ + c[0];
    return true;
  }

  Vec3 cell_center(std::size_t cell) const {
    const std::size_t cx = cell % cells_;
    const std::size_t cy = (cell / cells_) % cells_;
    const std::size_t cz = cell / (cells_ * cells_);
    return {lo_ + (static_cast<double>(cx) + 0.5) * size_, lo_ + (static_cast<double>(cy) + 0.5) * size_,
            lo_ + (static_cast<double>(cz) + 0.5) * size_};
  }

  std::size_t cells_ = 0;
  double lo_ = 0.0;
  double size_ = 1.0;
  double inv_size_ = 1.0;
  double half_diag_ = 0.0;
  std::vector<double> coords_;        // xyz per point, by original index
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint8_t> indexed_;
  std::vector<double> center_dist_;   // nearest-point distance from each cell center
  std::vector<std::uint32_t> center_nn_;
  std::vector<std::uint32_t> ids_;    // per cell, sorted by distance to the cell center
  std::vector<double> cand_dist_;
  Vec3 box_lo_ = Vec3::Zero();
  Vec3 box_hi_ = Vec3::Zero();
};

}  // namespace posefuse
