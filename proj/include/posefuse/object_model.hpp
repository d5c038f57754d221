#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/grid_index.hpp"
#include "posefuse/kdtree.hpp"

namespace posefuse {

/// 64-bit FNV-1a digest of the raw coordinate bytes, as 16 hex digits.
inline std::string point_set_hash(std::span<const Vec3> points) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Vec3& p : points) {
    for (int d = 0; d < 3; ++d) {
      std::uint64_t bits = 0;
      const double v = p[d];
      std::memcpy(&bits, &v, sizeof bits);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/**
 * @brief Object point set with an exact closest-point index.
 *
 * Immutable after construction, so one model can be shared by any number of
 * concurrent distance queries.
 */
class ObjectModel {
 public:
  ObjectModel(std::vector<Vec3> points, std::string name = "model")
      : name_(std::move(name)), points_(std::move(points)) {
    if (points_.empty()) throw Error(ErrorKind::EmptyModel, "object model '" + name_ + "' has no points");
    for (const Vec3& p : points_) {
      if (!p.allFinite()) throw Error(ErrorKind::InvalidArgument, "object model '" + name_ + "' has non-finite points");
    }
    index_ = KdTree<3>(std::span<const Vec3>(points_));
    hash_ = point_set_hash(points_);
    // The grid spans the ball swept by the points under any rotation about the origin.
    double extent = 0.0;
    for (const Vec3& p : points_) extent = std::max(extent, p.norm());
    extent = extent * 1.01 + 1e-9;
    // Small models get a grid over the whole ball; large ones only near the surface to bound memory.
    const auto cells = static_cast<std::size_t>(std::clamp(std::lround(4.0 * std::cbrt(static_cast<double>(points_.size()))), 16L, 64L));
    const double band = points_.size() <= 4096 ? std::numeric_limits<double>::infinity() : 0.4 * extent;
    grid_ = GridIndex(std::span<const Vec3>(points_), index_, extent, cells, band);
  }

  const std::string& name() const { return name_; }
  const std::string& hash() const { return hash_; }
  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

  /// Distance from q to the closest model point.
  double closest_distance(const Vec3& q) const { return std::sqrt(closest(q).sq_dist); }

  std::size_t closest_index(const Vec3& q) const { return closest(q).index; }

  /// Closest model point as (squared distance, index); ties go to the lower index.
  KdTree<3>::Neighbor closest(const Vec3& q) const {
    KdTree<3>::Neighbor nn;
    if (grid_.nearest(q, nn.sq_dist, nn.index)) return nn;
    if (grid_.seed(q, nn.sq_dist, nn.index)) return index_.nearest(q, nn);
    return index_.nearest(q);
  }

  /**
   * @brief Mean over model points x of min_y |a * x - y|.
   *
   * With a finite `stop_at` the result is exact whenever it is below
   * stop_at; otherwise some value >= stop_at is returned as soon as that is
   * certain, using cheap per-point lower bounds before any exact lookups.
   * Callers that only need min(D, stop_at) skip most of the work for distant
   * poses.
   */
  double mean_closest_distance(const Pose& a, double stop_at = std::numeric_limits<double>::infinity()) const {
    const double m = static_cast<double>(points_.size());
    const Mat3 rot = a.r.matrix();
    if (!std::isfinite(stop_at)) {
      double sum = 0.0;
      for (const Vec3& x : points_) sum += closest_distance(rot * x + a.t);
      return sum / m;
    }
    const double stop_sum = stop_at * m;
    thread_local std::vector<double> lower;
    lower.resize(points_.size());
    double remaining = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      lower[i] = grid_.lower_bound(rot * points_[i] + a.t);
      remaining += lower[i];
      if (remaining >= stop_sum) return std::max(remaining / m, stop_at);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      sum += closest_distance(rot * points_[i] + a.t);
      remaining -= lower[i];
      if (sum + remaining >= stop_sum) return std::max((sum + std::max(remaining, 0.0)) / m, stop_at);
    }
    return sum / m;
  }

 private:
  std::string name_;
  std::vector<Vec3> points_;
  KdTree<3> index_;
  GridIndex grid_;
  std::string hash_;
};

/**
 * @brief Closest-point pose discrepancy D(h1, h2).
 *
 * (1/m) sum_{x1} min_{x2} |(R1 x1 + T1) - (R2 x2 + T2)|. Evaluated in the
 * frame of h2, which leaves every distance unchanged. Not symmetric in general.
 * With a finite stop_at the result is exact below stop_at and >= stop_at otherwise.
 */
inline double add_s(const Pose& h1, const Pose& h2, const ObjectModel& model, double stop_at = std::numeric_limits<double>::infinity()) {
  if (h1 == h2) return 0.0;
  return model.mean_closest_distance(h2.inverse() * h1, stop_at);
}

/// 0.5 * (D(h1, h2) + D(h2, h1)).
inline double sym_add_s(const Pose& h1, const Pose& h2, const ObjectModel& model) {
  return 0.5 * (add_s(h1, h2, model) + add_s(h2, h1, model));
}

/// (1/m) sum_{x1} min_{x2} |R1 x1 - R2 x2|, the rotation part of the decoupled bound.
inline double rotation_distance(const Rotation& r1, const Rotation& r2, const ObjectModel& model) {
  return model.mean_closest_distance(Pose{r2.inverse() * r1, Vec3::Zero()});
}

/// Rotation term averaged over both argument orders.
inline double sym_rotation_distance(const Rotation& r1, const Rotation& r2, const ObjectModel& model) {
  if (r1 == r2) return 0.0;
  return 0.5 * (rotation_distance(r1, r2, model) + rotation_distance(r2, r1, model));
}

/// |T1 - T2| + rotation_distance(R1, R2); an upper bound on add_s(h1, h2).
inline double exact_decoupled_distance(const Pose& h1, const Pose& h2, const ObjectModel& model) {
  return (h1.t - h2.t).norm() + rotation_distance(h1.r, h2.r, model);
}

}  // namespace posefuse
