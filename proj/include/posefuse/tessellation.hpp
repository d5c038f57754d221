#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/kdtree.hpp"
#include "posefuse/object_model.hpp"
#include "posefuse/parallel.hpp"

namespace posefuse {

inline constexpr const char* kHopfSamplerName = "hopf-fibonacci";

/**
 * @brief Ordered set of rotation bin centers with exact nearest-bin search.
 *
 * Geodesic order equals ordering by 2 - 2|<q, p>|, the squared chord distance
 * to the nearer of p and -p, so large sets are searched with a 4-D k-d tree
 * over both signs of every center and re-ranked by geodesic distance.
 */
class RotationBins {
 public:
  static constexpr std::size_t kLinearScanLimit = 512;

  RotationBins() = default;

  explicit RotationBins(std::vector<Rotation> centers, std::string sampler = "explicit")
      : centers_(std::move(centers)), sampler_(std::move(sampler)) {
    if (centers_.empty()) throw Error(ErrorKind::InvalidArgument, "rotation bin set is empty");
    if (centers_.size() >= kLinearScanLimit) {
      std::vector<Eigen::Vector4d> signed_points;
      signed_points.reserve(2 * centers_.size());
      for (const Rotation& r : centers_) signed_points.push_back(r.quaternion().coeffs());
      for (const Rotation& r : centers_) signed_points.push_back(-r.quaternion().coeffs());
      index_ = KdTree<4>(std::span<const Eigen::Vector4d>(signed_points), 8);
    }
  }

  std::size_t size() const { return centers_.size(); }
  const std::vector<Rotation>& centers() const { return centers_; }
  const Rotation& operator[](std::size_t i) const { return centers_[i]; }
  const std::string& sampler() const { return sampler_; }

  /// The k nearest centers, ordered by (geodesic distance, index).
  std::vector<std::size_t> nearest(const Rotation& r, std::size_t k) const {
    if (k < 1 || k > size()) throw Error(ErrorKind::InvalidArgument, "neighbor count must be in [1, n]");
    std::vector<std::pair<double, std::size_t>> ranked;
    if (index_.empty() || k * 4 > size()) {
      ranked.reserve(size());
      for (std::size_t i = 0; i < size(); ++i) ranked.emplace_back(geodesic_distance(r, centers_[i]), i);
    } else {
      const auto hits = index_.knn(r.quaternion().coeffs(), std::min(2 * size(), 2 * k + 8));
      std::vector<std::size_t> seen;
      for (const auto& hit : hits) {
        const std::size_t bin = hit.index % size();
        if (std::find(seen.begin(), seen.end(), bin) != seen.end()) continue;
        seen.push_back(bin);
        ranked.emplace_back(geodesic_distance(r, centers_[bin]), bin);
      }
    }
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = ranked[i].second;
    return out;
  }

  std::size_t nearest(const Rotation& r) const { return nearest(r, 1).front(); }

  /// Digest of the center coefficients; binds tables to their bin set.
  std::string digest() const {
    std::vector<Vec3> packed;
    packed.reserve(2 * centers_.size());
    for (const Rotation& r : centers_) {
      packed.emplace_back(r.w(), r.x(), r.y());
      packed.emplace_back(r.z(), 0.0, 0.0);
    }
    return point_set_hash(packed);
  }

 private:
  std::vector<Rotation> centers_;
  std::string sampler_;
  KdTree<4> index_;
};

/**
 * @brief Deterministic, near-uniform rotations from the Hopf fibration.
 *
 * A spherical Fibonacci set gives the direction of the rotated Z axis and
 * an evenly spaced fiber angle gives the spin about it. The fiber count
 * balances the two resolutions (fibers^3 ~ pi * n); centers are emitted
 * sphere-point major and the first n are kept.
 */
inline RotationBins sample_so3_uniform(std::size_t n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "rotation bin count must be >= 1");
  const double pi = std::numbers::pi;
  const auto fibers = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::cbrt(pi * static_cast<double>(n)))));
  const std::size_t sphere_points = (n + fibers - 1) / fibers;
  const double golden_angle = pi * (3.0 - std::sqrt(5.0));

  std::vector<Rotation> centers;
  centers.reserve(n);
  for (std::size_t s = 0; s < sphere_points && centers.size() < n; ++s) {
    const double z = 1.0 - (2.0 * static_cast<double>(s) + 1.0) / static_cast<double>(sphere_points);
    const double theta = std::acos(std::clamp(z, -1.0, 1.0));
    const double phi = std::fmod(static_cast<double>(s) * golden_angle, 2.0 * pi);
    const Quat tilt = Quat(Eigen::AngleAxisd(phi, Vec3::UnitZ())) * Quat(Eigen::AngleAxisd(theta, Vec3::UnitY()));
    for (std::size_t f = 0; f < fibers && centers.size() < n; ++f) {
      const double psi = 2.0 * pi * (static_cast<double>(f) + 0.5) / static_cast<double>(fibers);
      // the -phi offset keeps the map continuous at the north pole
      centers.emplace_back(tilt * Quat(Eigen::AngleAxisd(psi - phi, Vec3::UnitZ())));
    }
  }
  return RotationBins(std::move(centers), kHopfSamplerName);
}

inline std::vector<std::size_t> nn_rotations(const Rotation& r, const RotationBins& bins, std::size_t k) {
  return bins.nearest(r, k);
}

/// m equal, non-overlapping bins over [s_min, s_max].
struct AxisGrid {
  std::size_t m = 1;
  double s_min = 0.0;
  double s_max = 1.0;

  double width() const { return (s_max - s_min) / static_cast<double>(m); }
  double center(std::size_t i) const { return s_min + (static_cast<double>(i) + 0.5) * width(); }

  std::vector<double> centers() const {
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = center(i);
    return out;
  }

  bool operator==(const AxisGrid&) const = default;
};

inline AxisGrid make_axis_grid(std::size_t m, double s_min, double s_max) {
  if (m < 1) throw Error(ErrorKind::InvalidRange, "axis grid needs at least one bin");
  if (!std::isfinite(s_min) || !std::isfinite(s_max) || !(s_max > s_min)) {
    throw Error(ErrorKind::InvalidRange, "axis grid requires finite s_max > s_min");
  }
  return {m, s_min, s_max};
}

/**
 * @brief The k grid bins nearest to x, nearest first.
 *
 * Values outside [s_min, s_max] fall to the first or last bin. Distances that
 * agree to within a few ulps of the grid scale count as ties and resolve to
 * the lower index, so a value on a bin boundary picks the lower bin.
 */
inline std::vector<std::size_t> nn_axis(double x, const AxisGrid& grid, std::size_t k) {
  if (k < 1 || k > grid.m) throw Error(ErrorKind::InvalidArgument, "neighbor count must be in [1, m]");
  const double scale = std::max({std::abs(grid.s_min), std::abs(grid.s_max), std::abs(x), grid.width()});
  const double tie_eps = 8.0 * std::numeric_limits<double>::epsilon() * scale;
  auto closer = [&](std::size_t a, std::size_t b) {
    const double da = std::abs(x - grid.center(a));
    const double db = std::abs(x - grid.center(b));
    if (std::abs(da - db) <= tie_eps) return a < b;
    return da < db;
  };

  std::size_t primary = 0;
  for (std::size_t i = 1; i < grid.m; ++i) {
    if (closer(i, primary)) primary = i;
  }
  std::vector<std::size_t> out{primary};
  out.reserve(k);
  std::size_t lo = primary;  // next candidate below is lo - 1
  std::size_t hi = primary + 1;
  while (out.size() < k) {
    const bool has_lo = lo > 0;
    const bool has_hi = hi < grid.m;
    if (has_lo && (!has_hi || closer(lo - 1, hi))) {
      out.push_back(--lo);
    } else {
      out.push_back(hi++);
    }
  }
  return out;
}

/**
 * @brief Symmetric n x n table of model-aware rotation distances between bins.
 *
 * Entry (i, j) is the symmetrized rotation-only closest-point distance
 * between bin centers i and j; the diagonal is zero.
 */
struct RotDistanceTable {
  std::size_t n = 0;
  std::vector<double> entries;
  std::string model_name;
  std::string model_hash;
  std::string bins_digest;

  double at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
};

inline RotDistanceTable precompute_table(const RotationBins& bins, const ObjectModel& model) {
  const std::size_t n = bins.size();
  RotDistanceTable table{n, std::vector<double>(n * n, 0.0), model.name(), model.hash(), bins.digest()};
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double forward = rotation_distance(bins[i], bins[j], model);
      const double backward = rotation_distance(bins[j], bins[i], model);
      table.entries[i * n + j] = 0.5 * (forward + backward);
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) table.entries[i * n + j] = table.entries[j * n + i];
  }
  return table;
}

}  // namespace posefuse
