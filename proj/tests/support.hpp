#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "posefuse/posefuse.hpp"

namespace posefuse::testing {

inline Pose random_pose(Rng& rng, double spread = 0.1) {
  return {random_rotation(rng), Vec3(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-spread, spread))};
}

inline std::vector<Vec3> random_points(Rng& rng, std::size_t m, double scale = 0.1) {
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < m; ++i) pts.emplace_back(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale));
  return pts;
}

/// O(m^2) closest-point distance with 4x4 homogeneous transforms.
inline double brute_add_s(const Pose& h1, const Pose& h2, const std::vector<Vec3>& pts) {
  const Eigen::Matrix4d a = h1.matrix();
  const Eigen::Matrix4d b = h2.matrix();
  double sum = 0.0;
  for (const Vec3& x1 : pts) {
    const Eigen::Vector4d p1 = a * x1.homogeneous();
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& x2 : pts) best = std::min(best, (p1 - b * x2.homogeneous()).norm());
    sum += best;
  }
  return sum / static_cast<double>(pts.size());
}

/// Index of the closest point by exhaustive scan; ties go to the lower index.
inline std::size_t brute_closest(const std::vector<Vec3>& pts, const Vec3& q) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = (pts[i] - q).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Closest bin by exhaustive geodesic comparison using rotation matrices.
inline std::size_t brute_nearest_bin(const RotationBins& bins, const Rotation& r) {
  const Mat3 rm = r.matrix();
  std::size_t best = 0;
  double best_angle = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double c = std::clamp(((bins[i].matrix().transpose() * rm).trace() - 1.0) / 2.0, -1.0, 1.0);
    const double angle = std::acos(c);
    if (angle < best_angle) {
      best_angle = angle;
      best = i;
    }
  }
  return best;
}

}  // namespace posefuse::testing
