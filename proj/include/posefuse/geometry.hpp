#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

#include "posefuse/error.hpp"

namespace posefuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/**
 * @brief Rotation in SO(3) stored as a canonical unit quaternion.
 *
 * q and -q describe the same rotation. Every constructor normalizes and then
 * fixes the sign so the first nonzero coefficient in (w, x, y, z) order is
 * positive; two equal rotations therefore compare equal coefficient-wise.
 */
class Rotation {
 public:
  Rotation() : q_(Quat::Identity()) {}

  explicit Rotation(const Quat& q) : q_(canonicalize(q)) {}

  Rotation(double w, double x, double y, double z) : Rotation(Quat(w, x, y, z)) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_axis_angle(const Vec3& axis, double angle) {
    return Rotation(Quat(Eigen::AngleAxisd(angle, axis.normalized())));
  }

  /// Rotation whose log is the skew matrix of `omega` (angle = |omega|).
  static Rotation exp(const Vec3& omega) {
    const double angle = omega.norm();
    if (angle < 1e-12) {
      return Rotation(Quat(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z()));
    }
    return from_axis_angle(omega / angle, angle);
  }

  static Rotation from_matrix(const Mat3& m) { return Rotation(Quat(m)); }

  /// Keeps the coefficients bit-for-bit (sign-canonicalized only); q must already be unit length.
  static Rotation from_unit_quaternion(const Quat& q) {
    Rotation r;
    r.q_ = q;
    const double c[4] = {q.w(), q.x(), q.y(), q.z()};
    for (double v : c) {
      if (v < 0.0) r.q_ = Quat(-q.w(), -q.x(), -q.y(), -q.z());
      if (v != 0.0) break;
    }
    return r;
  }

  static Quat canonicalize(Quat q) {
    // already-unit inputs keep their bits so serialization round-trips exactly
    if (std::abs(q.squaredNorm() - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) q.normalize();
    const double c[4] = {q.w(), q.x(), q.y(), q.z()};
    for (double v : c) {
      if (v > 0.0) return q;
      if (v < 0.0) return Quat(-q.w(), -q.x(), -q.y(), -q.z());
    }
    return Quat::Identity();
  }

  const Quat& quaternion() const { return q_; }
  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  Mat3 matrix() const { return q_.toRotationMatrix(); }

  Rotation inverse() const { return Rotation(q_.conjugate()); }

  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }

  Vec3 operator*(const Vec3& v) const { return q_ * v; }

  /// Angle-axis vector omega with R = exp(skew(omega)); |omega| in [0, pi].
  Vec3 log() const {
    const Vec3 v = q_.vec();
    const double s = v.norm();
    const double w = q_.w();  // w >= 0 after canonicalization
    if (s < 1e-6 * std::max(w, 1e-300)) {
      // 2 atan(s/w)/s expanded around s = 0
      const double r = s / w;
      return (2.0 / w) * (1.0 - r * r / 3.0) * v;
    }
    return (2.0 * std::atan2(s, w) / s) * v;
  }

  /// Relative rotation angle to the identity, in [0, pi].
  double angle() const { return 2.0 * std::atan2(q_.vec().norm(), std::abs(q_.w())); }

  bool operator==(const Rotation& other) const { return q_.coeffs() == other.q_.coeffs(); }

 private:
  Quat q_;
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Matrix logarithm of the rotation (a skew-symmetric matrix).
inline Mat3 log_matrix(const Rotation& r) { return skew(r.log()); }

/// d(R1, R2) = 0.5 * ||log(R1^T R2)||_F, which equals theta / sqrt(2).
inline double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  const Vec3 omega = (r1.inverse() * r2).log();
  return omega.norm() / std::numbers::sqrt2;
}

/// Rigid transform x -> r * x + t.
struct Pose {
  Rotation r;
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 operator*(const Vec3& x) const { return r * x + t; }

  Pose operator*(const Pose& other) const { return {r * other.r, r * other.t + t}; }

  Pose inverse() const {
    const Rotation inv = r.inverse();
    return {inv, -(inv * t)};
  }

  bool operator==(const Pose& other) const { return r == other.r && t == other.t; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = r.matrix();
    m.topRightCorner<3, 1>() = t;
    return m;
  }
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  CameraIntrinsics() = default;
  CameraIntrinsics(double fx_, double fy_, double cx_, double cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
    }
  }
};

/// Direction through pixel (x, y); the z component is exactly 1.
inline Vec3 view_ray(double x, double y, const CameraIntrinsics& k) {
  return {(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
}

/**
 * @brief Rotation that takes the viewing ray onto the optical axis.
 *
 * Rows are X_v = [0,1,0] x Z_v, Y_v = Z_v x X_v and Z_v = v / |v|, each
 * renormalized, so the result is orthonormal for oblique rays as well.
 * Throws DegenerateRay when v is (anti)parallel to the camera Y axis.
 */
inline Rotation rectification_rotation(const Vec3& v) {
  const double len = v.norm();
  if (!(len > 0.0)) throw Error(ErrorKind::DegenerateRay, "zero-length ray");
  const Vec3 z_axis = v / len;
  Vec3 x_axis = Vec3::UnitY().cross(z_axis);
  const double x_len = x_axis.norm();
  if (x_len < 1e-9) throw Error(ErrorKind::DegenerateRay, "ray is parallel to the camera Y axis");
  x_axis /= x_len;
  const Vec3 y_axis = z_axis.cross(x_axis).normalized();
  Mat3 m;
  m.row(0) = x_axis.transpose();
  m.row(1) = y_axis.transpose();
  m.row(2) = z_axis.transpose();
  return Rotation::from_matrix(m);
}

inline Pose rectify_pose(const Pose& p, const Rotation& rv) { return {rv * p.r, rv * p.t}; }

inline Pose derectify_pose(const Pose& p, const Rotation& rv) {
  const Rotation inv = rv.inverse();
  return {inv * p.r, inv * p.t};
}

/// Depth adjusted for ROI rescaling: z * s_after / s_before.
inline double rescale_depth(double z, double s_before, double s_after) {
  if (!(s_before > 0.0) || !(s_after > 0.0)) {
    throw Error(ErrorKind::InvalidScale, "image scales must be positive");
  }
  if (!(z > 0.0)) throw Error(ErrorKind::InvalidScale, "depth must be positive");
  return z * s_after / s_before;
}

}  // namespace posefuse
