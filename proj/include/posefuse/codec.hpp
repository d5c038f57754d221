#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/tessellation.hpp"

namespace posefuse {

/// Index of each subspace in rank tuples: rotation, then X, Y, Z.
enum Subspace : std::size_t { kRot = 0, kX = 1, kY = 2, kZ = 3 };

struct CodecConfig {
  std::size_t k_rot = 4;
  std::size_t k_axis = 3;
  double theta1 = 0.7;
  double theta2 = 0.1;
  RotationBins bins;
  std::array<AxisGrid, 3> grids;

  void validate() const {
    if (bins.size() == 0) throw Error(ErrorKind::InvalidConfig, "bins: rotation bin set is empty");
    if (k_rot < 1 || k_rot > bins.size()) throw Error(ErrorKind::InvalidConfig, "k_rot: must be in [1, number of rotation bins]");
    for (std::size_t a = 0; a < 3; ++a) {
      if (k_axis < 1 || k_axis > grids[a].m) throw Error(ErrorKind::InvalidConfig, "k_axis: must be in [1, bins of every axis]");
    }
    if (!(theta1 > theta2) || !(theta2 > 0.0)) throw Error(ErrorKind::InvalidConfig, "theta1/theta2: require theta1 > theta2 > 0");
  }
};

/// Codec over `n_bins` rotation bins and the RGB-D translation grids (10 bins on [-0.2, 0.2] m per axis).
inline CodecConfig default_codec_config(std::size_t n_bins = 60) {
  CodecConfig cfg;
  cfg.bins = sample_so3_uniform(n_bins);
  cfg.grids = {make_axis_grid(10, -0.2, 0.2), make_axis_grid(10, -0.2, 0.2), make_axis_grid(10, -0.2, 0.2)};
  return cfg;
}

/**
 * @brief Bin confidences and per-bin deltas for one pose.
 *
 * Rotation deltas are full rotations applied on the left of the bin center;
 * bins without a delta hold the identity. Translation deltas are signed
 * offsets from the bin center in meters.
 */
struct BinDeltaCode {
  std::vector<double> b_rot;
  std::vector<Rotation> d_rot;
  std::array<std::vector<double>, 3> b_t;
  std::array<std::vector<double>, 3> d_t;

  static BinDeltaCode zeros(const CodecConfig& cfg) {
    BinDeltaCode code;
    code.b_rot.assign(cfg.bins.size(), 0.0);
    code.d_rot.assign(cfg.bins.size(), Rotation::identity());
    for (std::size_t a = 0; a < 3; ++a) {
      code.b_t[a].assign(cfg.grids[a].m, 0.0);
      code.d_t[a].assign(cfg.grids[a].m, 0.0);
    }
    return code;
  }

  bool operator==(const BinDeltaCode&) const = default;
};

inline void encode_rotation_into(const Rotation& r, const CodecConfig& cfg, BinDeltaCode& code) {
  const auto neighbors = cfg.bins.nearest(r, cfg.k_rot);
  for (std::size_t rank = 0; rank < neighbors.size(); ++rank) {
    const std::size_t i = neighbors[rank];
    code.b_rot[i] = rank == 0 ? cfg.theta1 : cfg.theta2;
    code.d_rot[i] = r * cfg.bins[i].inverse();
  }
}

inline void encode_translation_into(const Vec3& t, const CodecConfig& cfg, BinDeltaCode& code) {
  for (std::size_t a = 0; a < 3; ++a) {
    const AxisGrid& grid = cfg.grids[a];
    const auto neighbors = nn_axis(t[static_cast<Eigen::Index>(a)], grid, cfg.k_axis);
    for (std::size_t rank = 0; rank < neighbors.size(); ++rank) {
      const std::size_t i = neighbors[rank];
      code.b_t[a][i] = rank == 0 ? cfg.theta1 : cfg.theta2;
      code.d_t[a][i] = t[static_cast<Eigen::Index>(a)] - grid.center(i);
    }
  }
}

/// Sparse rotation targets: theta1 on the nearest bin, theta2 on the next k-1, deltas d_i = R * Rhat_i^T.
inline BinDeltaCode encode_rotation(const Rotation& r, const CodecConfig& cfg) {
  BinDeltaCode code = BinDeltaCode::zeros(cfg);
  encode_rotation_into(r, cfg, code);
  return code;
}

inline BinDeltaCode encode_translation(const Vec3& t, const CodecConfig& cfg) {
  BinDeltaCode code = BinDeltaCode::zeros(cfg);
  encode_translation_into(t, cfg, code);
  return code;
}

inline BinDeltaCode encode(const Pose& p, const CodecConfig& cfg) {
  BinDeltaCode code = BinDeltaCode::zeros(cfg);
  encode_rotation_into(p.r, cfg, code);
  encode_translation_into(p.t, cfg, code);
  return code;
}

namespace detail {

// NaN ranks with -inf: neither is a usable confidence.
inline double rank_value(double v) { return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v; }

inline void check_confidences(const std::vector<double>& b, const char* field) {
  const bool usable = std::any_of(b.begin(), b.end(), [](double v) { return std::isfinite(v); });
  if (!usable) throw Error(ErrorKind::EmptyCode, std::string(field) + ": no finite confidence");
}

/// Indices of b ordered by descending confidence, ties to the lower index.
inline std::vector<std::size_t> ranked_bins(const std::vector<double>& b, std::size_t k) {
  std::vector<std::size_t> order(b.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), [&](std::size_t a, std::size_t c) {
    const double va = rank_value(b[a]);
    const double vc = rank_value(b[c]);
    return va > vc || (va == vc && a < c);
  });
  order.resize(k);
  return order;
}

inline void check_shape(const BinDeltaCode& code, const CodecConfig& cfg) {
  if (code.b_rot.size() != cfg.bins.size() || code.d_rot.size() != cfg.bins.size()) {
    throw Error(ErrorKind::InvalidArgument, "rotation: code length does not match the number of rotation bins");
  }
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) {
    if (code.b_t[a].size() != cfg.grids[a].m || code.d_t[a].size() != cfg.grids[a].m) {
      throw Error(ErrorKind::InvalidArgument, std::string(kAxis[a]) + ": code length does not match the axis grid");
    }
  }
}

}  // namespace detail

inline Rotation decode_rotation_bin(const BinDeltaCode& code, const CodecConfig& cfg, std::size_t bin) {
  return code.d_rot[bin] * cfg.bins[bin];
}

inline double decode_axis_bin(const BinDeltaCode& code, const CodecConfig& cfg, std::size_t axis, std::size_t bin) {
  return cfg.grids[axis].center(bin) + code.d_t[axis][bin];
}

/// Highest-confidence bin per subspace with its own delta applied.
inline Pose decode(const BinDeltaCode& code, const CodecConfig& cfg) {
  detail::check_shape(code, cfg);
  detail::check_confidences(code.b_rot, "rotation");
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) detail::check_confidences(code.b_t[a], kAxis[a]);

  Pose p;
  p.r = decode_rotation_bin(code, cfg, detail::ranked_bins(code.b_rot, 1).front());
  for (std::size_t a = 0; a < 3; ++a) {
    p.t[static_cast<Eigen::Index>(a)] = decode_axis_bin(code, cfg, a, detail::ranked_bins(code.b_t[a], 1).front());
  }
  return p;
}

struct ComposedHypothesis {
  Pose pose;
  std::array<std::size_t, 4> ranks{};  // rank within each subspace (0 = top)
  std::array<std::size_t, 4> bins{};   // bin index within each subspace
  double score = 0.0;                  // product of the four confidences
};

/**
 * @brief All k^4 poses formed from the top-k bins of SO(3), X, Y and Z.
 *
 * Sorted by score (descending) with ties resolved by the rank tuple.
 */
inline std::vector<ComposedHypothesis> top_k_hypotheses(const BinDeltaCode& code, const CodecConfig& cfg, std::size_t k) {
  detail::check_shape(code, cfg);
  std::size_t available = cfg.bins.size();
  for (const AxisGrid& g : cfg.grids) available = std::min(available, g.m);
  if (k < 1 || k > available) throw Error(ErrorKind::InvalidArgument, "k must be in [1, fewest bins of any subspace]");
  detail::check_confidences(code.b_rot, "rotation");
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) detail::check_confidences(code.b_t[a], kAxis[a]);

  const auto rot_bins = detail::ranked_bins(code.b_rot, k);
  std::array<std::vector<std::size_t>, 3> axis_bins;
  std::array<std::vector<double>, 3> axis_values;
  for (std::size_t a = 0; a < 3; ++a) {
    axis_bins[a] = detail::ranked_bins(code.b_t[a], k);
    for (std::size_t bin : axis_bins[a]) axis_values[a].push_back(decode_axis_bin(code, cfg, a, bin));
  }
  std::vector<Rotation> rotations;
  for (std::size_t bin : rot_bins) rotations.push_back(decode_rotation_bin(code, cfg, bin));

  std::vector<ComposedHypothesis> out;
  out.reserve(k * k * k * k);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t x = 0; x < k; ++x) {
      for (std::size_t y = 0; y < k; ++y) {
        for (std::size_t z = 0; z < k; ++z) {
          ComposedHypothesis h;
          h.pose = {rotations[r], Vec3(axis_values[0][x], axis_values[1][y], axis_values[2][z])};
          h.ranks = {r, x, y, z};
          h.bins = {rot_bins[r], axis_bins[0][x], axis_bins[1][y], axis_bins[2][z]};
          h.score = code.b_rot[h.bins[kRot]] * code.b_t[0][h.bins[kX]] * code.b_t[1][h.bins[kY]] * code.b_t[2][h.bins[kZ]];
          out.push_back(h);
        }
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ComposedHypothesis& a, const ComposedHypothesis& b) {
    const double sa = detail::rank_value(a.score);
    const double sb = detail::rank_value(b.score);
    return sa > sb || (sa == sb && a.ranks < b.ranks);
  });
  return out;
}

}  // namespace posefuse
