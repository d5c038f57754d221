#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/object_model.hpp"
#include "posefuse/tessellation.hpp"

namespace posefuse {

inline void check_table(const RotDistanceTable& table, const RotationBins& bins) {
  if (table.n != bins.size() || table.entries.size() != table.n * table.n) {
    throw Error(ErrorKind::TableMismatch, "distance table has " + std::to_string(table.n) + " bins but the bin set has " +
                                              std::to_string(bins.size()));
  }
}

/// |T1 - T2| plus the tabulated rotation distance between the bins nearest R1 and R2.
inline double approx_distance(const Pose& h1, const Pose& h2, const RotDistanceTable& table, const RotationBins& bins) {
  check_table(table, bins);
  return (h1.t - h2.t).norm() + table.at(bins.nearest(h1.r), bins.nearest(h2.r));
}

/// Accuracy-vs-threshold curve over per-instance distances.
struct PckCurve {
  double tau_max = 0.1;
  std::vector<double> samples;  // sorted ascending
  double mpck = 0.0;

  /// Fraction of samples with distance <= tau.
  double accuracy(double tau) const {
    const auto it = std::upper_bound(samples.begin(), samples.end(), tau);
    return static_cast<double>(it - samples.begin()) / static_cast<double>(samples.size());
  }

  /// (threshold, accuracy) at `resolution` + 1 evenly spaced thresholds in [0, tau_max].
  std::vector<std::pair<double, double>> sample(std::size_t resolution) const {
    resolution = std::max<std::size_t>(resolution, 1);
    std::vector<std::pair<double, double>> out;
    out.reserve(resolution + 1);
    for (std::size_t i = 0; i <= resolution; ++i) {
      const double tau = tau_max * static_cast<double>(i) / static_cast<double>(resolution);
      out.emplace_back(tau, accuracy(tau));
    }
    return out;
  }
};

/**
 * @brief Area under the accuracy-threshold curve on [0, tau_max], normalized.
 *
 * Uses the closed form mean(max(0, 1 - D / tau_max)), which is the integral
 * of the step curve without threshold discretization.
 */
inline PckCurve mpck(std::span<const double> distances, double tau_max) {
  if (distances.empty()) throw Error(ErrorKind::EmptyInput, "no distances to evaluate");
  if (!(tau_max > 0.0)) throw Error(ErrorKind::InvalidArgument, "tau_max must be positive");
  PckCurve curve;
  curve.tau_max = tau_max;
  curve.samples.assign(distances.begin(), distances.end());
  std::sort(curve.samples.begin(), curve.samples.end());
  double sum = 0.0;
  for (double d : curve.samples) sum += std::max(0.0, 1.0 - d / tau_max);
  curve.mpck = sum / static_cast<double>(curve.samples.size());
  return curve;
}

}  // namespace posefuse
