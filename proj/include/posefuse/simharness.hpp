#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "posefuse/codec.hpp"
#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/metrics.hpp"
#include "posefuse/multiview.hpp"
#include "posefuse/object_model.hpp"
#include "posefuse/parallel.hpp"
#include "posefuse/rng.hpp"
#include "posefuse/tessellation.hpp"

namespace posefuse {

struct BoxShape {
  double width = 0.1;   // x
  double height = 0.1;  // y
  double depth = 0.1;   // z
};

struct CylinderShape {
  double radius = 0.05;
  double height = 0.2;  // along z
};

struct BlobShape {
  std::uint64_t seed = 0;
  double radius = 0.08;
};

using ShapeSpec = std::variant<BoxShape, CylinderShape, BlobShape>;

/// Continuous symmetries are sampled at this many evenly spaced angles.
inline constexpr int kContinuousSymmetrySteps = 36;

struct SymmetrySpec {
  enum class Kind { None, Cyclic, Continuous };
  Kind kind = Kind::None;
  Vec3 axis = Vec3::UnitZ();
  int order = 1;

  /// Non-identity group elements used for certification and confusion sampling.
  std::vector<Rotation> elements() const {
    const int steps = kind == Kind::Continuous ? kContinuousSymmetrySteps : (kind == Kind::Cyclic ? order : 1);
    std::vector<Rotation> out;
    for (int i = 1; i < steps; ++i) out.push_back(Rotation::from_axis_angle(axis, 2.0 * std::numbers::pi * i / steps));
    return out;
  }
};

inline constexpr double kSymmetryTolerance = 1e-3;

/// Largest add_s((I,0), (s,0)) over the declared symmetry elements.
inline double symmetry_residual(const ObjectModel& model, const SymmetrySpec& sym) {
  double worst = 0.0;
  for (const Rotation& s : sym.elements()) worst = std::max(worst, add_s(Pose{}, Pose{s, Vec3::Zero()}, model));
  return worst;
}

struct GeneratedModel {
  ObjectModel model;
  SymmetrySpec symmetry;
  double symmetry_residual = 0.0;
};

namespace detail {

inline void center_points(std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  for (Vec3& p : pts) p -= mean;
}

// Split `total` into parts proportional to weights (largest remainder, ties to the lower index).
inline std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  std::vector<std::size_t> out(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(quota));
    used += out[i];
    remainders.emplace_back(-(quota - std::floor(quota)), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; used < total; ++r, ++used) ++out[remainders[r % remainders.size()].second];
  return out;
}

// Rings of 36*q points along the bottom cap, side and top cap profile; every
// ring is an orbit of the discretized z-rotation group. Points that do not
// fill a whole ring go to the cap centers, which lie on the axis.
inline std::vector<Vec3> sample_cylinder(const CylinderShape& c, std::size_t m) {
  const double pi = std::numbers::pi;
  const double area = 2.0 * pi * c.radius * c.height + 2.0 * pi * c.radius * c.radius;
  const double spacing = std::sqrt(area / static_cast<double>(m));
  const double profile = 2.0 * c.radius + c.height;
  // rings sit three spacings apart so each ring is densely filled: an axial
  // rotation then moves every point by a fraction of the in-ring spacing
  const auto stations = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(profile / (3.0 * spacing))));

  std::vector<double> rho(stations), z(stations);
  for (std::size_t s = 0; s < stations; ++s) {
    const double u = (static_cast<double>(s) + 0.5) / static_cast<double>(stations) * profile;
    if (u < c.radius) {
      rho[s] = u;
      z[s] = -0.5 * c.height;
    } else if (u < c.radius + c.height) {
      rho[s] = c.radius;
      z[s] = u - c.radius - 0.5 * c.height;
    } else {
      rho[s] = profile - u;
      z[s] = 0.5 * c.height;
    }
  }
  const std::size_t group = kContinuousSymmetrySteps;
  const auto units = apportion(m / group, rho);
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);

  std::vector<Vec3> pts;
  pts.reserve(m);
  for (std::size_t s = 0; s < stations; ++s) {
    const std::size_t count = units[s] * group;
    const double offset = std::fmod(static_cast<double>(s) * golden, 1.0);
    for (std::size_t k = 0; k < count; ++k) {
      const double angle = 2.0 * pi * (static_cast<double>(k) + offset) / static_cast<double>(count);
      pts.emplace_back(rho[s] * std::cos(angle), rho[s] * std::sin(angle), z[s]);
    }
  }
  for (std::size_t i = 0; pts.size() < m; ++i) pts.emplace_back(0.0, 0.0, (i % 2 == 0 ? -0.5 : 0.5) * c.height);
  return pts;
}

// Cell-centered grids on all six faces with a shared spacing; leftovers go
// to the centers of the two z faces.
inline std::vector<Vec3> sample_box(const BoxShape& b, std::size_t m) {
  const double area = 2.0 * (b.width * b.height + b.height * b.depth + b.width * b.depth);
  double spacing = std::sqrt(area / static_cast<double>(m));
  std::size_t nx = 1, ny = 1, nz = 1;
  for (;;) {
    nx = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(b.width / spacing)));
    ny = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(b.height / spacing)));
    nz = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(b.depth / spacing)));
    if (2 * (nx * ny + ny * nz + nx * nz) <= m || nx * ny * nz == 1) break;
    spacing *= 1.01;
  }
  const Vec3 half(0.5 * b.width, 0.5 * b.height, 0.5 * b.depth);
  const std::array<std::size_t, 3> counts{nx, ny, nz};
  std::vector<Vec3> pts;
  pts.reserve(m);
  for (int normal = 0; normal < 3; ++normal) {
    const int u = (normal + 1) % 3;
    const int v = (normal + 2) % 3;
    for (double side : {-1.0, 1.0}) {
      for (std::size_t i = 0; i < counts[u]; ++i) {
        for (std::size_t j = 0; j < counts[v]; ++j) {
          Vec3 p;
          p[normal] = side * half[normal];
          p[u] = -half[u] + (static_cast<double>(i) + 0.5) * 2.0 * half[u] / static_cast<double>(counts[u]);
          p[v] = -half[v] + (static_cast<double>(j) + 0.5) * 2.0 * half[v] / static_cast<double>(counts[v]);
          pts.push_back(p);
        }
      }
    }
  }
  // fewer than six points: keep the leading face centers, which come in opposite pairs
  if (pts.size() > m) pts.resize(m);
  for (std::size_t i = 0; pts.size() < m; ++i) pts.emplace_back(0.0, 0.0, (i % 2 == 0 ? -1.0 : 1.0) * half.z());
  return pts;
}

// Star-shaped surface: Fibonacci directions scaled by a smooth random radius.
inline std::vector<Vec3> sample_blob(const BlobShape& b, std::size_t m) {
  Rng rng(b.seed);
  std::array<Vec3, 4> lobes;
  std::array<double, 4> amplitude{};
  for (std::size_t i = 0; i < lobes.size(); ++i) {
    lobes[i] = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    amplitude[i] = rng.uniform(0.1, 0.3);
  }
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(m);
    const double r_xy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = static_cast<double>(i) * golden_angle;
    const Vec3 dir(r_xy * std::cos(phi), r_xy * std::sin(phi), z);
    double scale = 1.0;
    for (std::size_t l = 0; l < lobes.size(); ++l) scale += amplitude[l] * std::pow(std::max(0.0, dir.dot(lobes[l])), 2.0);
    pts.push_back(b.radius * scale * dir);
  }
  return pts;
}

}  // namespace detail

inline std::string shape_name(const ShapeSpec& shape) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BoxShape>) return "box";
        else if constexpr (std::is_same_v<T, CylinderShape>) return "cylinder";
        else return "blob";
      },
      shape);
}

/**
 * @brief Deterministic surface samples of a primitive, centered at the origin.
 *
 * Cylinders declare continuous symmetry about z; boxes declare cyclic
 * symmetry about z (order 4 when width == height, else 2); blobs declare
 * none. The declared symmetry is certified on the generated points and
 * InvalidShape is thrown if it does not hold to within 1e-3 m.
 */
inline GeneratedModel generate_model(const ShapeSpec& shape, std::size_t m) {
  if (m < 4) throw Error(ErrorKind::InvalidShape, "points: need at least 4 model points");
  std::vector<Vec3> pts;
  SymmetrySpec sym;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BoxShape>) {
          if (!(s.width > 0.0 && s.height > 0.0 && s.depth > 0.0)) throw Error(ErrorKind::InvalidShape, "box: dimensions must be positive");
          pts = detail::sample_box(s, m);
          sym = {SymmetrySpec::Kind::Cyclic, Vec3::UnitZ(), s.width == s.height ? 4 : 2};
        } else if constexpr (std::is_same_v<T, CylinderShape>) {
          if (!(s.radius > 0.0 && s.height > 0.0)) throw Error(ErrorKind::InvalidShape, "cylinder: dimensions must be positive");
          pts = detail::sample_cylinder(s, m);
          sym = {SymmetrySpec::Kind::Continuous, Vec3::UnitZ(), 0};
        } else {
          if (!(s.radius > 0.0)) throw Error(ErrorKind::InvalidShape, "blob: radius must be positive");
          pts = detail::sample_blob(s, m);
          sym = {};
        }
      },
      shape);
  detail::center_points(pts);
  ObjectModel model(std::move(pts), shape_name(shape));
  const double residual = symmetry_residual(model, sym);
  if (!(residual < kSymmetryTolerance)) {
    throw Error(ErrorKind::InvalidShape, "declared symmetry does not hold on the sampled points (residual " + std::to_string(residual) + " m)");
  }
  return {std::move(model), sym, residual};
}

struct NoiseSpec {
  double rot_kappa = 0.1;           // scale of the rotation error angle, radians
  double trans_sigma = 0.01;        // per-axis translation error, meters
  double confusion_p = 0.3;         // chance the top rotation bin is a symmetric twin
  double confidence_jitter = 0.1;   // log-normal spread applied to nonzero confidences
  std::uint64_t seed = 1;

  void validate() const {
    if (!(rot_kappa >= 0.0) || !(trans_sigma >= 0.0) || !(confidence_jitter >= 0.0)) {
      throw Error(ErrorKind::InvalidConfig, "noise: spreads must be non-negative");
    }
    if (!(confusion_p >= 0.0 && confusion_p <= 1.0)) throw Error(ErrorKind::InvalidConfig, "noise.confusion_p: must be in [0, 1]");
  }
};

inline Rotation random_rotation(Rng& rng) {
  return Rotation(Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
}

/// Random axis with angle |N(0, kappa)|.
inline Rotation random_rotation_noise(Rng& rng, double kappa) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  while (axis.norm() < 1e-12) axis = Vec3(rng.normal(), rng.normal(), rng.normal());
  return Rotation::from_axis_angle(axis, std::abs(rng.normal()) * kappa);
}

/**
 * @brief Camera-to-world poses looking at the object from a randomized ring.
 *
 * Each camera sits 0.5 to 1.5 m from the object at jittered azimuth and
 * elevation, aimed near the object center, using the x-right, y-down,
 * z-forward convention.
 */
inline std::vector<Pose> simulate_views(const Pose& gt, std::size_t n_views, std::uint64_t seed) {
  if (n_views < 1) throw Error(ErrorKind::InvalidArgument, "n_views must be >= 1");
  const double pi = std::numbers::pi;
  Rng rng(derive_seed(seed, 0x5eed));
  const double base = rng.uniform(0.0, 2.0 * pi);
  std::vector<Pose> cams;
  cams.reserve(n_views);
  for (std::size_t v = 0; v < n_views; ++v) {
    const double step = 2.0 * pi / static_cast<double>(n_views);
    const double azimuth = base + step * static_cast<double>(v) + rng.uniform(-0.3, 0.3) * step;
    const double elevation = rng.uniform(0.2, 0.9);
    const double radius = rng.uniform(0.5, 1.5);
    const Vec3 target = gt.t + Vec3(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03));
    const Vec3 center = target + radius * Vec3(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    const Vec3 forward = (target - center).normalized();
    const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 rot;
    rot.col(0) = right;
    rot.col(1) = down;
    rot.col(2) = forward;
    cams.push_back({Rotation::from_matrix(rot), center});
  }
  return cams;
}

/**
 * @brief Network stand-in: a sparse bin & delta code for a known pose.
 *
 * Bins follow the encoder's neighbor pattern around the true pose, or with
 * probability confusion_p around a symmetric twin (gt.r * s) whose nearest
 * bin differs from the truth's; the true bin then takes rank two. Each bin's delta
 * carries its own rotation and translation error, and nonzero confidences
 * get log-normal jitter. With all spreads zero and no confusion this is
 * exactly encode(gt).
 */
inline BinDeltaCode noisy_predict(const Pose& gt, const NoiseSpec& noise, const CodecConfig& cfg, const SymmetrySpec& sym, Rng& rng) {
  BinDeltaCode code = BinDeltaCode::zeros(cfg);
  const std::size_t truth = cfg.bins.nearest(gt.r);
  bool confused = false;
  Rotation top = gt.r;
  if (noise.confusion_p > 0.0 && rng.bernoulli(noise.confusion_p)) {
    // only twins that land in another bin can be told apart from the truth
    std::vector<Rotation> twins;
    for (const Rotation& s : sym.elements()) {
      if (cfg.bins.nearest(gt.r * s) != truth) twins.push_back(gt.r * s);
    }
    if (!twins.empty()) {
      confused = true;
      top = twins[rng.below(twins.size())];
    }
  }

  std::vector<std::pair<std::size_t, Rotation>> slots;  // (bin, rotation its delta reconstructs)
  const auto neighbors = cfg.bins.nearest(top, cfg.k_rot);
  slots.emplace_back(neighbors.front(), top);
  if (confused) slots.emplace_back(truth, gt.r);
  for (std::size_t i = 1; i < neighbors.size() && slots.size() < cfg.k_rot; ++i) {
    if (std::none_of(slots.begin(), slots.end(), [&](const auto& s) { return s.first == neighbors[i]; })) {
      slots.emplace_back(neighbors[i], top);
    }
  }
  for (std::size_t rank = 0; rank < slots.size(); ++rank) {
    const auto& [bin, target] = slots[rank];
    const Rotation predicted = noise.rot_kappa > 0.0 ? random_rotation_noise(rng, noise.rot_kappa) * target : target;
    code.b_rot[bin] = rank == 0 ? cfg.theta1 : cfg.theta2;
    code.d_rot[bin] = predicted * cfg.bins[bin].inverse();
  }

  for (std::size_t a = 0; a < 3; ++a) {
    const double value = gt.t[static_cast<Eigen::Index>(a)];
    const auto bins = nn_axis(value, cfg.grids[a], cfg.k_axis);
    for (std::size_t rank = 0; rank < bins.size(); ++rank) {
      const double predicted = noise.trans_sigma > 0.0 ? value + noise.trans_sigma * rng.normal() : value;
      code.b_t[a][bins[rank]] = rank == 0 ? cfg.theta1 : cfg.theta2;
      code.d_t[a][bins[rank]] = predicted - cfg.grids[a].center(bins[rank]);
    }
  }

  if (noise.confidence_jitter > 0.0) {
    auto jitter = [&](std::vector<double>& b) {
      for (double& v : b) {
        if (v != 0.0) v *= std::exp(noise.confidence_jitter * rng.normal());
      }
    };
    jitter(code.b_rot);
    for (auto& b : code.b_t) jitter(b);
  }
  return code;
}

inline BinDeltaCode noisy_predict(const Pose& gt, const NoiseSpec& noise, const CodecConfig& cfg, const SymmetrySpec& sym) {
  Rng rng(noise.seed);
  return noisy_predict(gt, noise, cfg, sym, rng);
}

enum class BackendKind { Exact, Decoupled, Table };

inline std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::Exact: return "exact";
    case BackendKind::Decoupled: return "decoupled";
    case BackendKind::Table: return "table";
  }
  return "table";
}

struct ModelSpec {
  ShapeSpec shape = CylinderShape{};
  std::size_t points = 1000;        // evaluation model
  std::size_t table_points = 216;   // coarser copy used for voting distances
};

struct CodecSettings {
  std::size_t rotation_bins = 60;
  std::size_t k_rot = 4;
  std::size_t k_axis = 3;
  double theta1 = 0.7;
  double theta2 = 0.1;
  std::array<AxisGrid, 3> grids{AxisGrid{10, -0.2, 0.2}, AxisGrid{10, -0.2, 0.2}, AxisGrid{40, 0.5, 4.0}};

  CodecConfig build() const {
    CodecConfig cfg;
    cfg.k_rot = k_rot;
    cfg.k_axis = k_axis;
    cfg.theta1 = theta1;
    cfg.theta2 = theta2;
    cfg.bins = sample_so3_uniform(rotation_bins);
    for (std::size_t a = 0; a < 3; ++a) cfg.grids[a] = make_axis_grid(grids[a].m, grids[a].s_min, grids[a].s_max);
    cfg.validate();
    return cfg;
  }
};

struct ExperimentConfig {
  ModelSpec model;
  NoiseSpec noise;
  CodecSettings codec;
  std::size_t n_views = 5;
  std::size_t k = 3;
  std::size_t top_k_max = 4;
  double sigma = 0.02;
  BackendKind backend = BackendKind::Table;
  std::optional<BackendKind> compare_backend;
  std::size_t table_bins = 2700;
  std::size_t n_trials = 200;
  double tau_max = 0.1;
  bool exclude_same_view = false;
  bool record_timings = false;
  std::vector<std::uint64_t> seeds;  // empty: run noise.seed only

  void validate() const {
    noise.validate();
    if (n_views < 1) throw Error(ErrorKind::InvalidConfig, "n_views: must be >= 1");
    if (n_trials < 1) throw Error(ErrorKind::InvalidConfig, "n_trials: must be >= 1");
    if (k < 1) throw Error(ErrorKind::InvalidConfig, "k: must be >= 1");
    if (top_k_max < 1) throw Error(ErrorKind::InvalidConfig, "top_k_max: must be >= 1");
    if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidConfig, "sigma: must be positive");
    if (!(tau_max > 0.0)) throw Error(ErrorKind::InvalidConfig, "tau_max: must be positive");
    if (table_bins < 1) throw Error(ErrorKind::InvalidConfig, "table_bins: must be >= 1");
    if (model.points < 4 || model.table_points < 4) throw Error(ErrorKind::InvalidConfig, "model.points: need at least 4 points");
  }

  bool needs_table() const {
    return backend == BackendKind::Table || (compare_backend && *compare_backend == BackendKind::Table);
  }
};

/// Models, codec and distance table shared by every seed of an experiment.
struct ExperimentResources {
  GeneratedModel eval;
  GeneratedModel voting;
  CodecConfig codec;
  std::optional<RotationBins> table_bins;
  std::optional<RotDistanceTable> table;
  double table_seconds = 0.0;
};

inline ExperimentResources prepare_resources(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResources res{generate_model(cfg.model.shape, cfg.model.points), generate_model(cfg.model.shape, cfg.model.table_points),
                          cfg.codec.build(), std::nullopt, std::nullopt, 0.0};
  if (cfg.needs_table()) {
    const auto start = std::chrono::steady_clock::now();
    res.table_bins = sample_so3_uniform(cfg.table_bins);
    res.table = precompute_table(*res.table_bins, res.voting.model);
    res.table_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return res;
}

inline VoteBackend make_backend(BackendKind kind, const ExperimentResources& res) {
  switch (kind) {
    case BackendKind::Exact: return ExactBackend{&res.voting.model};
    case BackendKind::Decoupled: return DecoupledBackend{&res.voting.model};
    case BackendKind::Table:
      if (!res.table || !res.table_bins) throw Error(ErrorKind::InvalidConfig, "backend: table backend requested but no table was built");
      return TableBackend{&*res.table, &*res.table_bins};
  }
  throw Error(ErrorKind::InvalidConfig, "backend: unknown kind");
}

struct TrialRecord {
  Pose gt_reference;
  double single_error = 0.0;
  std::vector<double> top_k_errors;  // index k-1
  double fused_error = 0.0;
  std::size_t hypotheses = 0;
  std::optional<bool> winner_agrees;  // with the comparison backend, if any
  double vote_seconds = 0.0;
  double compare_seconds = 0.0;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  double single_mpck = 0.0;
  std::vector<double> top_k_mpck;
  double fused_mpck = 0.0;
  std::optional<double> winner_agreement;
  std::vector<TrialRecord> trials;
};

/// One trial: draw a pose, place cameras, predict per view, score single, top-K and fused estimates.
inline TrialRecord run_trial(const ExperimentConfig& cfg, const ExperimentResources& res, std::uint64_t seed, std::size_t trial) {
  Rng rng(derive_seed(seed, trial));
  const Pose gt{random_rotation(rng), Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05))};
  const auto cams = simulate_views(gt, cfg.n_views, derive_seed(seed, trial ^ 0xc0ffeeULL));

  ViewSet vs;
  vs.reference = 0;
  for (const Pose& cam : cams) {
    const Pose in_view = cam.inverse() * gt;
    vs.views.push_back({cam, noisy_predict(in_view, cfg.noise, res.codec, res.eval.symmetry, rng), {}});
  }

  TrialRecord rec;
  rec.gt_reference = cams.front().inverse() * gt;
  const BinDeltaCode& first = *vs.views.front().code;
  rec.single_error = add_s(decode(first, res.codec), rec.gt_reference, res.eval.model);
  rec.top_k_errors = top_k_error_profile(first, rec.gt_reference, res.codec, res.eval.model, cfg.top_k_max);

  FuseOptions options;
  options.k = cfg.k;
  options.vote = {cfg.sigma, cfg.exclude_same_view};
  const FusionResult fused = fuse(vs, res.codec, options, make_backend(cfg.backend, res));
  rec.fused_error = add_s(fused.pose, rec.gt_reference, res.eval.model);
  rec.hypotheses = fused.hypotheses.size();
  rec.vote_seconds = fused.vote_seconds;
  if (cfg.compare_backend) {
    const auto start = std::chrono::steady_clock::now();
    const VoteResult other = vote(fused.hypotheses, options.vote, make_backend(*cfg.compare_backend, res));
    rec.compare_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rec.winner_agrees = other.winner == fused.winner;
  }
  return rec;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const ExperimentResources& res, std::uint64_t seed) {
  cfg.validate();
  ExperimentReport report;
  report.seed = seed;
  report.trials.resize(cfg.n_trials);
  parallel_for(cfg.n_trials, [&](std::size_t t) { report.trials[t] = run_trial(cfg, res, seed, t); });

  std::vector<double> single, fused;
  std::vector<std::vector<double>> top_k(cfg.top_k_max);
  std::size_t agreements = 0;
  for (const auto& rec : report.trials) {
    single.push_back(rec.single_error);
    fused.push_back(rec.fused_error);
    for (std::size_t k = 0; k < cfg.top_k_max; ++k) top_k[k].push_back(rec.top_k_errors[k]);
    if (rec.winner_agrees.value_or(false)) ++agreements;
  }
  report.single_mpck = mpck(single, cfg.tau_max).mpck;
  report.fused_mpck = mpck(fused, cfg.tau_max).mpck;
  for (const auto& errors : top_k) report.top_k_mpck.push_back(mpck(errors, cfg.tau_max).mpck);
  if (cfg.compare_backend) report.winner_agreement = static_cast<double>(agreements) / static_cast<double>(cfg.n_trials);
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const ExperimentResources res = prepare_resources(cfg);
  return run_experiment(cfg, res, cfg.noise.seed);
}

/// Runs every configured seed (or noise.seed alone) against shared resources.
inline std::vector<ExperimentReport> run_seeds(const ExperimentConfig& cfg, const ExperimentResources& res) {
  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (seeds.empty()) seeds.push_back(cfg.noise.seed);
  std::vector<ExperimentReport> out;
  for (std::uint64_t s : seeds) out.push_back(run_experiment(cfg, res, s));
  return out;
}

struct VotingBenchmark {
  std::size_t hypotheses = 0;
  std::size_t dense_points = 0;
  double table_seconds = 0.0;  // mean per vote
  double exact_seconds = 0.0;
  double speedup = 0.0;
  bool same_winner = false;
};

/**
 * @brief Times table-backed voting against exact add_s voting on one trial's hypotheses.
 *
 * The exact side uses a dense copy of the experiment shape with
 * `dense_points` points; the table side reuses the experiment's table.
 */
inline VotingBenchmark benchmark_voting(const ExperimentConfig& cfg, const ExperimentResources& res, std::size_t dense_points,
                                        std::uint64_t seed, std::size_t table_repeats = 20) {
  if (!res.table || !res.table_bins) throw Error(ErrorKind::InvalidConfig, "benchmark: needs a distance table");
  const GeneratedModel dense = generate_model(cfg.model.shape, dense_points);

  Rng rng(derive_seed(seed, 0xbe4c));
  const Pose gt{random_rotation(rng), Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05))};
  const auto cams = simulate_views(gt, cfg.n_views, seed);
  ViewSet vs;
  for (const Pose& cam : cams) vs.views.push_back({cam, noisy_predict(cam.inverse() * gt, cfg.noise, res.codec, dense.symmetry, rng), {}});
  const auto hyps = expand_views(vs, res.codec, cfg.k);
  const VoteOptions options{cfg.sigma, cfg.exclude_same_view};

  VotingBenchmark bench;
  bench.hypotheses = hyps.size();
  bench.dense_points = dense_points;
  const TableBackend table{&*res.table, &*res.table_bins};
  table_repeats = std::max<std::size_t>(1, table_repeats);
  VoteResult table_result;
  auto start = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < table_repeats; ++r) table_result = vote(hyps, options, table);
  bench.table_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / static_cast<double>(table_repeats);

  start = std::chrono::steady_clock::now();
  const VoteResult exact_result = vote(hyps, options, ExactBackend{&dense.model});
  bench.exact_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bench.speedup = bench.exact_seconds / std::max(bench.table_seconds, 1e-12);
  bench.same_winner = table_result.winner == exact_result.winner;
  return bench;
}

}  // namespace posefuse
