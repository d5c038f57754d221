#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "posefuse/codec.hpp"
#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/metrics.hpp"
#include "posefuse/object_model.hpp"
#include "posefuse/parallel.hpp"
#include "posefuse/tessellation.hpp"

namespace posefuse {

/// A pose candidate expressed in the reference camera frame.
struct Hypothesis {
  Pose pose;
  std::size_t view = 0;
  std::array<std::size_t, 4> ranks{};
  double vote = 0.0;
};

/// Symmetrized closest-point distance over the full model.
struct ExactBackend {
  const ObjectModel* model = nullptr;
};

/// |T1 - T2| plus the symmetrized rotation term, both evaluated exactly.
struct DecoupledBackend {
  const ObjectModel* model = nullptr;
};

/// |T1 - T2| plus the precomputed bin-to-bin rotation distance.
struct TableBackend {
  const RotDistanceTable* table = nullptr;
  const RotationBins* bins = nullptr;
};

using VoteBackend = std::variant<ExactBackend, DecoupledBackend, TableBackend>;

inline std::string backend_name(const VoteBackend& backend) {
  return std::visit(
      [](const auto& b) -> std::string {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, ExactBackend>) return "exact";
        else if constexpr (std::is_same_v<T, DecoupledBackend>) return "decoupled";
        else return "table";
      },
      backend);
}

/// cam_ref^-1 * cam_i * h: a pose seen from camera i, re-expressed in the reference camera.
inline Pose to_reference(const Pose& h, const Pose& cam_i, const Pose& cam_ref) {
  if (cam_i == cam_ref) return h;
  return cam_ref.inverse() * (cam_i * h);
}

struct VoteOptions {
  double sigma = 0.02;
  bool exclude_same_view = false;
};

struct VoteResult {
  std::vector<double> votes;
  std::size_t winner = 0;
};

namespace detail {

// Groups bitwise-identical rotations; composed hypotheses share a handful of them.
inline std::vector<std::size_t> unique_rotation_ids(std::span<const Hypothesis> hs, std::vector<Rotation>& unique) {
  std::vector<std::size_t> ids(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const auto it = std::find(unique.begin(), unique.end(), hs[i].pose.r);
    ids[i] = static_cast<std::size_t>(it - unique.begin());
    if (it == unique.end()) unique.push_back(hs[i].pose.r);
  }
  return ids;
}

inline double contribution(double sigma, double distance) { return std::max(sigma - distance, 0.0); }

// max(sigma - sym_add_s, 0); each one-sided mean stops once it alone rules out any contribution.
inline double exact_contribution(const Pose& a, const Pose& b, const ObjectModel& model, double sigma) {
  if (a == b) return sigma;
  const double forward = model.mean_closest_distance(b.inverse() * a, 2.0 * sigma);
  if (forward >= 2.0 * sigma) return 0.0;
  const double backward = model.mean_closest_distance(a.inverse() * b, 2.0 * sigma - forward);
  return contribution(sigma, 0.5 * (forward + backward));
}

}  // namespace detail

/**
 * @brief Scores every hypothesis by sum over the others of max(sigma - D, 0).
 *
 * Same-view pairs vote unless `exclude_same_view` is set. Pair contributions
 * are computed once per unordered pair and summed in index order, so results
 * are identical for any thread count. The winner is the highest vote with
 * ties going to the smaller (view, ranks), then the lower index.
 */
inline VoteResult vote(std::span<const Hypothesis> hs, const VoteOptions& options, const VoteBackend& backend) {
  if (hs.empty()) throw Error(ErrorKind::EmptyHypothesisSet, "no hypotheses to vote on");
  if (!(options.sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive");
  const std::size_t n = hs.size();
  const double sigma = options.sigma;

  // contributions[i][j - i - 1] for j > i
  std::vector<std::vector<double>> contributions(n);
  auto wants = [&](std::size_t i, std::size_t j) { return !(options.exclude_same_view && hs[i].view == hs[j].view); };

  if (const auto* exact = std::get_if<ExactBackend>(&backend)) {
    if (exact->model == nullptr) throw Error(ErrorKind::InvalidArgument, "exact backend needs a model");
    parallel_for(n, [&](std::size_t i) {
      auto& row = contributions[i];
      row.assign(n - i - 1, 0.0);
      for (std::size_t j = i + 1; j < n; ++j) {
        if (wants(i, j)) row[j - i - 1] = detail::exact_contribution(hs[i].pose, hs[j].pose, *exact->model, sigma);
      }
    });
  } else {
    std::vector<Rotation> unique;
    const auto ids = detail::unique_rotation_ids(hs, unique);
    const std::size_t u = unique.size();
    std::vector<double> rot_term(u * u, 0.0);
    if (const auto* decoupled = std::get_if<DecoupledBackend>(&backend)) {
      if (decoupled->model == nullptr) throw Error(ErrorKind::InvalidArgument, "decoupled backend needs a model");
      parallel_for(u, [&](std::size_t a) {
        for (std::size_t b = a + 1; b < u; ++b) {
          rot_term[a * u + b] = sym_rotation_distance(unique[a], unique[b], *decoupled->model);
        }
      });
    } else {
      const auto& tb = std::get<TableBackend>(backend);
      if (tb.table == nullptr || tb.bins == nullptr) throw Error(ErrorKind::InvalidArgument, "table backend needs a table and bins");
      check_table(*tb.table, *tb.bins);
      std::vector<std::size_t> bin_of(u);
      parallel_for(u, [&](std::size_t a) { bin_of[a] = tb.bins->nearest(unique[a]); });
      for (std::size_t a = 0; a < u; ++a) {
        for (std::size_t b = a + 1; b < u; ++b) rot_term[a * u + b] = tb.table->at(bin_of[a], bin_of[b]);
      }
    }
    for (std::size_t a = 0; a < u; ++a) {
      for (std::size_t b = 0; b < a; ++b) rot_term[a * u + b] = rot_term[b * u + a];
    }
    parallel_for(n, [&](std::size_t i) {
      auto& row = contributions[i];
      row.assign(n - i - 1, 0.0);
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!wants(i, j)) continue;
        const double d = (hs[i].pose.t - hs[j].pose.t).norm() + rot_term[ids[i] * u + ids[j]];
        row[j - i - 1] = detail::contribution(sigma, d);
      }
    });
  }

  VoteResult result;
  result.votes.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < i; ++j) sum += contributions[j][i - j - 1];
    for (std::size_t j = i + 1; j < n; ++j) sum += contributions[i][j - i - 1];
    result.votes[i] = sum;
  }
  for (std::size_t i = 1; i < n; ++i) {
    const double vi = result.votes[i];
    const double vw = result.votes[result.winner];
    if (vi > vw || (vi == vw && std::tie(hs[i].view, hs[i].ranks) < std::tie(hs[result.winner].view, hs[result.winner].ranks))) {
      result.winner = i;
    }
  }
  return result;
}

/// One camera: its camera-to-world pose and either a code or explicit hypotheses.
struct View {
  Pose camera_pose;
  std::optional<BinDeltaCode> code;
  std::vector<Pose> hypotheses;
};

struct ViewSet {
  std::size_t reference = 0;
  std::vector<View> views;
};

/// Expands each view into hypotheses (k^4 per code) expressed in the reference camera frame.
inline std::vector<Hypothesis> expand_views(const ViewSet& vs, const CodecConfig& cfg, std::size_t k) {
  if (vs.views.empty()) throw Error(ErrorKind::InvalidArgument, "views: view set is empty");
  if (vs.reference >= vs.views.size()) throw Error(ErrorKind::InvalidArgument, "reference: index out of range");
  const Pose& cam_ref = vs.views[vs.reference].camera_pose;
  std::vector<Hypothesis> out;
  for (std::size_t v = 0; v < vs.views.size(); ++v) {
    const View& view = vs.views[v];
    if (view.code) {
      for (const auto& h : top_k_hypotheses(*view.code, cfg, k)) {
        out.push_back({to_reference(h.pose, view.camera_pose, cam_ref), v, h.ranks, 0.0});
      }
    } else {
      if (view.hypotheses.empty()) {
        throw Error(ErrorKind::InvalidArgument, "views[" + std::to_string(v) + "]: neither a code nor hypotheses");
      }
      for (std::size_t j = 0; j < view.hypotheses.size(); ++j) {
        out.push_back({to_reference(view.hypotheses[j], view.camera_pose, cam_ref), v, {j, 0, 0, 0}, 0.0});
      }
    }
  }
  return out;
}

struct FuseOptions {
  std::size_t k = 3;
  VoteOptions vote;
  std::optional<VoteBackend> compare;  // also score with this backend for diagnostics
};

struct FusionResult {
  Pose pose;
  std::size_t winner = 0;
  std::vector<Hypothesis> hypotheses;
  std::string backend;
  double vote_seconds = 0.0;
  std::optional<VoteResult> compare;
  std::string compare_backend;
};

/// Expand, transform to the reference view, vote, and return the winning pose.
inline FusionResult fuse(const ViewSet& vs, const CodecConfig& cfg, const FuseOptions& options, const VoteBackend& backend) {
  FusionResult result;
  result.hypotheses = expand_views(vs, cfg, options.k);
  result.backend = backend_name(backend);
  const auto start = std::chrono::steady_clock::now();
  const VoteResult scored = vote(result.hypotheses, options.vote, backend);
  result.vote_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (std::size_t i = 0; i < scored.votes.size(); ++i) result.hypotheses[i].vote = scored.votes[i];
  result.winner = scored.winner;
  result.pose = result.hypotheses[scored.winner].pose;
  if (options.compare) {
    result.compare = vote(result.hypotheses, options.vote, *options.compare);
    result.compare_backend = backend_name(*options.compare);
  }
  return result;
}

/// Minimum add_s to gt over the top-k hypothesis sets, for every k in 1..k_max.
inline std::vector<double> top_k_error_profile(const BinDeltaCode& code, const Pose& gt, const CodecConfig& cfg,
                                               const ObjectModel& model, std::size_t k_max) {
  std::vector<double> best(k_max, std::numeric_limits<double>::infinity());
  for (const auto& h : top_k_hypotheses(code, cfg, k_max)) {
    const std::size_t needed = 1 + *std::max_element(h.ranks.begin(), h.ranks.end());
    // best is non-increasing in k, so only a value below best[needed - 1] can matter
    const double d = add_s(h.pose, gt, model, best[needed - 1]);
    for (std::size_t k = needed; k <= k_max; ++k) best[k - 1] = std::min(best[k - 1], d);
  }
  return best;
}

struct TopKInstance {
  BinDeltaCode code;
  Pose gt;
};

/// mPCK where each instance scores its best hypothesis among the top-k^4.
inline double top_k_accuracy(std::span<const TopKInstance> instances, const CodecConfig& cfg, const ObjectModel& model,
                             std::size_t k, double tau_max) {
  if (instances.empty()) throw Error(ErrorKind::EmptyInput, "no instances to evaluate");
  std::vector<double> errors(instances.size());
  parallel_for(instances.size(), [&](std::size_t i) {
    errors[i] = top_k_error_profile(instances[i].code, instances[i].gt, cfg, model, k).back();
  });
  return mpck(errors, tau_max).mpck;
}

}  // namespace posefuse
