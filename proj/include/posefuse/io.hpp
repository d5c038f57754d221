#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "posefuse/codec.hpp"
#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/metrics.hpp"
#include "posefuse/multiview.hpp"
#include "posefuse/object_model.hpp"
#include "posefuse/simharness.hpp"
#include "posefuse/tessellation.hpp"

namespace posefuse::io {

using json = nlohmann::json;

inline constexpr const char* kTessellationFormat = "posefuse-tessellation";
inline constexpr int kTessellationVersion = 1;

/// Non-fatal notes produced while loading (for example re-normalized quaternions).
using Warnings = std::vector<std::string>;

// ---------------------------------------------------------------- text and files

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, path + ": cannot open file for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::Parse, path + ": write failed");
}

/// Parses JSON; syntax errors report the 1-based line.
inline json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto > 0 ? upto - 1 : 0), '\n');
    throw Error(ErrorKind::Parse, source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
}

inline json load_json(const std::string& path) { return parse_json(read_text(path), path); }

/// Canonical serialization: sorted keys, two-space indent, shortest round-trip doubles.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- field access

namespace detail {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::Parse, (path.empty() ? std::string("<root>") : path) + ": " + what);
}

inline void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

inline void expect_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  expect_object(j, path);
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) fail(join(path, key), "unknown field");
  }
}

inline const json& field(const json& j, const std::string& path, const char* key) {
  expect_object(j, path);
  const auto it = j.find(key);
  if (it == j.end()) fail(join(path, key), "missing required field");
  return *it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "expected a finite number");
  return v;
}

inline std::size_t count(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) fail(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

inline std::uint64_t seed(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    fail(path, "expected a non-negative integer seed");
  }
  return j.get<std::uint64_t>();
}

inline bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

template <std::size_t N>
std::array<double, N> numbers(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != N) fail(path, "expected an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = number(j[i], index(path, i));
  return out;
}

template <class T, class Fn>
void optional_field(const json& j, const std::string& path, const char* key, T& target, Fn convert) {
  const auto it = j.find(key);
  if (it != j.end()) target = convert(*it, join(path, key));
}

}  // namespace detail

// ---------------------------------------------------------------- poses

inline json rotation_to_json(const Rotation& r) { return json::array({r.w(), r.x(), r.y(), r.z()}); }

/**
 * @brief Reads [w, x, y, z]; the norm must be 1 within 1e-6.
 *
 * Quaternions off by more than 1e-9 are re-normalized and a warning is added.
 */
inline Rotation rotation_from_json(const json& j, const std::string& path, Warnings* warnings = nullptr) {
  const auto q = detail::numbers<4>(j, path);
  const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  if (std::abs(norm - 1.0) > 1e-6) detail::fail(path, "quaternion norm " + std::to_string(norm) + " is not 1 within 1e-6");
  if (std::abs(norm - 1.0) > 1e-9 && warnings != nullptr) warnings->push_back(path + ": quaternion re-normalized (norm " + std::to_string(norm) + ")");
  return Rotation(q[0], q[1], q[2], q[3]);
}

inline json pose_to_json(const Pose& p) {
  return {{"q", rotation_to_json(p.r)}, {"t", json::array({p.t.x(), p.t.y(), p.t.z()})}};
}

inline Pose pose_from_json(const json& j, const std::string& path, Warnings* warnings = nullptr) {
  detail::expect_keys(j, path, {"q", "t"});
  const auto t = detail::numbers<3>(detail::field(j, path, "t"), detail::join(path, "t"));
  return {rotation_from_json(detail::field(j, path, "q"), detail::join(path, "q"), warnings), Vec3(t[0], t[1], t[2])};
}

/// Accepts a single pose object, an array of poses, or {"poses": [...]}.
inline std::vector<Pose> poses_from_json(const json& j, const std::string& path, Warnings* warnings = nullptr) {
  if (j.is_object() && j.contains("q")) return {pose_from_json(j, path, warnings)};
  const json* list = &j;
  std::string list_path = path;
  if (j.is_object()) {
    detail::expect_keys(j, path, {"poses"});
    list = &detail::field(j, path, "poses");
    list_path = detail::join(path, "poses");
  }
  if (!list->is_array()) detail::fail(list_path, "expected an array of poses");
  std::vector<Pose> out;
  for (std::size_t i = 0; i < list->size(); ++i) out.push_back(pose_from_json((*list)[i], detail::index(list_path, i), warnings));
  return out;
}

inline json poses_to_json(const std::vector<Pose>& poses) {
  json arr = json::array();
  for (const Pose& p : poses) arr.push_back(pose_to_json(p));
  return {{"poses", arr}};
}

// ---------------------------------------------------------------- codec

inline json grid_to_json(const AxisGrid& g) { return {{"bins", g.m}, {"min", g.s_min}, {"max", g.s_max}}; }

inline AxisGrid grid_from_json(const json& j, const std::string& path) {
  detail::expect_keys(j, path, {"bins", "min", "max"});
  const std::size_t m = detail::count(detail::field(j, path, "bins"), detail::join(path, "bins"));
  const double lo = detail::number(detail::field(j, path, "min"), detail::join(path, "min"));
  const double hi = detail::number(detail::field(j, path, "max"), detail::join(path, "max"));
  try {
    return make_axis_grid(m, lo, hi);
  } catch (const Error& e) {
    detail::fail(path, e.message());
  }
}

inline json codec_settings_to_json(const CodecSettings& s) {
  return {{"rotation_bins", s.rotation_bins},
          {"k_rot", s.k_rot},
          {"k_axis", s.k_axis},
          {"theta1", s.theta1},
          {"theta2", s.theta2},
          {"grids", {{"x", grid_to_json(s.grids[0])}, {"y", grid_to_json(s.grids[1])}, {"z", grid_to_json(s.grids[2])}}}};
}

/// Codec settings; absent fields keep their defaults.
inline CodecSettings codec_settings_from_json(const json& j, const std::string& path) {
  detail::expect_keys(j, path, {"rotation_bins", "k_rot", "k_axis", "theta1", "theta2", "grids"});
  CodecSettings s;
  detail::optional_field(j, path, "rotation_bins", s.rotation_bins, detail::count);
  detail::optional_field(j, path, "k_rot", s.k_rot, detail::count);
  detail::optional_field(j, path, "k_axis", s.k_axis, detail::count);
  detail::optional_field(j, path, "theta1", s.theta1, detail::number);
  detail::optional_field(j, path, "theta2", s.theta2, detail::number);
  if (const auto it = j.find("grids"); it != j.end()) {
    const std::string gpath = detail::join(path, "grids");
    detail::expect_keys(*it, gpath, {"x", "y", "z"});
    static constexpr const char* kAxis[3] = {"x", "y", "z"};
    for (std::size_t a = 0; a < 3; ++a) detail::optional_field(*it, gpath, kAxis[a], s.grids[a], grid_from_json);
  }
  return s;
}

inline CodecConfig build_codec(const CodecSettings& s, const std::string& path) {
  try {
    return s.build();
  } catch (const Error& e) {
    detail::fail(path, e.message());
  }
}

inline CodecConfig load_codec_config(const std::string& file) {
  const json j = load_json(file);
  return build_codec(codec_settings_from_json(j, ""), file);
}

/**
 * @brief Sparse code: only bins with a nonzero confidence or a non-identity delta are written.
 *
 * {"rotation": [{"bin", "conf", "delta": [w,x,y,z]}], "x"|"y"|"z": [{"bin", "conf", "delta"}]}
 */
inline json code_to_json(const BinDeltaCode& code) {
  json rot = json::array();
  for (std::size_t i = 0; i < code.b_rot.size(); ++i) {
    if (code.b_rot[i] != 0.0 || !(code.d_rot[i] == Rotation::identity())) {
      rot.push_back({{"bin", i}, {"conf", code.b_rot[i]}, {"delta", rotation_to_json(code.d_rot[i])}});
    }
  }
  json out = {{"rotation", rot}};
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) {
    json entries = json::array();
    for (std::size_t i = 0; i < code.b_t[a].size(); ++i) {
      if (code.b_t[a][i] != 0.0 || code.d_t[a][i] != 0.0) entries.push_back({{"bin", i}, {"conf", code.b_t[a][i]}, {"delta", code.d_t[a][i]}});
    }
    out[kAxis[a]] = entries;
  }
  return out;
}

inline BinDeltaCode code_from_json(const json& j, const CodecConfig& cfg, const std::string& path, Warnings* warnings = nullptr) {
  detail::expect_keys(j, path, {"rotation", "x", "y", "z"});
  BinDeltaCode code = BinDeltaCode::zeros(cfg);
  auto entries = [&](const char* key, std::size_t limit, auto&& apply) {
    const std::string epath = detail::join(path, key);
    const json& arr = detail::field(j, path, key);
    if (!arr.is_array()) detail::fail(epath, "expected an array of bin entries");
    for (std::size_t n = 0; n < arr.size(); ++n) {
      const std::string item = detail::index(epath, n);
      detail::expect_keys(arr[n], item, {"bin", "conf", "delta"});
      const std::size_t bin = detail::count(detail::field(arr[n], item, "bin"), detail::join(item, "bin"));
      if (bin >= limit) detail::fail(detail::join(item, "bin"), "bin " + std::to_string(bin) + " out of range (" + std::to_string(limit) + " bins)");
      const double conf = detail::number(detail::field(arr[n], item, "conf"), detail::join(item, "conf"));
      apply(bin, conf, detail::field(arr[n], item, "delta"), detail::join(item, "delta"));
    }
  };
  entries("rotation", cfg.bins.size(), [&](std::size_t bin, double conf, const json& delta, const std::string& dpath) {
    code.b_rot[bin] = conf;
    code.d_rot[bin] = rotation_from_json(delta, dpath, warnings);
  });
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) {
    entries(kAxis[a], cfg.grids[a].m, [&](std::size_t bin, double conf, const json& delta, const std::string& dpath) {
      code.b_t[a][bin] = conf;
      code.d_t[a][bin] = detail::number(delta, dpath);
    });
  }
  return code;
}

// ---------------------------------------------------------------- view sets

inline json viewset_to_json(const ViewSet& vs) {
  json views = json::array();
  for (const View& v : vs.views) {
    json entry = {{"camera_pose", pose_to_json(v.camera_pose)}};
    if (v.code) {
      entry["code"] = code_to_json(*v.code);
    } else {
      json hyps = json::array();
      for (const Pose& p : v.hypotheses) hyps.push_back(pose_to_json(p));
      entry["hypotheses"] = hyps;
    }
    views.push_back(entry);
  }
  return {{"reference", vs.reference}, {"views", views}};
}

inline ViewSet viewset_from_json(const json& j, const CodecConfig& cfg, Warnings* warnings = nullptr) {
  detail::expect_keys(j, "", {"reference", "views"});
  ViewSet vs;
  detail::optional_field(j, "", "reference", vs.reference, detail::count);
  const json& views = detail::field(j, "", "views");
  if (!views.is_array() || views.empty()) detail::fail("views", "expected a non-empty array");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string path = detail::index("views", i);
    detail::expect_keys(views[i], path, {"camera_pose", "code", "hypotheses"});
    View v;
    v.camera_pose = pose_from_json(detail::field(views[i], path, "camera_pose"), detail::join(path, "camera_pose"), warnings);
    const bool has_code = views[i].contains("code");
    const bool has_hyps = views[i].contains("hypotheses");
    if (has_code == has_hyps) detail::fail(path, "exactly one of 'code' or 'hypotheses' is required");
    if (has_code) {
      v.code = code_from_json(views[i]["code"], cfg, detail::join(path, "code"), warnings);
    } else {
      const std::string hpath = detail::join(path, "hypotheses");
      const json& hyps = views[i]["hypotheses"];
      if (!hyps.is_array() || hyps.empty()) detail::fail(hpath, "expected a non-empty array of poses");
      for (std::size_t h = 0; h < hyps.size(); ++h) v.hypotheses.push_back(pose_from_json(hyps[h], detail::index(hpath, h), warnings));
    }
    vs.views.push_back(std::move(v));
  }
  if (vs.reference >= vs.views.size()) detail::fail("reference", "index out of range");
  return vs;
}

/// Winner pose, every hypothesis with its vote, backend and (optionally) timing.
inline json fusion_report_to_json(const FusionResult& r, bool include_timing) {
  json hyps = json::array();
  for (const Hypothesis& h : r.hypotheses) {
    hyps.push_back({{"pose", pose_to_json(h.pose)}, {"view", h.view}, {"ranks", h.ranks}, {"vote", h.vote}});
  }
  json out = {{"backend", r.backend}, {"winner", r.winner}, {"pose", pose_to_json(r.pose)}, {"hypotheses", hyps}};
  if (include_timing) out["vote_seconds"] = r.vote_seconds;
  if (r.compare) {
    out["compare"] = {{"backend", r.compare_backend}, {"winner", r.compare->winner}, {"votes", r.compare->votes}};
  }
  return out;
}

// ---------------------------------------------------------------- point clouds

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// "xyz <m>" header, then one "x y z" line per point.
inline std::string point_cloud_to_text(const std::vector<Vec3>& pts) {
  std::string out = "xyz " + std::to_string(pts.size()) + "\n";
  for (const Vec3& p : pts) out += format_double(p.x()) + " " + format_double(p.y()) + " " + format_double(p.z()) + "\n";
  return out;
}

inline std::vector<Vec3> point_cloud_from_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> void { throw Error(ErrorKind::Parse, source + ":" + std::to_string(line_no) + ": " + what); };

  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream header(line);
    std::string tag;
    long long m = -1;
    std::string rest;
    if (!(header >> tag >> m) || tag != "xyz" || m < 0 || (header >> rest)) fail("header: expected 'xyz <count>'");
    expected = static_cast<std::size_t>(m);
    break;
  }
  if (line_no == 0 || expected == 0) {
    if (line_no == 0) fail("header: file is empty");
  }
  std::vector<Vec3> pts;
  pts.reserve(expected);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (pts.size() == expected) fail("point: more points than the header count " + std::to_string(expected));
    std::istringstream row(line);
    std::array<std::string, 3> tok;
    std::string extra;
    if (!(row >> tok[0] >> tok[1] >> tok[2]) || (row >> extra)) fail("point: expected three numbers 'x y z'");
    Vec3 p;
    for (int d = 0; d < 3; ++d) {
      const std::string& s = tok[static_cast<std::size_t>(d)];
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) fail(std::string("point.") + "xyz"[d] + ": '" + s + "' is not a finite number");
      p[d] = v;
    }
    pts.push_back(p);
  }
  if (pts.size() != expected) {
    fail("point count: header says " + std::to_string(expected) + " but file has " + std::to_string(pts.size()));
  }
  return pts;
}

inline ObjectModel load_point_cloud(const std::string& path, const std::string& name = "") {
  auto pts = point_cloud_from_text(read_text(path), path);
  if (pts.empty()) throw Error(ErrorKind::EmptyModel, path + ": point cloud has no points");
  std::string model_name = name;
  if (model_name.empty()) {
    const auto slash = path.find_last_of('/');
    model_name = slash == std::string::npos ? path : path.substr(slash + 1);
  }
  return ObjectModel(std::move(pts), model_name);
}

inline void save_point_cloud(const std::string& path, const std::vector<Vec3>& pts) { write_text(path, point_cloud_to_text(pts)); }

// ---------------------------------------------------------------- tessellation container

namespace detail {

inline constexpr char kBase64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<unsigned char>& data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < data.size(); i += 3) {
    const std::uint32_t b0 = data[i];
    const std::uint32_t b1 = i + 1 < data.size() ? data[i + 1] : 0;
    const std::uint32_t b2 = i + 2 < data.size() ? data[i + 2] : 0;
    const std::uint32_t chunk = (b0 << 16) | (b1 << 8) | b2;
    out += kBase64[(chunk >> 18) & 63];
    out += kBase64[(chunk >> 12) & 63];
    out += i + 1 < data.size() ? kBase64[(chunk >> 6) & 63] : '=';
    out += i + 2 < data.size() ? kBase64[chunk & 63] : '=';
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& text, const std::string& path) {
  if (text.size() % 4 != 0) fail(path, "base64 length is not a multiple of 4");
  auto value = [&](char c) -> std::uint32_t {
    const char* p = std::strchr(kBase64, c);
    if (c == '\0' || p == nullptr) fail(path, "invalid base64 character");
    return static_cast<std::uint32_t>(p - kBase64);
  };
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool pad2 = text[i + 2] == '=';
    const bool pad3 = text[i + 3] == '=';
    if ((pad2 && !pad3) || ((pad2 || pad3) && i + 4 != text.size())) fail(path, "misplaced base64 padding");
    const std::uint32_t chunk = (value(text[i]) << 18) | (value(text[i + 1]) << 12) | (pad2 ? 0 : value(text[i + 2]) << 6) | (pad3 ? 0 : value(text[i + 3]));
    out.push_back(static_cast<unsigned char>(chunk >> 16));
    if (!pad2) out.push_back(static_cast<unsigned char>((chunk >> 8) & 0xff));
    if (!pad3) out.push_back(static_cast<unsigned char>(chunk & 0xff));
  }
  return out;
}

inline std::vector<unsigned char> doubles_to_le_bytes(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &values[i], 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return bytes;
}

inline std::vector<double> le_bytes_to_doubles(const std::vector<unsigned char>& bytes) {
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
    std::memcpy(&values[i], &bits, 8);
  }
  return values;
}

}  // namespace detail

struct TessellationFile {
  std::string sampler = kHopfSamplerName;
  std::size_t sampler_n = 0;
  RotationBins bins;
  std::optional<std::array<AxisGrid, 3>> grids;
  std::optional<RotDistanceTable> table;
};

/**
 * @brief Versioned JSON container for bins, optional grids and an optional table.
 *
 * Bin quaternions are stored as decimal [w, x, y, z]; the table's upper
 * triangle (row-major, i < j) is stored as base64 little-endian doubles,
 * so a reload is bit-exact.
 */
inline json tessellation_to_json(const TessellationFile& f) {
  json bins = json::array();
  for (const Rotation& r : f.bins.centers()) bins.push_back(rotation_to_json(r));
  json out = {{"format", kTessellationFormat},
              {"version", kTessellationVersion},
              {"sampler", {{"name", f.sampler}, {"n", f.sampler_n}}},
              {"bins", bins},
              {"bins_digest", f.bins.digest()}};
  if (f.grids) out["grids"] = {{"x", grid_to_json((*f.grids)[0])}, {"y", grid_to_json((*f.grids)[1])}, {"z", grid_to_json((*f.grids)[2])}};
  if (f.table) {
    const auto& t = *f.table;
    std::vector<double> upper;
    upper.reserve(t.n * (t.n - 1) / 2);
    for (std::size_t i = 0; i < t.n; ++i) {
      for (std::size_t j = i + 1; j < t.n; ++j) upper.push_back(t.at(i, j));
    }
    out["table"] = {{"n", t.n},
                    {"model_name", t.model_name},
                    {"model_hash", t.model_hash},
                    {"bins_digest", t.bins_digest},
                    {"encoding", "base64-f64le-upper"},
                    {"entries", detail::base64_encode(detail::doubles_to_le_bytes(upper))}};
  }
  return out;
}

inline TessellationFile tessellation_from_json(const json& j) {
  detail::expect_keys(j, "", {"format", "version", "sampler", "bins", "bins_digest", "grids", "table"});
  if (detail::string(detail::field(j, "", "format"), "format") != kTessellationFormat) detail::fail("format", "not a tessellation file");
  const std::size_t version = detail::count(detail::field(j, "", "version"), "version");
  if (version != static_cast<std::size_t>(kTessellationVersion)) detail::fail("version", "unsupported version " + std::to_string(version));

  TessellationFile f;
  const json& sampler = detail::field(j, "", "sampler");
  detail::expect_keys(sampler, "sampler", {"name", "n"});
  f.sampler = detail::string(detail::field(sampler, "sampler", "name"), "sampler.name");
  f.sampler_n = detail::count(detail::field(sampler, "sampler", "n"), "sampler.n");

  const json& bins = detail::field(j, "", "bins");
  if (!bins.is_array() || bins.empty()) detail::fail("bins", "expected a non-empty array of quaternions");
  std::vector<Rotation> centers;
  centers.reserve(bins.size());
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const std::string path = detail::index("bins", i);
    const auto q = detail::numbers<4>(bins[i], path);
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (std::abs(norm - 1.0) > 1e-12) detail::fail(path, "bin quaternion is not unit length");
    centers.push_back(Rotation::from_unit_quaternion(Quat(q[0], q[1], q[2], q[3])));
  }
  f.bins = RotationBins(std::move(centers), f.sampler);
  const std::string digest = detail::string(detail::field(j, "", "bins_digest"), "bins_digest");
  if (digest != f.bins.digest()) detail::fail("bins_digest", "does not match the stored bins");

  if (const auto it = j.find("grids"); it != j.end()) {
    detail::expect_keys(*it, "grids", {"x", "y", "z"});
    f.grids = std::array<AxisGrid, 3>{grid_from_json(detail::field(*it, "grids", "x"), "grids.x"),
                                      grid_from_json(detail::field(*it, "grids", "y"), "grids.y"),
                                      grid_from_json(detail::field(*it, "grids", "z"), "grids.z")};
  }
  if (const auto it = j.find("table"); it != j.end()) {
    const json& t = *it;
    detail::expect_keys(t, "table", {"n", "model_name", "model_hash", "bins_digest", "encoding", "entries"});
    RotDistanceTable table;
    table.n = detail::count(detail::field(t, "table", "n"), "table.n");
    table.model_name = detail::string(detail::field(t, "table", "model_name"), "table.model_name");
    table.model_hash = detail::string(detail::field(t, "table", "model_hash"), "table.model_hash");
    table.bins_digest = detail::string(detail::field(t, "table", "bins_digest"), "table.bins_digest");
    if (detail::string(detail::field(t, "table", "encoding"), "table.encoding") != "base64-f64le-upper") detail::fail("table.encoding", "unsupported encoding");
    if (table.n != f.bins.size()) detail::fail("table.n", "table size does not match the bin count");
    if (table.bins_digest != f.bins.digest()) detail::fail("table.bins_digest", "table was built for a different bin set");
    const auto upper = detail::le_bytes_to_doubles(detail::base64_decode(detail::string(detail::field(t, "table", "entries"), "table.entries"), "table.entries"));
    if (upper.size() != table.n * (table.n - 1) / 2) detail::fail("table.entries", "wrong number of entries");
    table.entries.assign(table.n * table.n, 0.0);
    std::size_t k = 0;
    for (std::size_t i = 0; i < table.n; ++i) {
      for (std::size_t j2 = i + 1; j2 < table.n; ++j2, ++k) {
        table.entries[i * table.n + j2] = upper[k];
        table.entries[j2 * table.n + i] = upper[k];
      }
    }
    f.table = std::move(table);
  }
  return f;
}

inline TessellationFile load_tessellation(const std::string& path) {
  const json j = load_json(path);
  try {
    return tessellation_from_json(j);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.message());
  }
}

/// Returns the file's table after checking it was built from `model` (content hash) and these bins.
inline const RotDistanceTable& table_for_model(const TessellationFile& f, const ObjectModel& model) {
  if (!f.table) throw Error(ErrorKind::TableMismatch, "tessellation file has no distance table");
  if (f.table->model_hash != model.hash()) {
    throw Error(ErrorKind::TableMismatch, "table.model_hash: table was built from model '" + f.table->model_name + "' (" + f.table->model_hash +
                                              ") but the given model hashes to " + model.hash());
  }
  check_table(*f.table, f.bins);
  return *f.table;
}

// ---------------------------------------------------------------- metrics

/// "threshold,accuracy" rows at resolution + 1 thresholds.
inline std::string pck_curve_csv(const PckCurve& curve, std::size_t resolution) {
  std::string out = "threshold,accuracy\n";
  for (const auto& [tau, acc] : curve.sample(resolution)) out += format_double(tau) + "," + format_double(acc) + "\n";
  return out;
}

inline json pck_summary_json(const PckCurve& curve) {
  return {{"mpck", curve.mpck}, {"tau_max", curve.tau_max}, {"count", curve.samples.size()}};
}

// ---------------------------------------------------------------- experiments

inline json shape_to_json(const ShapeSpec& shape) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, BoxShape>) return {{"type", "box"}, {"width", s.width}, {"height", s.height}, {"depth", s.depth}};
        else if constexpr (std::is_same_v<T, CylinderShape>) return {{"type", "cylinder"}, {"radius", s.radius}, {"height", s.height}};
        else return {{"type", "blob"}, {"seed", s.seed}, {"radius", s.radius}};
      },
      shape);
}

inline ShapeSpec shape_from_json(const json& j, const std::string& path) {
  detail::expect_object(j, path);
  const std::string type = detail::string(detail::field(j, path, "type"), detail::join(path, "type"));
  if (type == "box") {
    detail::expect_keys(j, path, {"type", "width", "height", "depth"});
    BoxShape b;
    detail::optional_field(j, path, "width", b.width, detail::number);
    detail::optional_field(j, path, "height", b.height, detail::number);
    detail::optional_field(j, path, "depth", b.depth, detail::number);
    return b;
  }
  if (type == "cylinder") {
    detail::expect_keys(j, path, {"type", "radius", "height"});
    CylinderShape c;
    detail::optional_field(j, path, "radius", c.radius, detail::number);
    detail::optional_field(j, path, "height", c.height, detail::number);
    return c;
  }
  if (type == "blob") {
    detail::expect_keys(j, path, {"type", "seed", "radius"});
    BlobShape b;
    detail::optional_field(j, path, "seed", b.seed, detail::seed);
    detail::optional_field(j, path, "radius", b.radius, detail::number);
    return b;
  }
  detail::fail(detail::join(path, "type"), "unknown shape '" + type + "' (box, cylinder or blob)");
}

inline BackendKind backend_from_string(const std::string& name, const std::string& path) {
  if (name == "exact") return BackendKind::Exact;
  if (name == "decoupled") return BackendKind::Decoupled;
  if (name == "table") return BackendKind::Table;
  detail::fail(path, "unknown backend '" + name + "' (exact, decoupled or table)");
}

inline json experiment_config_to_json(const ExperimentConfig& c) {
  json out = {{"model", {{"shape", shape_to_json(c.model.shape)}, {"points", c.model.points}, {"table_points", c.model.table_points}}},
              {"noise",
               {{"rot_kappa", c.noise.rot_kappa},
                {"trans_sigma", c.noise.trans_sigma},
                {"confusion_p", c.noise.confusion_p},
                {"confidence_jitter", c.noise.confidence_jitter},
                {"seed", c.noise.seed}}},
              {"codec", codec_settings_to_json(c.codec)},
              {"n_views", c.n_views},
              {"k", c.k},
              {"top_k_max", c.top_k_max},
              {"sigma", c.sigma},
              {"backend", to_string(c.backend)},
              {"table_bins", c.table_bins},
              {"n_trials", c.n_trials},
              {"tau_max", c.tau_max},
              {"exclude_same_view", c.exclude_same_view},
              {"record_timings", c.record_timings},
              {"seeds", c.seeds}};
  if (c.compare_backend) out["compare_backend"] = to_string(*c.compare_backend);
  return out;
}

/// Experiment configuration; absent fields keep their defaults, unknown fields are rejected.
inline ExperimentConfig experiment_config_from_json(const json& j) {
  detail::expect_keys(j, "", {"model", "noise", "codec", "n_views", "k", "top_k_max", "sigma", "backend", "compare_backend", "table_bins",
                              "n_trials", "tau_max", "exclude_same_view", "record_timings", "seeds"});
  ExperimentConfig c;
  if (const auto it = j.find("model"); it != j.end()) {
    detail::expect_keys(*it, "model", {"shape", "points", "table_points"});
    detail::optional_field(*it, "model", "shape", c.model.shape, shape_from_json);
    detail::optional_field(*it, "model", "points", c.model.points, detail::count);
    detail::optional_field(*it, "model", "table_points", c.model.table_points, detail::count);
  }
  if (const auto it = j.find("noise"); it != j.end()) {
    detail::expect_keys(*it, "noise", {"rot_kappa", "trans_sigma", "confusion_p", "confidence_jitter", "seed"});
    detail::optional_field(*it, "noise", "rot_kappa", c.noise.rot_kappa, detail::number);
    detail::optional_field(*it, "noise", "trans_sigma", c.noise.trans_sigma, detail::number);
    detail::optional_field(*it, "noise", "confusion_p", c.noise.confusion_p, detail::number);
    detail::optional_field(*it, "noise", "confidence_jitter", c.noise.confidence_jitter, detail::number);
    detail::optional_field(*it, "noise", "seed", c.noise.seed, detail::seed);
  }
  detail::optional_field(j, "", "codec", c.codec, codec_settings_from_json);
  detail::optional_field(j, "", "n_views", c.n_views, detail::count);
  detail::optional_field(j, "", "k", c.k, detail::count);
  detail::optional_field(j, "", "top_k_max", c.top_k_max, detail::count);
  detail::optional_field(j, "", "sigma", c.sigma, detail::number);
  if (const auto it = j.find("backend"); it != j.end()) c.backend = backend_from_string(detail::string(*it, "backend"), "backend");
  if (const auto it = j.find("compare_backend"); it != j.end() && !it->is_null()) {
    c.compare_backend = backend_from_string(detail::string(*it, "compare_backend"), "compare_backend");
  }
  detail::optional_field(j, "", "table_bins", c.table_bins, detail::count);
  detail::optional_field(j, "", "n_trials", c.n_trials, detail::count);
  detail::optional_field(j, "", "tau_max", c.tau_max, detail::number);
  detail::optional_field(j, "", "exclude_same_view", c.exclude_same_view, detail::boolean);
  detail::optional_field(j, "", "record_timings", c.record_timings, detail::boolean);
  if (const auto it = j.find("seeds"); it != j.end()) {
    if (!it->is_array()) detail::fail("seeds", "expected an array of seeds");
    for (std::size_t i = 0; i < it->size(); ++i) c.seeds.push_back(detail::seed((*it)[i], detail::index("seeds", i)));
  }
  try {
    c.validate();
    (void)c.codec.build();
  } catch (const Error& e) {
    throw Error(ErrorKind::InvalidConfig, e.message());
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  const json j = load_json(path);
  try {
    return experiment_config_from_json(j);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.message());
  }
}

/// Per-seed summaries plus cross-seed aggregates; timings only when requested so reports stay reproducible.
inline json experiment_report_to_json(const ExperimentConfig& cfg, const ExperimentResources& res, const std::vector<ExperimentReport>& reports) {
  json seeds = json::array();
  double single_sum = 0.0, fused_sum = 0.0;
  std::size_t improved = 0;
  for (const ExperimentReport& r : reports) {
    json trials = json::array();
    for (const TrialRecord& t : r.trials) {
      json rec = {{"gt", pose_to_json(t.gt_reference)},
                  {"single", t.single_error},
                  {"top_k", t.top_k_errors},
                  {"fused", t.fused_error},
                  {"hypotheses", t.hypotheses}};
      if (t.winner_agrees) rec["winner_agrees"] = *t.winner_agrees;
      if (cfg.record_timings) {
        rec["vote_seconds"] = t.vote_seconds;
        if (cfg.compare_backend) rec["compare_seconds"] = t.compare_seconds;
      }
      trials.push_back(rec);
    }
    json entry = {{"seed", r.seed}, {"single_mpck", r.single_mpck}, {"top_k_mpck", r.top_k_mpck}, {"fused_mpck", r.fused_mpck}, {"trials", trials}};
    if (r.winner_agreement) entry["winner_agreement"] = *r.winner_agreement;
    seeds.push_back(entry);
    single_sum += r.single_mpck;
    fused_sum += r.fused_mpck;
    if (r.fused_mpck > r.single_mpck) ++improved;
  }
  const double n = static_cast<double>(std::max<std::size_t>(reports.size(), 1));
  json summary = {{"mean_single_mpck", single_sum / n},
                  {"mean_fused_mpck", fused_sum / n},
                  {"mean_improvement", (fused_sum - single_sum) / n},
                  {"seeds_improved", improved},
                  {"seeds", reports.size()}};
  json out = {{"config", experiment_config_to_json(cfg)},
              {"models",
               {{"eval", {{"name", res.eval.model.name()}, {"hash", res.eval.model.hash()}, {"points", res.eval.model.size()}, {"symmetry_residual", res.eval.symmetry_residual}}},
                {"voting", {{"name", res.voting.model.name()}, {"hash", res.voting.model.hash()}, {"points", res.voting.model.size()}, {"symmetry_residual", res.voting.symmetry_residual}}}}},
              {"summary", summary},
              {"runs", seeds}};
  if (cfg.record_timings) out["timings"] = {{"table_seconds", res.table_seconds}};
  return out;
}

/// One row per trial: seed, trial, single, top1..topK, fused.
inline std::string experiment_trials_csv(const std::vector<ExperimentReport>& reports, std::size_t top_k_max) {
  std::string out = "seed,trial,single";
  for (std::size_t k = 1; k <= top_k_max; ++k) out += ",top" + std::to_string(k);
  out += ",fused\n";
  for (const ExperimentReport& r : reports) {
    for (std::size_t t = 0; t < r.trials.size(); ++t) {
      const TrialRecord& rec = r.trials[t];
      out += std::to_string(r.seed) + "," + std::to_string(t) + "," + format_double(rec.single_error);
      for (double e : rec.top_k_errors) out += "," + format_double(e);
      out += "," + format_double(rec.fused_error) + "\n";
    }
  }
  return out;
}

}  // namespace posefuse::io
