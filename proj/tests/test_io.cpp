#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"

using namespace posefuse;
using posefuse::testing::random_points;
using posefuse::testing::random_pose;
using io::json;

namespace {

std::string parse_error(const std::function<void()>& call) {
  try {
    call();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "expected a parse error";
  return {};
}

const CodecConfig& codec() {
  static const CodecConfig cfg = CodecSettings{}.build();
  return cfg;
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / ("posefuse_io_" + name)).string(); }

}  // namespace

TEST(PoseJson, RoundTripIsBitExact) {
  Rng rng(601);
  for (int i = 0; i < 500; ++i) {
    const Pose p = random_pose(rng, 3.0);
    const json j = json::parse(io::dump(io::pose_to_json(p)));
    const Pose back = io::pose_from_json(j, "pose");
    EXPECT_EQ(back.t, p.t);
    EXPECT_LT(geodesic_distance(back.r, p.r), 1e-12);
    EXPECT_EQ(back.r.quaternion().coeffs(), p.r.quaternion().coeffs());
  }
}

TEST(PoseJson, QuaternionNormChecks) {
  io::Warnings warnings;
  const json slightly_off = {{"q", {1.0 + 1e-7, 0.0, 0.0, 0.0}}, {"t", {0.0, 0.0, 1.0}}};
  const Pose p = io::pose_from_json(slightly_off, "pose", &warnings);
  EXPECT_EQ(p.r, Rotation::identity());
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("pose.q"), std::string::npos);

  warnings.clear();
  io::pose_from_json({{"q", {1.0 + 1e-10, 0.0, 0.0, 0.0}}, {"t", {0.0, 0.0, 1.0}}}, "pose", &warnings);
  EXPECT_TRUE(warnings.empty());

  const std::string msg = parse_error([] { io::pose_from_json({{"q", {1.1, 0.0, 0.0, 0.0}}, {"t", {0, 0, 0}}}, "views[2].camera_pose"); });
  EXPECT_NE(msg.find("views[2].camera_pose.q"), std::string::npos) << msg;
}

TEST(PoseJson, FieldErrorsNameTheField) {
  EXPECT_NE(parse_error([] { io::pose_from_json({{"q", {1, 0, 0, 0}}}, "gt"); }).find("gt.t: missing"), std::string::npos);
  EXPECT_NE(parse_error([] { io::pose_from_json({{"q", {1, 0, 0}}, {"t", {0, 0, 0}}}, "gt"); }).find("gt.q"), std::string::npos);
  EXPECT_NE(parse_error([] { io::pose_from_json({{"q", {1, 0, 0, 0}}, {"t", {0, "a", 0}}}, "gt"); }).find("gt.t[1]"), std::string::npos);
  EXPECT_NE(parse_error([] { io::pose_from_json({{"q", {1, 0, 0, 0}}, {"t", {0, 0, 0}}, {"s", 1}}, "gt"); }).find("gt.s: unknown"), std::string::npos);
}

TEST(PoseJson, PoseListForms) {
  const std::vector<Pose> poses{Pose{}, Pose{Rotation::from_axis_angle(Vec3::UnitX(), 0.3), Vec3(1, 2, 3)}};
  const json wrapped = io::poses_to_json(poses);
  EXPECT_EQ(io::poses_from_json(wrapped, ""), poses);
  EXPECT_EQ(io::poses_from_json(wrapped["poses"], ""), poses);
  EXPECT_EQ(io::poses_from_json(io::pose_to_json(poses[1]), "").size(), 1u);
}

TEST(JsonText, SyntaxErrorsReportTheLine) {
  const std::string text = "{\n  \"a\": 1,\n  \"b\": [1, 2,, 3]\n}\n";
  const std::string msg = parse_error([&] { io::parse_json(text, "file.json"); });
  EXPECT_NE(msg.find("file.json:3:"), std::string::npos) << msg;
}

TEST(CodeJson, RoundTripIsExact) {
  Rng rng(603);
  const GeneratedModel cyl = generate_model(CylinderShape{}, 200);
  for (int i = 0; i < 100; ++i) {
    Pose gt = random_pose(rng, 0.15);
    gt.t.z() += 1.0;
    const BinDeltaCode code = noisy_predict(gt, NoiseSpec{}, codec(), cyl.symmetry, rng);
    const json j = json::parse(io::dump(io::code_to_json(code)));
    const BinDeltaCode back = io::code_from_json(j, codec(), "code");
    EXPECT_EQ(back.b_rot, code.b_rot);
    EXPECT_EQ(back.b_t, code.b_t);
    EXPECT_EQ(back.d_t, code.d_t);
    for (std::size_t b = 0; b < code.d_rot.size(); ++b) {
      EXPECT_LT(geodesic_distance(back.d_rot[b], code.d_rot[b]), 1e-12);
    }
    EXPECT_EQ(decode(back, codec()), decode(code, codec()));
  }
}

TEST(CodeJson, BinOutOfRange) {
  json j = io::code_to_json(encode(Pose{}, codec()));
  j["z"][1]["bin"] = 40;
  const std::string msg = parse_error([&] { io::code_from_json(j, codec(), "views[0].code"); });
  EXPECT_NE(msg.find("views[0].code.z[1].bin"), std::string::npos) << msg;
}

TEST(ViewSetJson, RoundTripAndValidation) {
  ViewSet vs;
  vs.reference = 1;
  vs.views.push_back({Pose{Rotation::from_axis_angle(Vec3::UnitY(), 0.2), Vec3(0.1, 0.2, 0.3)}, encode(Pose{}, codec()), {}});
  vs.views.push_back({Pose{}, std::nullopt, {Pose{}, Pose{Rotation::identity(), Vec3(0, 0, 1)}}});
  const std::string text = io::dump(io::viewset_to_json(vs));
  const ViewSet back = io::viewset_from_json(json::parse(text), codec());
  EXPECT_EQ(back.reference, 1u);
  ASSERT_EQ(back.views.size(), 2u);
  EXPECT_EQ(back.views[0].camera_pose, vs.views[0].camera_pose);
  EXPECT_EQ(*back.views[0].code, *vs.views[0].code);
  EXPECT_EQ(back.views[1].hypotheses, vs.views[1].hypotheses);
  EXPECT_EQ(io::dump(io::viewset_to_json(back)), text);

  json bad = json::parse(text);
  bad["reference"] = 5;
  EXPECT_NE(parse_error([&] { io::viewset_from_json(bad, codec()); }).find("reference"), std::string::npos);
  bad = json::parse(text);
  bad["views"][1]["code"] = bad["views"][0]["code"];
  EXPECT_NE(parse_error([&] { io::viewset_from_json(bad, codec()); }).find("views[1]"), std::string::npos);
}

TEST(PointCloud, RoundTripIsBitExact) {
  Rng rng(605);
  auto pts = random_points(rng, 300);
  pts.emplace_back(1e-300, -0.1, 12345.678901234567);
  const std::string text = io::point_cloud_to_text(pts);
  EXPECT_EQ(text.substr(0, 8), "xyz 301\n");
  EXPECT_EQ(io::point_cloud_from_text(text, "mem"), pts);
  const std::string path = temp_path("cloud.xyz");
  io::save_point_cloud(path, pts);
  const ObjectModel model = io::load_point_cloud(path);
  EXPECT_EQ(model.points(), pts);
  EXPECT_EQ(model.name(), "posefuse_io_cloud.xyz");
  std::filesystem::remove(path);
}

TEST(PointCloud, ErrorsNameTheLine) {
  EXPECT_NE(parse_error([] { io::point_cloud_from_text("xyz 2\n0 0 0\n1 nan 0\n", "a.xyz"); }).find("a.xyz:3:"), std::string::npos);
  EXPECT_NE(parse_error([] { io::point_cloud_from_text("xyz 2\n0 0 0\n1 x 0\n", "a.xyz"); }).find("point.y"), std::string::npos);
  EXPECT_NE(parse_error([] { io::point_cloud_from_text("xyz 3\n0 0 0\n1 1 0\n", "a.xyz"); }).find("header says 3"), std::string::npos);
  EXPECT_NE(parse_error([] { io::point_cloud_from_text("xyz 1\n0 0 0\n1 1 0\n", "a.xyz"); }).find("a.xyz:3:"), std::string::npos);
  EXPECT_NE(parse_error([] { io::point_cloud_from_text("points 3\n", "a.xyz"); }).find("a.xyz:1: header"), std::string::npos);
  EXPECT_NE(parse_error([] { io::point_cloud_from_text("xyz 1\n0 0\n", "a.xyz"); }).find("a.xyz:2:"), std::string::npos);
  EXPECT_THROW(io::point_cloud_from_text("", "a.xyz"), Error);
}

TEST(Tessellation, ReloadIsBitExact) {
  Rng rng(607);
  const ObjectModel model(random_points(rng, 50));
  io::TessellationFile f;
  f.sampler_n = 120;
  f.bins = sample_so3_uniform(120);
  f.grids = std::array<AxisGrid, 3>{make_axis_grid(10, -0.2, 0.2), make_axis_grid(10, -0.2, 0.2), make_axis_grid(40, 0.5, 4.0)};
  f.table = precompute_table(f.bins, model);
  const std::string text = io::dump(io::tessellation_to_json(f));
  const io::TessellationFile back = io::tessellation_from_json(json::parse(text));
  EXPECT_EQ(back.bins.centers(), f.bins.centers());
  EXPECT_EQ(back.bins.digest(), f.bins.digest());
  EXPECT_EQ(back.sampler, f.sampler);
  EXPECT_EQ(back.sampler_n, 120u);
  EXPECT_EQ(*back.grids, *f.grids);
  ASSERT_TRUE(back.table.has_value());
  EXPECT_EQ(back.table->entries, f.table->entries);
  EXPECT_EQ(back.table->model_hash, model.hash());
  EXPECT_EQ(io::dump(io::tessellation_to_json(back)), text);
  EXPECT_EQ(&io::table_for_model(back, model), &*back.table);
}

TEST(Tessellation, RefusesMismatchedModel) {
  Rng rng(609);
  const ObjectModel model(random_points(rng, 50));
  const ObjectModel other(random_points(rng, 50));
  io::TessellationFile f;
  f.bins = sample_so3_uniform(20);
  f.table = precompute_table(f.bins, model);
  const io::TessellationFile back = io::tessellation_from_json(io::tessellation_to_json(f));
  try {
    io::table_for_model(back, other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TableMismatch);
    EXPECT_NE(std::string(e.what()).find("model_hash"), std::string::npos);
  }
  io::TessellationFile no_table;
  no_table.bins = f.bins;
  EXPECT_THROW(io::table_for_model(no_table, model), Error);
}

TEST(Tessellation, DetectsCorruption) {
  io::TessellationFile f;
  f.bins = sample_so3_uniform(10);
  json j = io::tessellation_to_json(f);
  json tampered = j;
  tampered["bins"][3][0] = tampered["bins"][3][0].get<double>() * 0.5;
  EXPECT_NE(parse_error([&] { io::tessellation_from_json(tampered); }).find("bins[3]"), std::string::npos);
  tampered = j;
  tampered["version"] = 2;
  EXPECT_NE(parse_error([&] { io::tessellation_from_json(tampered); }).find("version"), std::string::npos);
  tampered = j;
  tampered["bins_digest"] = "0000000000000000";
  EXPECT_NE(parse_error([&] { io::tessellation_from_json(tampered); }).find("bins_digest"), std::string::npos);
}

TEST(Base64, RoundTripAllLengths) {
  for (std::size_t n = 0; n < 40; ++n) {
    std::vector<unsigned char> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<unsigned char>(i * 37 + 11);
    EXPECT_EQ(io::detail::base64_decode(io::detail::base64_encode(data), "x"), data);
  }
  EXPECT_EQ(io::detail::base64_encode({'M', 'a', 'n'}), "TWFu");
  EXPECT_EQ(io::detail::base64_encode({'M', 'a'}), "TWE=");
  EXPECT_THROW(io::detail::base64_decode("TW!u", "x"), Error);
}

TEST(ExperimentConfigJson, RoundTripAndDefaults) {
  ExperimentConfig cfg;
  cfg.model.shape = BoxShape{0.1, 0.1, 0.05};
  cfg.compare_backend = BackendKind::Exact;
  cfg.seeds = {1, 2, 18446744073709551615ULL};
  cfg.noise.confusion_p = 0.25;
  const std::string text = io::dump(io::experiment_config_to_json(cfg));
  const ExperimentConfig back = io::experiment_config_from_json(json::parse(text));
  EXPECT_EQ(io::dump(io::experiment_config_to_json(back)), text);
  EXPECT_EQ(back.seeds, cfg.seeds);

  const ExperimentConfig defaults = io::experiment_config_from_json(json::object());
  EXPECT_EQ(io::dump(io::experiment_config_to_json(defaults)), io::dump(io::experiment_config_to_json(ExperimentConfig{})));
}

TEST(ExperimentConfigJson, Errors) {
  EXPECT_NE(parse_error([] { io::experiment_config_from_json({{"noise", {{"sigma", 1}}}}); }).find("noise.sigma: unknown"), std::string::npos);
  EXPECT_NE(parse_error([] { io::experiment_config_from_json({{"model", {{"shape", {{"type", "cone"}}}}}}); }).find("model.shape.type"), std::string::npos);
  EXPECT_NE(parse_error([] { io::experiment_config_from_json({{"backend", "fast"}}); }).find("backend"), std::string::npos);
  EXPECT_NE(parse_error([] { io::experiment_config_from_json({{"n_trials", -1}}); }).find("n_trials"), std::string::npos);
  try {
    io::experiment_config_from_json({{"noise", {{"confusion_p", 2.0}}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(CodecSettingsJson, PartialOverride) {
  const CodecSettings s = io::codec_settings_from_json({{"rotation_bins", 100}, {"grids", {{"z", {{"bins", 20}, {"min", 0.2}, {"max", 0.8}}}}}}, "");
  EXPECT_EQ(s.rotation_bins, 100u);
  EXPECT_EQ(s.grids[2].m, 20u);
  EXPECT_EQ(s.grids[0].m, 10u);
  EXPECT_NE(parse_error([] { io::codec_settings_from_json({{"grids", {{"x", {{"bins", 5}, {"min", 1.0}, {"max", 0.0}}}}}}, ""); }).find("grids.x"),
            std::string::npos);
}

TEST(Metrics, CurveCsv) {
  const PckCurve curve = mpck(std::vector<double>{0.0, 0.05}, 0.1);
  EXPECT_EQ(io::pck_curve_csv(curve, 2), "threshold,accuracy\n0,0.5\n0.050000000000000003,1\n0.10000000000000001,1\n");
  EXPECT_EQ(io::pck_summary_json(curve)["count"], 2);
}

TEST(ExperimentReportJson, DeterministicWithoutTimings) {
  ExperimentConfig cfg;
  cfg.model.points = 100;
  cfg.model.table_points = 72;
  cfg.table_bins = 30;
  cfg.n_trials = 4;
  cfg.n_views = 2;
  cfg.k = 2;
  cfg.seeds = {1, 2};
  const auto run = [&] {
    const ExperimentResources res = prepare_resources(cfg);
    return io::dump(io::experiment_report_to_json(cfg, res, run_seeds(cfg, res)));
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  const json j = json::parse(a);
  EXPECT_EQ(j["summary"]["seeds"], 2);
  EXPECT_EQ(j["runs"].size(), 2u);
  EXPECT_FALSE(j.contains("timings"));
  EXPECT_EQ(j["runs"][0]["trials"].size(), 4u);
}
