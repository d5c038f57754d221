#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace posefuse;
using posefuse::testing::brute_nearest_bin;
using posefuse::testing::random_pose;

namespace {

const CodecConfig& codec() {
  static const CodecConfig cfg = default_codec_config(60);
  return cfg;
}

std::size_t nonzero(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return x != 0.0; }));
}

}  // namespace

TEST(CodecConfig, DefaultsFollowTheRgbdSetup) {
  // binning scores 0.7 / 0.1 and 10 bins over [-0.2, 0.2] m per axis
  const CodecConfig& cfg = codec();
  EXPECT_EQ(cfg.theta1, 0.7);
  EXPECT_EQ(cfg.theta2, 0.1);
  for (const AxisGrid& g : cfg.grids) {
    EXPECT_EQ(g.m, 10u);
    EXPECT_EQ(g.s_min, -0.2);
    EXPECT_EQ(g.s_max, 0.2);
  }
  EXPECT_EQ(cfg.bins.size(), 60u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(CodecConfig, ValidateRejectsBadSettings) {
  CodecConfig cfg = codec();
  cfg.theta2 = cfg.theta1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = codec();
  cfg.k_rot = 61;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = codec();
  cfg.k_axis = 11;
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Encode, SparseTargetsOnNearestBins) {
  Rng rng(201);
  const CodecConfig& cfg = codec();
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng, 0.15);
    const BinDeltaCode code = encode(p, cfg);
    EXPECT_EQ(nonzero(code.b_rot), cfg.k_rot);
    const std::size_t top = brute_nearest_bin(cfg.bins, p.r);
    EXPECT_EQ(code.b_rot[top], cfg.theta1);
    EXPECT_EQ(std::count(code.b_rot.begin(), code.b_rot.end(), cfg.theta2), static_cast<long>(cfg.k_rot - 1));
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_EQ(nonzero(code.b_t[a]), cfg.k_axis);
      std::size_t best = 0;
      for (std::size_t j = 1; j < cfg.grids[a].m; ++j) {
        if (std::abs(p.t[a] - cfg.grids[a].center(j)) < std::abs(p.t[a] - cfg.grids[a].center(best))) best = j;
      }
      EXPECT_EQ(code.b_t[a][best], cfg.theta1);
    }
    // every encoded bin reconstructs the pose on its own
    for (std::size_t b = 0; b < cfg.bins.size(); ++b) {
      if (code.b_rot[b] == 0.0) {
        EXPECT_EQ(code.d_rot[b], Rotation::identity());
        continue;
      }
      EXPECT_LT(geodesic_distance(decode_rotation_bin(code, cfg, b), p.r), 1e-9);
    }
  }
}

TEST(Decode, RoundTripInRange) {
  Rng rng(203);
  const CodecConfig& cfg = codec();
  for (int i = 0; i < 2000; ++i) {
    const Pose p = random_pose(rng, 0.2);
    const Pose q = decode(encode(p, cfg), cfg);
    EXPECT_LT(geodesic_distance(p.r, q.r), 1e-9);
    EXPECT_LT((p.t - q.t).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Decode, RoundTripOutOfRange) {
  Rng rng(205);
  const CodecConfig& cfg = codec();
  for (int i = 0; i < 500; ++i) {
    Pose p = random_pose(rng, 0.2);
    p.t = Vec3((i % 2 == 0 ? 1.0 : -1.0) * rng.uniform(0.2, 50.0), rng.uniform(0.2, 3.0), -rng.uniform(0.2, 3.0));
    const BinDeltaCode code = encode(p, cfg);
    EXPECT_EQ(code.b_t[0][p.t.x() < 0 ? 0 : 9], cfg.theta1);
    EXPECT_EQ(code.b_t[1][9], cfg.theta1);
    EXPECT_EQ(code.b_t[2][0], cfg.theta1);
    const Pose q = decode(code, cfg);
    EXPECT_LT((p.t - q.t).cwiseAbs().maxCoeff(), 1e-12);
  }
  // center + (x - center) is exact whenever x and the center are within a factor of two
  Pose p;
  p.t = Vec3(0.25, -0.3, 0.33);
  EXPECT_EQ(decode(encode(p, cfg), cfg).t, p.t);
}

TEST(Decode, ConfidenceTiesAndNaN) {
  const CodecConfig& cfg = codec();
  BinDeltaCode code = encode(Pose{}, cfg);
  std::fill(code.b_rot.begin(), code.b_rot.end(), std::nan(""));
  code.b_rot[7] = 0.2;
  code.d_rot[7] = Rotation::from_axis_angle(Vec3::UnitY(), 0.1);
  EXPECT_EQ(decode(code, cfg).r, code.d_rot[7] * cfg.bins[7]);
  // equal confidences resolve to the lower bin
  code.b_rot.assign(cfg.bins.size(), 0.5);
  EXPECT_EQ(decode(code, cfg).r, code.d_rot[0] * cfg.bins[0]);
}

TEST(Decode, Errors) {
  const CodecConfig& cfg = codec();
  BinDeltaCode code = encode(Pose{}, cfg);
  code.b_t[1].assign(code.b_t[1].size(), std::nan(""));
  try {
    decode(code, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyCode);
    EXPECT_NE(std::string(e.what()).find("y"), std::string::npos);
  }
  code = encode(Pose{}, cfg);
  code.b_rot.pop_back();
  EXPECT_THROW(decode(code, cfg), Error);
}

TEST(TopK, EnumeratesAllCombinations) {
  Rng rng(207);
  const CodecConfig& cfg = codec();
  for (int i = 0; i < 50; ++i) {
    const Pose p = random_pose(rng, 0.15);
    BinDeltaCode code = encode(p, cfg);
    for (double& b : code.b_rot) b *= rng.uniform(0.8, 1.2);
    for (std::size_t k = 1; k <= 3; ++k) {
      const auto hs = top_k_hypotheses(code, cfg, k);
      ASSERT_EQ(hs.size(), k * k * k * k);
      std::set<std::array<std::size_t, 4>> tuples;
      for (std::size_t j = 0; j < hs.size(); ++j) {
        tuples.insert(hs[j].ranks);
        for (std::size_t s = 0; s < 4; ++s) EXPECT_LT(hs[j].ranks[s], k);
        if (j > 0) {
          EXPECT_GE(hs[j - 1].score, hs[j].score);
        }
        const double expected = code.b_rot[hs[j].bins[kRot]] * code.b_t[0][hs[j].bins[kX]] * code.b_t[1][hs[j].bins[kY]] * code.b_t[2][hs[j].bins[kZ]];
        EXPECT_EQ(hs[j].score, expected);
      }
      EXPECT_EQ(tuples.size(), hs.size());
      EXPECT_EQ(hs.front().ranks, (std::array<std::size_t, 4>{0, 0, 0, 0}));
      EXPECT_EQ(hs.front().pose, decode(code, cfg));
    }
  }
}

TEST(TopK, DefaultKGivesEightyOnePerView) {
  const CodecConfig& cfg = codec();
  EXPECT_EQ(top_k_hypotheses(encode(Pose{}, cfg), cfg, 3).size(), 81u);
  EXPECT_THROW(top_k_hypotheses(encode(Pose{}, cfg), cfg, 11), Error);
  EXPECT_THROW(top_k_hypotheses(encode(Pose{}, cfg), cfg, 0), Error);
}
