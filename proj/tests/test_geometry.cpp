#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include <Eigen/Geometry>

#include "geomshot/error.hpp"
#include "geomshot/geometry.hpp"
#include "geomshot/rng.hpp"

using namespace geomshot;

namespace {

HandKeypoints random_hand(std::uint64_t seed) {
  Rng rng(seed);
  HandKeypoints h;
  for (int i = 0; i < kNumKeypoints; ++i)
    for (int d = 0; d < 3; ++d) h(i, d) = rng.uniform(-1.0, 1.0);
  return h;
}

// Scalar angle computation on plain arrays, written independently of the
// library code.
double scalar_angle(const HandKeypoints& h, int a, int j, int c) {
  double u[3], v[3];
  for (int d = 0; d < 3; ++d) {
    u[d] = h(a, d) - h(j, d);
    v[d] = h(c, d) - h(j, d);
  }
  const double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  const double nu = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
  const double nv = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  double r = dot / (nu * nv);
  if (r > 1) r = 1;
  if (r < -1) r = -1;
  return std::acos(r);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("wrist_center") {
  HandKeypoints h;
  for (int i = 0; i < kNumKeypoints; ++i) h.row(i) << 3, 4, 5;
  CHECK(wrist_center(h).isZero(0.0));

  HandKeypoints g = random_hand(1);
  g.row(0) << 1, 1, 1;
  g.row(5) << 2, 3, 4;
  const HandKeypoints c = wrist_center(g);
  CHECK(c(5, 0) == 1.0);
  CHECK(c(5, 1) == 2.0);
  CHECK(c(5, 2) == 3.0);
  CHECK(c.row(0).isZero(0.0));
  CHECK(wrist_center(c) == c);

  HandKeypoints bad = random_hand(2);
  bad(7, 1) = std::nan("");
  CHECK_THROWS_AS(wrist_center(bad), Error);
  try {
    wrist_center(bad);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidKeypoints);
  }
}

TEST_CASE("scale_normalize") {
  // Two clusters at distance 4, the rest strictly between them.
  HandKeypoints h = HandKeypoints::Zero();
  h.row(20) << 4, 0, 0;
  for (int i = 1; i < 20; ++i) h.row(i) << 0.1 * i, 0.05, 0;
  const HandKeypoints n = scale_normalize(h);
  CHECK(n.isApprox(h / 4.0, 1e-15));
  CHECK(max_pairwise_distance(n) == doctest::Approx(1.0).epsilon(1e-12));

  const HandKeypoints r = wrist_center(random_hand(3));
  CHECK(std::abs(max_pairwise_distance(scale_normalize(r)) - 1.0) < 1e-12);
  CHECK((scale_normalize(r * 7.25) - scale_normalize(r)).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(scale_normalize(HandKeypoints::Zero()), Error);
  HandKeypoints tiny = HandKeypoints::Zero();
  tiny(3, 0) = 1e-13;
  try {
    scale_normalize(tiny);
    FAIL("expected DegenerateHand");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateHand);
  }
}

TEST_CASE("raw_features on a unit segment") {
  // Keypoint i at (i/20, 0, 0) shifted by (2, -1, 3): after centring and
  // scaling the x coordinate is i/20 and the rest vanish.
  HandKeypoints h;
  for (int i = 0; i < kNumKeypoints; ++i) h.row(i) << 2.0 + i / 20.0, -1.0, 3.0;
  const FeatureVector f = raw_features(h);
  REQUIRE(f.values.size() == 63u);
  CHECK(f.kind == FeatureKind::Raw);
  for (int i = 0; i < kNumKeypoints; ++i) {
    CHECK(f.values[3 * i] == doctest::Approx(i / 20.0).epsilon(1e-14));
    CHECK(std::abs(f.values[3 * i + 1]) < 1e-15);
    CHECK(std::abs(f.values[3 * i + 2]) < 1e-15);
  }
}

TEST_CASE("raw_features matches a scalar re-implementation") {
  const HandKeypoints h = random_hand(4);
  double pts[21][3];
  for (int i = 0; i < 21; ++i)
    for (int d = 0; d < 3; ++d) pts[i][d] = h(i, d) - h(0, d);
  double dmax = 0;
  for (int i = 0; i < 21; ++i)
    for (int j = i + 1; j < 21; ++j) {
      double s = 0;
      for (int d = 0; d < 3; ++d) s += (pts[i][d] - pts[j][d]) * (pts[i][d] - pts[j][d]);
      dmax = std::max(dmax, std::sqrt(s));
    }
  const FeatureVector f = raw_features(h);
  for (int i = 0; i < 21; ++i)
    for (int d = 0; d < 3; ++d) CHECK(std::abs(f.values[3 * i + d] - pts[i][d] / dmax) < 1e-15);
  CHECK(f.values[0] == 0.0);
  CHECK(f.values[1] == 0.0);
  CHECK(f.values[2] == 0.0);
}

TEST_CASE("raw_features invariances") {
  const HandKeypoints h = random_hand(5);
  const auto base = raw_features(h).values;

  HandKeypoints shifted = h;
  shifted.rowwise() += Eigen::RowVector3d(3.5, -2.0, 11.0);
  CHECK(max_abs_diff(raw_features(shifted).values, base) < 1e-14);

  CHECK(max_abs_diff(raw_features(h * 3.7).values, base) < 1e-12);

  SimilarityTransform rot;
  rot.rotation = Eigen::AngleAxisd(0.8, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  CHECK(max_abs_diff(raw_features(apply_transform(h, rot)).values, base) > 1e-6);
}

TEST_CASE("triplet table") {
  const auto& t = triplet_table();
  CHECK(t.size() == 20u);
  const std::set<int> tips = {4, 8, 12, 16, 20};
  int flex_with_pivot_6 = 0;
  for (const auto& e : t) {
    CHECK(e.parent != e.pivot);
    CHECK(e.pivot != e.child);
    CHECK(e.parent != e.child);
    for (int idx : {e.parent, e.pivot, e.child}) {
      CHECK(idx >= 0);
      CHECK(idx <= 20);
    }
    CHECK(tips.count(e.pivot) == 0);
    if (e.pivot == 6) {
      ++flex_with_pivot_6;
      CHECK(e.parent == 5);
      CHECK(e.child == 7);
    }
  }
  CHECK(flex_with_pivot_6 == 1);
  CHECK(t[15].parent == 17);
  CHECK(t[15].pivot == 0);
  CHECK(t[15].child == 1);
  CHECK(t[19].parent == 13);
  CHECK(t[19].child == 17);
}

TEST_CASE("joint_angles") {
  SUBCASE("collinear and orthogonal triplets") {
    HandKeypoints h = random_hand(6);
    h.row(0) << 0, 0, 0;
    h.row(1) << 1, 0, 0;
    h.row(2) << 2, 0, 0;  // (0,1,2) straight
    h.row(5) << 1, 0, 0;
    h.row(6) << 0, 0, 0;
    h.row(7) << 0, 1, 0;  // (5,6,7) right angle
    const auto a = joint_angles(h).values;
    CHECK(a[0] == doctest::Approx(std::numbers::pi).epsilon(1e-15));
    CHECK(a[4] == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  }

  SUBCASE("matches the scalar oracle and stays in [0, pi]") {
    for (std::uint64_t s = 0; s < 200; ++s) {
      const HandKeypoints h = random_hand(100 + s);
      const FeatureVector f = joint_angles(h);
      REQUIRE(f.values.size() == 20u);
      CHECK_FALSE(f.degenerate());
      for (int k = 0; k < 20; ++k) {
        const auto& t = triplet_table()[static_cast<std::size_t>(k)];
        CHECK(f.values[static_cast<std::size_t>(k)] == scalar_angle(h, t.parent, t.pivot, t.child));
        CHECK(f.values[static_cast<std::size_t>(k)] >= 0.0);
        CHECK(f.values[static_cast<std::size_t>(k)] <= std::numbers::pi);
      }
    }
  }

  SUBCASE("degenerate displacement yields 0 and a flag") {
    HandKeypoints h = random_hand(7);
    h.row(10) = h.row(9);
    const FeatureVector f = joint_angles(h);
    // Pivot 9 in (0,9,10) and pivot 10 in (9,10,11) both see a zero-length vector.
    CHECK(f.values[6] == 0.0);
    CHECK(f.values[7] == 0.0);
    CHECK(f.degenerate_angles == ((1u << 6) | (1u << 7)));
  }

  SUBCASE("unchanged by wrist-centring and scaling") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const HandKeypoints h = random_hand(500 + s);
      const auto a = joint_angles(h).values;
      const auto b = joint_angles(scale_normalize(wrist_center(h))).values;
      CHECK(max_abs_diff(a, b) <= 1e-12);
    }
  }
}

TEST_CASE("raw_angle_features concatenates") {
  const HandKeypoints h = random_hand(8);
  const FeatureVector f = raw_angle_features(h);
  REQUIRE(f.values.size() == 83u);
  const auto raw = raw_features(h).values;
  const auto ang = joint_angles(h).values;
  for (int i = 0; i < 63; ++i) CHECK(f.values[static_cast<std::size_t>(i)] == raw[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 20; ++i) CHECK(f.values[static_cast<std::size_t>(63 + i)] == ang[static_cast<std::size_t>(i)]);
  CHECK(feature_dim(FeatureKind::Raw) == 63);
  CHECK(feature_dim(FeatureKind::Angle) == 20);
  CHECK(feature_dim(FeatureKind::RawAngle) == 83);
  CHECK(parse_feature_kind("raw_angle") == FeatureKind::RawAngle);
  CHECK_THROWS_AS(parse_feature_kind("quaternion"), Error);
}

TEST_CASE("make_features without normalisation") {
  const HandKeypoints h = random_hand(9);
  const auto plain = make_features(h, FeatureKind::Raw, false).values;
  for (int i = 0; i < 21; ++i)
    for (int d = 0; d < 3; ++d) CHECK(plain[static_cast<std::size_t>(3 * i + d)] == h(i, d));
  CHECK(make_features(h, FeatureKind::Angle, false).values == make_features(h, FeatureKind::Angle, true).values);
}

TEST_CASE("similarity transforms") {
  const HandKeypoints h = random_hand(10);
  CHECK(apply_transform(h, SimilarityTransform::identity()) == h);

  SimilarityTransform dbl;
  dbl.scale = 2.0;
  CHECK(apply_transform(h, dbl) == 2.0 * h);

  const SimilarityTransform t1 = random_transform(11);
  const SimilarityTransform t2 = random_transform(12);
  const HandKeypoints a = apply_transform(apply_transform(h, t1), t2);
  const HandKeypoints b = apply_transform(h, t1.then(t2));
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);

  const SimilarityTransform again = random_transform(11);
  CHECK(again.rotation == t1.rotation);
  CHECK(again.scale == t1.scale);
  CHECK(again.translation == t1.translation);

  for (std::uint64_t s = 0; s < 1000; ++s) {
    const SimilarityTransform t = random_transform(s);
    CHECK((t.rotation.transpose() * t.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(t.rotation.determinant() - 1.0) < 1e-10);
    CHECK(t.scale >= 0.1);
    CHECK(t.scale <= 10.0);
    CHECK(t.translation.cwiseAbs().maxCoeff() <= 10.0);
    CHECK(t.valid());
  }
}

TEST_CASE("angles are similarity invariant") {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const HandKeypoints h = random_hand(2000 + s);
    const auto base = joint_angles(h).values;
    for (std::uint64_t k = 0; k < 5; ++k)
      worst = std::max(worst, max_abs_diff(joint_angles(apply_transform(h, random_transform(s * 10 + k))).values, base));
  }
  CHECK(worst <= 1e-9);
}
