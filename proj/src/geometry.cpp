#include "geomshot/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "geomshot/error.hpp"
#include "geomshot/rng.hpp"

namespace geomshot {

namespace {

constexpr double kDegenerateScale = 1e-12;
constexpr double kDegenerateDisplacement = 1e-9;

void flatten_into(const HandKeypoints& hand, std::vector<double>& out) {
  out.reserve(out.size() + kRawDim);
  for (int i = 0; i < kNumKeypoints; ++i)
    for (int c = 0; c < 3; ++c) out.push_back(hand(i, c));
}

}  // namespace

int feature_dim(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Raw: return kRawDim;
    case FeatureKind::Angle: return kNumAngles;
    case FeatureKind::RawAngle: return kRawAngleDim;
  }
  return 0;
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::Raw: return "raw";
    case FeatureKind::Angle: return "angle";
    case FeatureKind::RawAngle: return "raw_angle";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view name) {
  if (name == "raw") return FeatureKind::Raw;
  if (name == "angle") return FeatureKind::Angle;
  if (name == "raw_angle") return FeatureKind::RawAngle;
  throw Error(ErrorCode::InvalidArgument, "unknown representation '" + std::string(name) + "'",
              "representation");
}

bool SimilarityTransform::valid(double tol) const {
  if (!(scale > 0.0) || !std::isfinite(scale)) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

SimilarityTransform SimilarityTransform::then(const SimilarityTransform& next) const {
  // next(this(p)) = s2 R2 (s1 R1 p + t1) + t2
  SimilarityTransform out;
  out.rotation = next.rotation * rotation;
  out.scale = next.scale * scale;
  out.translation = next.scale * (next.rotation * translation) + next.translation;
  return out;
}

void validate_keypoints(const HandKeypoints& hand) {
  if (!hand.allFinite())
    throw Error(ErrorCode::InvalidKeypoints, "keypoints contain non-finite values", "points");
}

HandKeypoints wrist_center(const HandKeypoints& hand) {
  validate_keypoints(hand);
  HandKeypoints out = hand;
  out.rowwise() -= hand.row(0);
  return out;
}

double max_pairwise_distance(const HandKeypoints& hand) {
  double best = 0.0;
  for (int j = 0; j < kNumKeypoints; ++j)
    for (int k = j + 1; k < kNumKeypoints; ++k)
      best = std::max(best, (hand.row(j) - hand.row(k)).norm());
  return best;
}

HandKeypoints scale_normalize(const HandKeypoints& hand) {
  validate_keypoints(hand);
  const double extent = max_pairwise_distance(hand);
  if (extent < kDegenerateScale)
    throw Error(ErrorCode::DegenerateHand, "all keypoints coincide (max pairwise distance " +
                                               std::to_string(extent) + ")");
  return hand / extent;
}

const std::array<AngleTriplet, kNumAngles>& triplet_table() {
  // 15 flexion triplets along each finger chain, then 5 wrist-pivoted
  // abduction triplets between cyclically adjacent chain bases.
  static const std::array<AngleTriplet, kNumAngles> table = {{
      {0, 1, 2},   {1, 2, 3},    {2, 3, 4},     // thumb
      {0, 5, 6},   {5, 6, 7},    {6, 7, 8},     // index
      {0, 9, 10},  {9, 10, 11},  {10, 11, 12},  // middle
      {0, 13, 14}, {13, 14, 15}, {14, 15, 16},  // ring
      {0, 17, 18}, {17, 18, 19}, {18, 19, 20},  // pinky
      {17, 0, 1},  {1, 0, 5},    {5, 0, 9},     {9, 0, 13}, {13, 0, 17},
  }};
  return table;
}

FeatureVector raw_features(const HandKeypoints& hand) {
  FeatureVector out{FeatureKind::Raw, {}, 0};
  flatten_into(scale_normalize(wrist_center(hand)), out.values);
  return out;
}

FeatureVector unnormalized_raw_features(const HandKeypoints& hand) {
  validate_keypoints(hand);
  FeatureVector out{FeatureKind::Raw, {}, 0};
  flatten_into(hand, out.values);
  return out;
}

FeatureVector joint_angles(const HandKeypoints& hand) {
  validate_keypoints(hand);
  FeatureVector out{FeatureKind::Angle, {}, 0};
  out.values.reserve(kNumAngles);
  const auto& table = triplet_table();
  for (int k = 0; k < kNumAngles; ++k) {
    const auto& t = table[static_cast<std::size_t>(k)];
    const Eigen::Vector3d u = (hand.row(t.parent) - hand.row(t.pivot)).transpose();
    const Eigen::Vector3d v = (hand.row(t.child) - hand.row(t.pivot)).transpose();
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu < kDegenerateDisplacement || nv < kDegenerateDisplacement) {
      out.values.push_back(0.0);
      out.degenerate_angles |= (1u << k);
      continue;
    }
    const double cosine = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    out.values.push_back(std::acos(cosine));
  }
  return out;
}

FeatureVector raw_angle_features(const HandKeypoints& hand) {
  FeatureVector raw = raw_features(hand);
  const FeatureVector angles = joint_angles(hand);
  raw.kind = FeatureKind::RawAngle;
  raw.values.insert(raw.values.end(), angles.values.begin(), angles.values.end());
  raw.degenerate_angles = angles.degenerate_angles;
  return raw;
}

FeatureVector make_features(const HandKeypoints& hand, FeatureKind kind, bool normalize) {
  switch (kind) {
    case FeatureKind::Angle:
      return joint_angles(hand);
    case FeatureKind::Raw:
      return normalize ? raw_features(hand) : unnormalized_raw_features(hand);
    case FeatureKind::RawAngle: {
      if (normalize) return raw_angle_features(hand);
      FeatureVector out = unnormalized_raw_features(hand);
      const FeatureVector angles = joint_angles(hand);
      out.kind = FeatureKind::RawAngle;
      out.values.insert(out.values.end(), angles.values.begin(), angles.values.end());
      out.degenerate_angles = angles.degenerate_angles;
      return out;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown feature kind");
}

HandKeypoints apply_transform(const HandKeypoints& hand, const SimilarityTransform& transform) {
  HandKeypoints out;
  for (int i = 0; i < kNumKeypoints; ++i)
    out.row(i) = transform.apply(hand.row(i).transpose()).transpose();
  return out;
}

SimilarityTransform random_transform(std::uint64_t seed) {
  Rng rng(seed);
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  SimilarityTransform t;
  t.rotation = q.toRotationMatrix();
  t.scale = std::clamp(std::exp(rng.uniform(std::log(0.1), std::log(10.0))), 0.1, 10.0);
  for (int c = 0; c < 3; ++c) t.translation[c] = rng.uniform(-10.0, 10.0);
  return t;
}

}  // namespace geomshot
