#pragma once

// Hand-keypoint representations.
//
// A hand is 21 landmarks; row 0 is the wrist and the remaining rows form five
// four-joint chains (thumb 1-4, index 5-8, middle 9-12, ring 13-16, pinky
// 17-20). Three feature vectors are derived from it:
//
//   raw        63  wrist-centred, max-pairwise-distance normalised, row-major
//   angle      20  inter-joint angles (radians) over a fixed triplet table
//   raw_angle  83  [raw ; angle]
//
// Angles are computed from the unnormalised keypoints and are invariant under
// any similarity transform p -> s R p + t.

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace geomshot {

inline constexpr int kNumKeypoints = 21;
inline constexpr int kNumAngles = 20;
inline constexpr int kRawDim = 3 * kNumKeypoints;
inline constexpr int kRawAngleDim = kRawDim + kNumAngles;

using HandKeypoints = Eigen::Matrix<double, kNumKeypoints, 3, Eigen::RowMajor>;

enum class FeatureKind { Raw, Angle, RawAngle };

int feature_dim(FeatureKind kind);
std::string_view to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view name);

struct AngleTriplet {
  int parent;
  int pivot;
  int child;
};

struct FeatureVector {
  FeatureKind kind = FeatureKind::Raw;
  std::vector<double> values;
  // Bit k set when angle k had a (near) zero-length displacement and was
  // reported as 0.
  std::uint32_t degenerate_angles = 0;

  bool degenerate() const { return degenerate_angles != 0; }
};

struct SimilarityTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double scale = 1.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static SimilarityTransform identity() { return {}; }

  // Orthogonality and det(R)=+1 within `tol`, scale > 0.
  bool valid(double tol = 1e-10) const;

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }

  // The transform equivalent to applying *this and then `next`.
  SimilarityTransform then(const SimilarityTransform& next) const;
};

// Throws InvalidKeypoints when any entry is non-finite.
void validate_keypoints(const HandKeypoints& hand);

HandKeypoints wrist_center(const HandKeypoints& hand);
double max_pairwise_distance(const HandKeypoints& hand);
// Expects a wrist-centred hand. Throws DegenerateHand when all points coincide.
HandKeypoints scale_normalize(const HandKeypoints& hand);

const std::array<AngleTriplet, kNumAngles>& triplet_table();

FeatureVector raw_features(const HandKeypoints& hand);
// Row-major flattening without centring or scaling (ablation baseline).
FeatureVector unnormalized_raw_features(const HandKeypoints& hand);
FeatureVector joint_angles(const HandKeypoints& hand);
FeatureVector raw_angle_features(const HandKeypoints& hand);

// Dispatches on `kind`. With normalize=false the raw block is the plain
// flattening; the angle block is unaffected either way.
FeatureVector make_features(const HandKeypoints& hand, FeatureKind kind, bool normalize = true);

HandKeypoints apply_transform(const HandKeypoints& hand, const SimilarityTransform& transform);

// Uniform rotation (normalised quaternion of four standard normals),
// log-uniform scale in [0.1, 10], translation uniform in [-10, 10]^3.
SimilarityTransform random_transform(std::uint64_t seed);

}  // namespace geomshot
