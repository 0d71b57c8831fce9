#include "geomshot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "geomshot/error.hpp"
#include "geomshot/npy.hpp"
#include "geomshot/rng.hpp"

namespace geomshot::synth {

namespace {

constexpr double kPi = std::numbers::pi;

// Nominal spread (radians from the middle-finger axis) per finger, thumb first.
constexpr std::array<double, 5> kBaseSpread = {1.0, 0.3, 0.0, -0.28, -0.56};
constexpr double kSpreadJitter = 0.06;

// Wrist-to-base length, then the three phalanges, per finger.
constexpr std::array<std::array<double, 4>, 5> kBoneLength = {{
    {0.30, 0.38, 0.32, 0.27},
    {0.95, 0.42, 0.25, 0.21},
    {0.92, 0.46, 0.29, 0.22},
    {0.86, 0.43, 0.27, 0.21},
    {0.80, 0.34, 0.20, 0.19},
}};

constexpr double kFlexionLow = 0.8;
constexpr double kFlexionHigh = 2.9;
// Sample angles are clamped away from 0 and pi where acos loses precision.
constexpr double kFlexionMin = 0.3;
constexpr double kFlexionMax = kPi - 0.1;

constexpr std::uint64_t kShapeStream = 0x5348415045ULL;
constexpr std::uint64_t kSampleStream = 0x53414d504cULL;

}  // namespace

void SynthOptions::validate() const {
  if (classes <= 0) throw Error(ErrorCode::InvalidArgument, "classes must be positive", "classes");
  if (per_class <= 0) throw Error(ErrorCode::InvalidArgument, "per_class must be positive", "per_class");
  if (!(noise >= 0.0) || !std::isfinite(noise))
    throw Error(ErrorCode::InvalidArgument, "noise must be a finite non-negative number", "noise");
  if (!(bone_jitter >= 0.0) || bone_jitter > 0.2)
    throw Error(ErrorCode::InvalidArgument, "bone_jitter must lie in [0, 0.2]", "bone_jitter");
}

std::array<double, kNumAngles> ClassShape::target_angles() const {
  std::array<double, kNumAngles> out{};
  std::copy(flexion.begin(), flexion.end(), out.begin());
  // (17,0,1) (1,0,5) (5,0,9) (9,0,13) (13,0,17)
  out[15] = std::abs(spread[0] - spread[4]);
  for (int f = 0; f < 4; ++f) out[16 + f] = std::abs(spread[f] - spread[f + 1]);
  return out;
}

ClassShape class_shape(std::uint64_t seed, int class_id) {
  Rng rng(mix_seed(mix_seed(seed, kShapeStream), static_cast<std::uint64_t>(class_id)));
  ClassShape shape;
  for (double& a : shape.flexion) a = rng.uniform(kFlexionLow, kFlexionHigh);
  for (int f = 0; f < 5; ++f) shape.spread[f] = kBaseSpread[f] + rng.uniform(-kSpreadJitter, kSpreadJitter);
  return shape;
}

HandKeypoints realize(const ClassShape& shape, const std::array<double, 20>& bone_scale) {
  HandKeypoints hand = HandKeypoints::Zero();
  const Eigen::Vector3d palm_normal(0.0, 0.0, 1.0);
  for (int f = 0; f < 5; ++f) {
    const double alpha = shape.spread[f];
    const Eigen::Vector3d e(std::sin(alpha), std::cos(alpha), 0.0);
    // Fingers curl toward the palm side; the thumb's plane is tilted toward
    // the other fingers.
    Eigen::Vector3d w = -palm_normal;
    if (f == 0) {
      const Eigen::Vector3d across(-std::cos(alpha), std::sin(alpha), 0.0);
      w = (w + 0.7 * across).normalized();
    }
    Eigen::Vector3d p = Eigen::Vector3d::Zero();
    double phi = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j > 0) phi += kPi - shape.flexion[static_cast<std::size_t>(3 * f + j - 1)];
      const Eigen::Vector3d d = std::cos(phi) * e + std::sin(phi) * w;
      p += kBoneLength[f][j] * bone_scale[static_cast<std::size_t>(4 * f + j)] * d;
      hand.row(1 + 4 * f + j) = p.transpose();
    }
  }
  return hand;
}

HandKeypoints sample_hand(const SynthOptions& options, int class_id, int index) {
  const ClassShape canonical = class_shape(options.seed, class_id);
  const std::uint64_t stream =
      mix_seed(mix_seed(options.seed, kSampleStream),
               (static_cast<std::uint64_t>(class_id) << 32) | static_cast<std::uint32_t>(index));
  Rng rng(stream);
  ClassShape shape = canonical;
  for (double& a : shape.flexion)
    a = std::clamp(a + options.noise * rng.normal(), kFlexionMin, kFlexionMax);
  for (double& s : shape.spread) s += options.noise * rng.normal();
  std::array<double, 20> scale{};
  for (double& s : scale) s = std::max(0.5, 1.0 + options.bone_jitter * rng.normal());
  HandKeypoints hand = realize(shape, scale);
  if (options.transforms) hand = apply_transform(hand, random_transform(rng.next()));
  return hand;
}

std::string class_name(int class_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%02d", class_id);
  return buf;
}

std::string sample_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04d.npy", index);
  return buf;
}

DatasetCatalog generate(const SynthOptions& options, const std::string& name) {
  options.validate();
  std::vector<std::string> classes;
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(options.classes) * static_cast<std::size_t>(options.per_class));
  for (int c = 0; c < options.classes; ++c) {
    classes.push_back(class_name(c));
    for (int i = 0; i < options.per_class; ++i)
      samples.push_back({class_name(c) + "/" + sample_name(i), c, sample_hand(options, c, i)});
  }
  return make_catalog(name, std::move(classes), std::move(samples));
}

std::size_t write_tree(const SynthOptions& options, const std::filesystem::path& root) {
  options.validate();
  std::size_t written = 0;
  for (int c = 0; c < options.classes; ++c) {
    const auto dir = root / class_name(c);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    for (int i = 0; i < options.per_class; ++i) {
      write_keypoints(dir / sample_name(i), sample_hand(options, c, i));
      ++written;
    }
  }
  return written;
}

}  // namespace geomshot::synth
