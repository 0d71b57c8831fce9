#pragma once

// Synthetic hand corpus. Each class has a canonical set of 15 flexion angles
// and 5 finger-base spread directions; a sample realises them through a
// planar forward-kinematics chain per finger, with Gaussian angular noise,
// small bone-length jitter and, optionally, a random similarity transform.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geomshot/dataset.hpp"
#include "geomshot/geometry.hpp"

namespace geomshot::synth {

struct SynthOptions {
  int classes = 10;
  int per_class = 200;
  double noise = 0.05;        // radians, on every flexion angle and base spread
  double bone_jitter = 0.03;  // relative standard deviation of bone lengths
  bool transforms = true;     // random similarity transform per sample
  std::uint64_t seed = 42;

  void validate() const;
};

struct ClassShape {
  std::array<double, 15> flexion{};  // triplet-table order, radians
  std::array<double, 5> spread{};    // base direction per finger in the palm plane

  // Target values of joint_angles() for a noise-free sample.
  std::array<double, kNumAngles> target_angles() const;
};

// Canonical shape of class `class_id` under `seed`.
ClassShape class_shape(std::uint64_t seed, int class_id);

// Builds the hand for a given shape and bone-length scale factors (one per
// bone, 20 entries, 1.0 = nominal).
HandKeypoints realize(const ClassShape& shape, const std::array<double, 20>& bone_scale);

// Sample `index` of class `class_id`.
HandKeypoints sample_hand(const SynthOptions& options, int class_id, int index);

std::string class_name(int class_id);
std::string sample_name(int index);

// Whole corpus in memory, named `name`.
DatasetCatalog generate(const SynthOptions& options, const std::string& name = "synthetic");

// Writes <root>/class_XX/sample_YYYY.npy; returns the number of files.
std::size_t write_tree(const SynthOptions& options, const std::filesystem::path& root);

}  // namespace geomshot::synth
