#include <doctest.h>

#include <filesystem>

#include "geomshot/dataset.hpp"
#include "geomshot/error.hpp"
#include "geomshot/npy.hpp"
#include "geomshot/rng.hpp"
#include "geomshot/synth.hpp"

using namespace geomshot;
namespace fs = std::filesystem;

TEST_CASE("noise-free samples realise the class targets") {
  synth::SynthOptions o;
  o.noise = 0.0;
  o.bone_jitter = 0.0;
  for (bool transforms : {false, true}) {
    o.transforms = transforms;
    for (int c = 0; c < 10; ++c) {
      const auto target = synth::class_shape(o.seed, c).target_angles();
      for (int i = 0; i < 3; ++i) {
        const auto got = joint_angles(synth::sample_hand(o, c, i)).values;
        for (int k = 0; k < 15; ++k) CHECK(std::abs(got[static_cast<std::size_t>(k)] - target[static_cast<std::size_t>(k)]) <= 1e-6);
        for (int k = 15; k < 20; ++k) CHECK(std::abs(got[static_cast<std::size_t>(k)] - target[static_cast<std::size_t>(k)]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("realize with nominal bones is exact for any bend") {
  synth::ClassShape s = synth::class_shape(7, 0);
  s.flexion.fill(0.5);
  s.flexion[4] = 3.0;
  std::array<double, 20> ones;
  ones.fill(1.0);
  const auto got = joint_angles(synth::realize(s, ones)).values;
  const auto want = s.target_angles();
  for (int k = 0; k < 20; ++k) CHECK(std::abs(got[static_cast<std::size_t>(k)] - want[static_cast<std::size_t>(k)]) < 1e-12);
}

TEST_CASE("corpus structure and determinism") {
  synth::SynthOptions o;
  o.classes = 3;
  o.per_class = 4;
  const DatasetCatalog a = synth::generate(o);
  const DatasetCatalog b = synth::generate(o);
  REQUIRE(a.samples.size() == 12u);
  CHECK(a.classes == std::vector<std::string>{"class_00", "class_01", "class_02"});
  CHECK(a.samples[5].path == "class_01/sample_0001.npy");
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].keypoints == b.samples[i].keypoints);

  synth::SynthOptions other = o;
  other.seed = 43;
  CHECK(synth::generate(other).samples[0].keypoints != a.samples[0].keypoints);
  CHECK(synth::class_shape(42, 0).flexion != synth::class_shape(43, 0).flexion);

  // Samples of one class differ from each other.
  CHECK(a.samples[0].keypoints != a.samples[1].keypoints);
}

TEST_CASE("tree on disk") {
  const fs::path root = fs::temp_directory_path() / ("geomshot-synth-" + std::to_string(Rng(std::random_device{}()).next()));
  synth::SynthOptions o;
  o.classes = 2;
  o.per_class = 3;
  CHECK(synth::write_tree(o, root / "a") == 6u);
  CHECK(synth::write_tree(o, root / "b") == 6u);
  const DatasetCatalog cat = load_catalog(root / "a");
  const DatasetCatalog mem = synth::generate(o);
  REQUIRE(cat.samples.size() == 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(cat.samples[i].path == mem.samples[i].path);
    CHECK(cat.samples[i].keypoints == mem.samples[i].keypoints);
    CHECK(read_file(root / "a" / cat.samples[i].path) == read_file(root / "b" / cat.samples[i].path));
  }
  fs::remove_all(root);
}

TEST_CASE("option validation") {
  synth::SynthOptions o;
  o.classes = 0;
  CHECK_THROWS_AS(o.validate(), Error);
  o = {};
  o.per_class = -1;
  CHECK_THROWS_AS(o.validate(), Error);
  o = {};
  o.noise = -0.1;
  CHECK_THROWS_AS(o.validate(), Error);
}
