#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "geomshot/dataset.hpp"
#include "geomshot/error.hpp"
#include "geomshot/npy.hpp"
#include "geomshot/rng.hpp"

using namespace geomshot;
namespace fs = std::filesystem;

namespace {

const fs::path kData = GEOMSHOT_TEST_DATA;

HandKeypoints arange_hand() {
  HandKeypoints h;
  for (int i = 0; i < 63; ++i) h.data()[i] = i / 7.0;
  return h;
}

ErrorCode code_of(const std::function<void()>& fn, std::string* field = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (field) *field = e.field();
    return e.code();
  }
  return ErrorCode{};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("geomshot-test-" + tag + "-" + std::to_string(Rng(std::random_device{}()).next()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct WarningCapture {
  std::vector<std::string> messages;
  WarningCapture() {
    set_warning_sink([](std::string_view m, void* u) { static_cast<WarningCapture*>(u)->messages.emplace_back(m); },
                     this);
  }
  ~WarningCapture() { set_warning_sink(nullptr, nullptr); }
};

DatasetCatalog toy_catalog(const std::vector<int>& counts) {
  std::vector<std::string> classes;
  std::vector<Sample> samples;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    classes.push_back("c" + std::to_string(c));
    for (int i = 0; i < counts[c]; ++i) {
      HandKeypoints h = arange_hand();
      h(1, 0) += static_cast<double>(c) + 0.01 * i;
      samples.push_back({classes.back() + "/s" + std::to_string(i) + ".npy", static_cast<int>(c), h});
    }
  }
  return make_catalog("toy", classes, samples);
}

}  // namespace

TEST_CASE("npy fixtures decode") {
  const HandKeypoints expect = arange_hand();
  CHECK(load_keypoints(kData / "hand_f8.npy") == expect);
  CHECK(load_keypoints(kData / "hand_f8_v2.npy") == expect);
  const HandKeypoints f4 = load_keypoints(kData / "hand_f4.npy");
  for (int i = 0; i < 63; ++i) CHECK(f4.data()[i] == static_cast<double>(static_cast<float>(i / 7.0)));
}

TEST_CASE("npy errors name the offending field") {
  const std::vector<std::pair<const char*, const char*>> cases = {
      {"bad_shape.npy", "shape"},     {"bad_dtype.npy", "descr"}, {"big_endian.npy", "descr"},
      {"fortran.npy", "fortran_order"}, {"truncated.npy", "data"},  {"not_npy.npy", "magic"},
  };
  for (const auto& [file, field] : cases) {
    CAPTURE(file);
    std::string got;
    CHECK(code_of([&] { load_keypoints(kData / file); }, &got) == ErrorCode::Format);
    CHECK(got == field);
  }
  CHECK(code_of([&] { load_keypoints(kData / "missing.npy"); }) == ErrorCode::Io);
}

TEST_CASE("npy writer is byte-identical to numpy") {
  const std::string original = read_file(kData / "hand_f8.npy");
  CHECK(encode_keypoints(load_keypoints(kData / "hand_f8.npy")) == original);
  CHECK(original.size() == 632u);

  TempDir dir("npy");
  write_keypoints(dir.path / "x.npy", arange_hand());
  CHECK(read_file(dir.path / "x.npy") == original);
}

TEST_CASE("split arithmetic") {
  CHECK(split_train_count(10, 0.7) == 7u);
  CHECK(split_train_count(5, 0.7) == 4u);  // 3.5 rounds to even
  CHECK(split_train_count(4, 0.7) == 3u);  // 2.8
  CHECK(split_train_count(3, 0.7) == 2u);  // 2.1
  CHECK(split_train_count(2, 0.7) == 1u);  // 1.4
  CHECK(split_train_count(2, 0.99) == 2u);
  CHECK(split_train_count(2, 0.01) == 0u);
  CHECK(split_train_count(5, 0.5) == 2u);  // 2.5 rounds to even
  CHECK(split_train_count(7, 0.5) == 4u);  // 3.5 rounds to even
}

TEST_CASE("stratified split") {
  const DatasetCatalog cat = toy_catalog({5, 4, 3});
  const SplitFile s = stratified_split(cat, 0.7, 42);
  std::vector<int> train_counts(3, 0), test_counts(3, 0);
  for (const auto& p : s.train) ++train_counts[static_cast<std::size_t>(cat.samples[cat.index_of(p)].class_id)];
  for (const auto& p : s.test) ++test_counts[static_cast<std::size_t>(cat.samples[cat.index_of(p)].class_id)];
  CHECK(train_counts == std::vector<int>{4, 3, 2});
  CHECK(test_counts == std::vector<int>{1, 1, 1});
  CHECK_NOTHROW(validate_split(s, cat));

  CHECK(split_to_json(stratified_split(cat, 0.7, 42)) == split_to_json(s));
  CHECK(split_to_json(stratified_split(cat, 0.7, 43)) != split_to_json(s));

  const SplitFile back = split_from_json(split_to_json(s));
  CHECK(back.train == s.train);
  CHECK(back.test == s.test);
  CHECK(back.seed == 42u);

  // Classes of two keep one sample per side whatever the fraction.
  for (double f : {0.01, 0.99}) {
    const SplitFile pair = stratified_split(toy_catalog({2}), f, 42);
    CHECK(pair.train.size() == 1u);
    CHECK(pair.test.size() == 1u);
  }

  const DatasetCatalog ten = toy_catalog({10});
  const SplitFile t = stratified_split(ten, 0.7, 1);
  CHECK(t.train.size() == 7u);
  CHECK(t.test.size() == 3u);
}

TEST_CASE("singleton classes go to train with a warning") {
  WarningCapture warnings;
  const DatasetCatalog cat = toy_catalog({1, 4});
  const SplitFile s = stratified_split(cat, 0.7, 42);
  CHECK(std::count(s.train.begin(), s.train.end(), "c0/s0.npy") == 1);
  CHECK(warnings.messages.size() == 1u);
}

TEST_CASE("split validation") {
  const DatasetCatalog cat = toy_catalog({4, 4});
  const SplitFile good = stratified_split(cat, 0.7, 42);

  SplitFile overlap = good;
  overlap.test.push_back(overlap.train.front());
  CHECK(code_of([&] { validate_split(overlap, cat); }) == ErrorCode::Split);

  SplitFile missing = good;
  missing.test.pop_back();
  CHECK(code_of([&] { validate_split(missing, cat); }) == ErrorCode::Split);

  SplitFile unknown = good;
  unknown.test.push_back("c9/none.npy");
  CHECK(code_of([&] { validate_split(unknown, cat); }) == ErrorCode::Split);

  SplitFile dup = good;
  dup.train.push_back(dup.train.front());
  CHECK(code_of([&] { validate_split(dup, cat); }) == ErrorCode::Split);

  TempDir dir("split");
  save_split(good, dir.path / "s.json");
  CHECK(load_split(dir.path / "s.json", cat).train == good.train);
  save_split(overlap, dir.path / "bad.json");
  CHECK(code_of([&] { load_split(dir.path / "bad.json", cat); }) == ErrorCode::Split);
}

TEST_CASE("eligible classes") {
  CHECK(eligible_classes({2}, 1, 1) == std::vector<int>{0});
  CHECK(eligible_classes({19}, 5, 15).empty());
  CHECK(eligible_classes({25, 3, 20, 19, 40}, 5, 15) == std::vector<int>{0, 2, 4});
}

TEST_CASE("catalog loading") {
  TempDir dir("catalog");
  const fs::path root = dir.path / "toy";
  for (const char* c : {"b_class", "a_class", "empty_class"}) fs::create_directories(root / c);
  HandKeypoints h = arange_hand();
  write_keypoints(root / "a_class" / "2.npy", h);
  write_keypoints(root / "a_class" / "1.npy", h);
  write_keypoints(root / "b_class" / "1.npy", h * 2.0);
  fs::copy_file(kData / "bad_shape.npy", root / "b_class" / "0.npy");
  std::ofstream(root / "b_class" / "notes.txt") << "ignored";
  std::ofstream(root / "stray.npy") << "ignored";

  WarningCapture warnings;
  const DatasetCatalog cat = load_catalog(root);
  CHECK(cat.name == "toy");
  CHECK(cat.classes == std::vector<std::string>{"a_class", "b_class"});
  REQUIRE(cat.samples.size() == 3u);
  CHECK(cat.samples[0].path == "a_class/1.npy");
  CHECK(cat.samples[1].path == "a_class/2.npy");
  CHECK(cat.samples[2].path == "b_class/1.npy");
  CHECK(cat.samples[2].class_id == 1);
  CHECK(cat.skipped_files == 1u);
  CHECK(cat.class_counts() == std::vector<std::size_t>{2, 1});
  REQUIRE(warnings.messages.size() == 2u);
  CHECK(warnings.messages[0].find("empty_class") != std::string::npos);
  CHECK(warnings.messages[1].find("skipped 1") != std::string::npos);

  CHECK(code_of([&] { load_catalog(dir.path / "absent"); }) == ErrorCode::Io);
}
