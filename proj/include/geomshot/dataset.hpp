#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "geomshot/geometry.hpp"

namespace geomshot {

struct Sample {
  std::string path;  // relative to the dataset root: <class_name>/<file>.npy
  int class_id = 0;
  HandKeypoints keypoints = HandKeypoints::Zero();
};

struct DatasetCatalog {
  std::string name;
  std::filesystem::path root;
  std::vector<std::string> classes;
  std::vector<Sample> samples;
  std::size_t skipped_files = 0;

  std::vector<std::size_t> class_counts() const;
  // Sample index by relative path; throws Split when absent.
  std::size_t index_of(const std::string& path) const;
};

// Reads <root>/<class_name>/*.npy. Class directories and files are taken in
// lexicographic order. Undecodable files are skipped and counted; empty class
// directories are excluded with a warning.
DatasetCatalog load_catalog(const std::filesystem::path& root, std::string name = {});

// Validates and re-indexes an in-memory catalog (used by the synthetic
// corpus and by tests).
DatasetCatalog make_catalog(std::string name, std::vector<std::string> classes,
                            std::vector<Sample> samples);

struct SplitFile {
  std::uint64_t seed = 42;
  double fraction = 0.7;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// round-half-to-even of fraction * n
std::size_t split_train_count(std::size_t n, double fraction);

// Per class c, the class's samples (catalog order) are shuffled with an Rng
// seeded by mix_seed(seed, c); the first split_train_count() go to train.
// Classes with n >= 2 keep at least one sample on each side; singleton
// classes go entirely to train with a warning.
SplitFile stratified_split(const DatasetCatalog& catalog, double fraction, std::uint64_t seed);

// Throws Split on train/test overlap, on duplicate entries, on paths missing
// from the catalog, or when the split does not cover the catalog.
void validate_split(const SplitFile& split, const DatasetCatalog& catalog);

std::string split_to_json(const SplitFile& split);
SplitFile split_from_json(const std::string& text);
void save_split(const SplitFile& split, const std::filesystem::path& path);
// Loads and validates against `catalog`.
SplitFile load_split(const std::filesystem::path& path, const DatasetCatalog& catalog);

// Sample indices of one side of a split, in split order.
std::vector<std::size_t> resolve_paths(const std::vector<std::string>& paths,
                                       const DatasetCatalog& catalog);

// Classes with at least k + q entries in `counts` (indexed by class id),
// ascending by class id.
std::vector<int> eligible_classes(const std::vector<std::size_t>& counts, int k_shot, int q_query);

}  // namespace geomshot
