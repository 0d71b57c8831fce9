#include "geomshot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cfenv>
#include <json.hpp>
#include <set>
#include <unordered_map>

#include "geomshot/error.hpp"
#include "geomshot/npy.hpp"
#include "geomshot/rng.hpp"

namespace geomshot {

namespace fs = std::filesystem;

std::vector<std::size_t> DatasetCatalog::class_counts() const {
  std::vector<std::size_t> counts(classes.size(), 0);
  for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.class_id)];
  return counts;
}

std::size_t DatasetCatalog::index_of(const std::string& path) const {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].path == path) return i;
  throw Error(ErrorCode::Split, "path '" + path + "' is not in catalog '" + name + "'", "path");
}

DatasetCatalog load_catalog(const fs::path& root, std::string name) {
  if (!fs::is_directory(root))
    throw Error(ErrorCode::Io, "dataset root '" + root.string() + "' is not a directory", "root");

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  std::sort(class_dirs.begin(), class_dirs.end());

  DatasetCatalog catalog;
  catalog.name = name.empty() ? root.filename().string() : std::move(name);
  if (catalog.name.empty()) catalog.name = root.parent_path().filename().string();
  catalog.root = root;

  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".npy") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<Sample> decoded;
    for (const auto& file : files) {
      try {
        HandKeypoints hand = load_keypoints(file);
        validate_keypoints(hand);
        decoded.push_back({dir.filename().string() + "/" + file.filename().string(), 0, hand});
      } catch (const Error&) {
        ++catalog.skipped_files;
      }
    }
    if (decoded.empty()) {
      warn("class directory '" + dir.filename().string() + "' has no decodable samples; excluded");
      continue;
    }
    const int class_id = static_cast<int>(catalog.classes.size());
    catalog.classes.push_back(dir.filename().string());
    for (auto& s : decoded) {
      s.class_id = class_id;
      catalog.samples.push_back(std::move(s));
    }
  }
  if (catalog.skipped_files > 0)
    warn("skipped " + std::to_string(catalog.skipped_files) + " undecodable file(s) under '" +
         root.string() + "'");
  if (catalog.classes.empty())
    throw Error(ErrorCode::Io, "dataset root '" + root.string() + "' contains no samples", "root");
  return catalog;
}

DatasetCatalog make_catalog(std::string name, std::vector<std::string> classes,
                            std::vector<Sample> samples) {
  DatasetCatalog catalog;
  catalog.name = std::move(name);
  catalog.classes = std::move(classes);
  catalog.samples = std::move(samples);
  std::set<std::string> seen;
  for (const auto& s : catalog.samples) {
    if (s.class_id < 0 || static_cast<std::size_t>(s.class_id) >= catalog.classes.size())
      throw Error(ErrorCode::InvalidArgument, "sample '" + s.path + "' has invalid class id",
                  "class_id");
    if (!seen.insert(s.path).second)
      throw Error(ErrorCode::InvalidArgument, "duplicate sample path '" + s.path + "'", "path");
    validate_keypoints(s.keypoints);
  }
  const auto counts = catalog.class_counts();
  for (std::size_t c = 0; c < catalog.classes.size(); ++c)
    if (counts[c] == 0)
      throw Error(ErrorCode::InvalidArgument, "class '" + catalog.classes[c] + "' is empty",
                  "classes");
  return catalog;
}

std::size_t split_train_count(std::size_t n, double fraction) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double rounded = std::nearbyint(fraction * static_cast<double>(n));
  std::fesetround(saved);
  return static_cast<std::size_t>(std::max(0.0, rounded));
}

SplitFile stratified_split(const DatasetCatalog& catalog, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "train fraction must lie in (0, 1)", "fraction");

  SplitFile split;
  split.seed = seed;
  split.fraction = fraction;

  std::vector<std::vector<std::size_t>> per_class(catalog.classes.size());
  for (std::size_t i = 0; i < catalog.samples.size(); ++i)
    per_class[static_cast<std::size_t>(catalog.samples[i].class_id)].push_back(i);

  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& members = per_class[c];
    const std::size_t n = members.size();
    if (n == 0) continue;
    if (n == 1) {
      warn("class '" + catalog.classes[c] + "' has a single sample; assigned to train");
      split.train.push_back(catalog.samples[members[0]].path);
      continue;
    }
    Rng rng(mix_seed(seed, c));
    rng.shuffle(std::span<std::size_t>(members));
    const std::size_t n_train = std::clamp<std::size_t>(split_train_count(n, fraction), 1, n - 1);
    for (std::size_t i = 0; i < n; ++i)
      (i < n_train ? split.train : split.test).push_back(catalog.samples[members[i]].path);
  }
  return split;
}

void validate_split(const SplitFile& split, const DatasetCatalog& catalog) {
  std::unordered_map<std::string, int> side;
  for (const auto& p : split.train)
    if (!side.emplace(p, 0).second)
      throw Error(ErrorCode::Split, "duplicate train entry '" + p + "'", "train");
  for (const auto& p : split.test) {
    auto [it, inserted] = side.emplace(p, 1);
    if (!inserted) {
      throw Error(ErrorCode::Split,
                  it->second == 0 ? "train/test overlap on '" + p + "'"
                                  : "duplicate test entry '" + p + "'",
                  "test");
    }
  }
  std::set<std::string> catalog_paths;
  for (const auto& s : catalog.samples) catalog_paths.insert(s.path);
  for (const auto& [path, _] : side)
    if (!catalog_paths.count(path))
      throw Error(ErrorCode::Split, "split entry '" + path + "' is not in the catalog", "path");
  if (side.size() != catalog_paths.size())
    throw Error(ErrorCode::Split,
                "split covers " + std::to_string(side.size()) + " of " +
                    std::to_string(catalog_paths.size()) + " catalog samples",
                "coverage");
}

std::string split_to_json(const SplitFile& split) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["fraction"] = split.fraction;
  j["train"] = split.train;
  j["test"] = split.test;
  return j.dump(1) + "\n";
}

SplitFile split_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Split, std::string("invalid split JSON: ") + e.what(), "json");
  }
  SplitFile split;
  try {
    split.seed = j.at("seed").get<std::uint64_t>();
    split.fraction = j.at("fraction").get<double>();
    split.train = j.at("train").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Split, std::string("split JSON schema: ") + e.what(), "json");
  }
  return split;
}

void save_split(const SplitFile& split, const fs::path& path) {
  write_file(path, split_to_json(split));
}

SplitFile load_split(const fs::path& path, const DatasetCatalog& catalog) {
  SplitFile split = split_from_json(read_file(path));
  validate_split(split, catalog);
  return split;
}

std::vector<std::size_t> resolve_paths(const std::vector<std::string>& paths,
                                       const DatasetCatalog& catalog) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(catalog.samples.size());
  for (std::size_t i = 0; i < catalog.samples.size(); ++i) index.emplace(catalog.samples[i].path, i);
  std::vector<std::size_t> out;
  out.reserve(paths.size());
  for (const auto& p : paths) {
    auto it = index.find(p);
    if (it == index.end())
      throw Error(ErrorCode::Split, "path '" + p + "' is not in catalog '" + catalog.name + "'",
                  "path");
    out.push_back(it->second);
  }
  return out;
}

std::vector<int> eligible_classes(const std::vector<std::size_t>& counts, int k_shot, int q_query) {
  if (k_shot < 1 || q_query < 1)
    throw Error(ErrorCode::InvalidArgument, "k_shot and q_query must be >= 1", "k_shot");
  const auto need = static_cast<std::size_t>(k_shot + q_query);
  std::vector<int> out;
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] >= need) out.push_back(static_cast<int>(c));
  return out;
}

}  // namespace geomshot
