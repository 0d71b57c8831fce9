#pragma once

#include <cstdint>
#include <vector>

#include "geomshot/features.hpp"

namespace geomshot {

struct EpisodeSpec {
  int n_way = 5;
  int k_shot = 5;
  int q_query = 15;
  std::uint64_t base_seed = 42;
  std::uint64_t episode_index = 0;

  std::uint64_t seed() const { return base_seed + episode_index; }
};

// Items of one original class, identified by row index into a FeatureTable.
struct ClassPool {
  int class_id = 0;
  std::vector<std::size_t> items;
};

struct Episode {
  std::vector<int> class_map;  // relabelled id -> original class id
  std::vector<std::size_t> support;
  std::vector<int> support_labels;
  std::vector<std::size_t> query;
  std::vector<int> query_labels;
};

// Pool of the classes of `table` holding at least k + q rows, ascending by
// class id, rows in table order.
std::vector<ClassPool> build_pool(const FeatureTable& table, int k_shot, int q_query);

// An Rng seeded with spec.seed() first draws n_way classes without
// replacement (draw order defines the relabelling), then per class draws
// k + q items without replacement: the first k are support, the next q query.
Episode sample_episode(const std::vector<ClassPool>& pool, const EpisodeSpec& spec);

}  // namespace geomshot
