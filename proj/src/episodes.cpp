#include "geomshot/episodes.hpp"

#include "geomshot/error.hpp"
#include "geomshot/rng.hpp"

namespace geomshot {

namespace {

// First `count` entries of a partial Fisher-Yates shuffle of `items`.
std::vector<std::size_t> draw_without_replacement(Rng& rng, std::vector<std::size_t> items,
                                                  std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(count);
  return items;
}

}  // namespace

std::vector<ClassPool> build_pool(const FeatureTable& table, int k_shot, int q_query) {
  std::vector<ClassPool> pool;
  for (int c : eligible_classes(table.class_counts(), k_shot, q_query)) pool.push_back({c, {}});
  std::vector<int> slot(table.num_classes, -1);
  for (std::size_t i = 0; i < pool.size(); ++i) slot[static_cast<std::size_t>(pool[i].class_id)] = static_cast<int>(i);
  for (std::size_t r = 0; r < table.size(); ++r) {
    const int s = slot[static_cast<std::size_t>(table.class_ids[r])];
    if (s >= 0) pool[static_cast<std::size_t>(s)].items.push_back(r);
  }
  return pool;
}

Episode sample_episode(const std::vector<ClassPool>& pool, const EpisodeSpec& spec) {
  if (spec.n_way < 2 || spec.k_shot < 1 || spec.q_query < 1)
    throw Error(ErrorCode::InvalidArgument, "episode needs n_way >= 2, k_shot >= 1, q_query >= 1",
                "episode");
  const auto n = static_cast<std::size_t>(spec.n_way);
  const auto per_class = static_cast<std::size_t>(spec.k_shot + spec.q_query);
  if (pool.size() < n)
    throw Error(ErrorCode::InsufficientClasses,
                std::to_string(pool.size()) + " eligible classes, need " + std::to_string(n));
  for (const auto& c : pool)
    if (c.items.size() < per_class)
      throw Error(ErrorCode::InsufficientSamples,
                  "class " + std::to_string(c.class_id) + " has " + std::to_string(c.items.size()) +
                      " samples, need " + std::to_string(per_class));

  Rng rng(spec.seed());
  std::vector<std::size_t> slots(pool.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
  const auto chosen = draw_without_replacement(rng, std::move(slots), n);

  Episode ep;
  ep.class_map.reserve(n);
  ep.support.reserve(n * static_cast<std::size_t>(spec.k_shot));
  ep.query.reserve(n * static_cast<std::size_t>(spec.q_query));
  for (std::size_t label = 0; label < n; ++label) {
    const ClassPool& cls = pool[chosen[label]];
    ep.class_map.push_back(cls.class_id);
    const auto drawn = draw_without_replacement(rng, cls.items, per_class);
    for (std::size_t i = 0; i < per_class; ++i) {
      if (i < static_cast<std::size_t>(spec.k_shot)) {
        ep.support.push_back(drawn[i]);
        ep.support_labels.push_back(static_cast<int>(label));
      } else {
        ep.query.push_back(drawn[i]);
        ep.query_labels.push_back(static_cast<int>(label));
      }
    }
  }
  return ep;
}

}  // namespace geomshot
