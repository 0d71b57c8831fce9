#include "geomshot/features.hpp"

#include "geomshot/error.hpp"

namespace geomshot {

std::vector<std::size_t> FeatureTable::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int c : class_ids) ++counts[static_cast<std::size_t>(c)];
  return counts;
}

FeatureTable build_features(const DatasetCatalog& catalog, const std::vector<std::size_t>& samples,
                            FeatureOptions options) {
  FeatureTable table;
  table.dataset = catalog.name;
  table.options = options;
  table.num_classes = catalog.classes.size();
  table.class_names = catalog.classes;
  const int dim = feature_dim(options.kind);

  std::vector<std::vector<double>> kept;
  kept.reserve(samples.size());
  std::size_t dropped = 0;
  for (std::size_t idx : samples) {
    const Sample& s = catalog.samples.at(idx);
    try {
      kept.push_back(make_features(s.keypoints, options.kind, options.normalize).values);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateHand && e.code() != ErrorCode::InvalidKeypoints) throw;
      ++dropped;
      continue;
    }
    table.class_ids.push_back(s.class_id);
    table.sample_index.push_back(idx);
  }
  if (dropped > 0)
    warn("dropped " + std::to_string(dropped) + " degenerate sample(s) from '" + catalog.name + "'");

  table.rows.resize(static_cast<Eigen::Index>(kept.size()), dim);
  for (std::size_t r = 0; r < kept.size(); ++r)
    for (int c = 0; c < dim; ++c)
      table.rows(static_cast<Eigen::Index>(r), c) = kept[r][static_cast<std::size_t>(c)];
  return table;
}

}  // namespace geomshot
