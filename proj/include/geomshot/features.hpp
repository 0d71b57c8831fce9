#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "geomshot/dataset.hpp"
#include "geomshot/geometry.hpp"

namespace geomshot {

struct FeatureOptions {
  FeatureKind kind = FeatureKind::Angle;
  bool normalize = true;
};

// Feature rows for one side of a split. Row r belongs to catalog sample
// `sample_index[r]` with original class `class_ids[r]`.
struct FeatureTable {
  std::string dataset;
  FeatureOptions options;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  Eigen::MatrixXd rows;
  std::vector<int> class_ids;
  std::vector<std::size_t> sample_index;

  int dim() const { return static_cast<int>(rows.cols()); }
  std::size_t size() const { return class_ids.size(); }
  std::vector<std::size_t> class_counts() const;
};

// Samples whose features cannot be computed (degenerate hands) are dropped
// with a warning.
FeatureTable build_features(const DatasetCatalog& catalog, const std::vector<std::size_t>& samples,
                            FeatureOptions options);

}  // namespace geomshot
