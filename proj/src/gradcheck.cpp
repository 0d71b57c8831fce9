#include "geomshot/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geomshot/rng.hpp"

namespace geomshot::nnet {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

double central_difference(double& slot, const std::function<double()>& loss, double h) {
  const double saved = slot;
  slot = saved + h;
  const double plus = loss();
  slot = saved - h;
  const double minus = loss();
  slot = saved;
  return (plus - minus) / (2.0 * h);
}

}  // namespace

GradCheckReport finite_difference_check(std::span<ParamTensor* const> params,
                                        const std::function<double()>& loss, double h,
                                        double tolerance, std::size_t max_entries_per_tensor,
                                        std::uint64_t seed) {
  GradCheckReport report;
  Rng rng(seed);
  for (ParamTensor* p : params) {
    const Matrix analytic = p->grad;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(p->value.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (max_entries_per_tensor > 0 && order.size() > max_entries_per_tensor) {
      rng.shuffle(std::span<Eigen::Index>(order));
      order.resize(max_entries_per_tensor);
    }
    GradCheckEntry entry{p->name, 0, 0.0};
    for (Eigen::Index flat : order) {
      double& slot = p->value.data()[flat];
      const double numeric = central_difference(slot, loss, h);
      entry.max_rel_error =
          std::max(entry.max_rel_error, relative_error(analytic.data()[flat], numeric));
      ++entry.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

GradCheckEntry finite_difference_input(Matrix& input, const Matrix& analytic,
                                       const std::function<double()>& loss, double h) {
  GradCheckEntry entry{"input", 0, 0.0};
  for (Eigen::Index flat = 0; flat < input.size(); ++flat) {
    const double numeric = central_difference(input.data()[flat], loss, h);
    entry.max_rel_error =
        std::max(entry.max_rel_error, relative_error(analytic.data()[flat], numeric));
    ++entry.checked;
  }
  return entry;
}

}  // namespace geomshot::nnet
