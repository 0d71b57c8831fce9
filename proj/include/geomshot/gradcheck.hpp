#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "geomshot/nnet.hpp"

namespace geomshot::nnet {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is zero from turning rounding noise into a large ratio.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Compares the gradients already stored in `params` against central
// differences (loss(x+h) - loss(x-h)) / 2h. `loss` must be deterministic
// (freeze dropout by reseeding inside it). When max_entries_per_tensor > 0,
// a seeded random subset of each tensor's entries is checked.
GradCheckReport finite_difference_check(std::span<ParamTensor* const> params,
                                        const std::function<double()>& loss, double h,
                                        double tolerance, std::size_t max_entries_per_tensor = 0,
                                        std::uint64_t seed = 0);

// Same check for the gradient with respect to an input matrix.
GradCheckEntry finite_difference_input(Matrix& input, const Matrix& analytic,
                                       const std::function<double()>& loss, double h);

}  // namespace geomshot::nnet
