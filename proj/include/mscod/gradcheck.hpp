#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mscod/tensor.hpp"

namespace mscod::diff {

struct GradCheckEntry {
  std::string name;
  std::size_t probed = 0;     // number of coordinates compared
  double relative_error = 0;  // |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double analytic_norm = 0;
  double numeric_norm = 0;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Compares the tape gradient of `loss` against central finite differences
// for each tensor. `loss` must rebuild the graph from the current parameter
// values every call and must be deterministic. At most `max_probes`
// coordinates per tensor are perturbed (chosen with a fixed stride pattern);
// 0 probes every coordinate.
//
// The numeric side only evaluates forward values, so it stays independent of
// the backward rules under test.
std::vector<GradCheckEntry> finite_difference_check(const std::function<Tensor()>& loss,
                                                    std::vector<NamedTensor> params,
                                                    double eps = 1e-5,
                                                    std::size_t max_probes = 0);

}  // namespace mscod::diff
