#pragma once

#include <functional>
#include <vector>

#include "headprune/graph.hpp"

namespace headprune::oracle {

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t entries_checked = 0;
};

// Central-difference check of tape gradients. loss_fn must rebuild the whole
// forward pass from the current parameter values on every call; the same
// Tensor handles are perturbed in place between evaluations. Relative error
// uses a small absolute floor so exactly-zero gradients compare cleanly.
// sample_cap > 0 caps the perturbed entries per tensor (deterministic draw).
GradCheckReport grad_check(const std::function<Tensor(Graph&)>& loss_fn,
                           std::vector<Tensor> params, double eps = 1e-4,
                           size_t sample_cap = 0, uint64_t seed = 1234);

}  // namespace headprune::oracle
