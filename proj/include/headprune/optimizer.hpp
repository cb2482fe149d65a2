#pragma once

#include <vector>

#include "headprune/tensor.hpp"

namespace headprune {

// Adam with bias correction folded into the step size. step() consumes the
// accumulated gradients of every registered parameter and zeroes them.
class AdamOptimizer {
 public:
  struct Config {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamOptimizer(std::vector<Tensor> params, Config config);

  void step();
  void zero_grad();

  size_t step_count() const { return t_; }
  const Config& config() const { return config_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  Config config_;
  size_t t_ = 0;
};

}  // namespace headprune
