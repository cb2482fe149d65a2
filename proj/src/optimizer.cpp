#include "headprune/optimizer.hpp"

#include <cmath>

#include "headprune/kernels.hpp"

namespace headprune {

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, Config config) : config_(config) {
  if (config.lr < 0.0) throw ValidationError("optimizer: lr must be nonnegative");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0) {
    throw ValidationError("optimizer: betas must lie in [0, 1)");
  }
  slots_.reserve(params.size());
  for (Tensor& p : params) {
    if (!p.defined()) throw ValidationError("optimizer: undefined parameter");
    if (!p.requires_grad()) throw ValidationError("optimizer: parameter does not require grad");
    Slot s;
    s.m.assign(p.size(), 0.0);
    s.v.assign(p.size(), 0.0);
    s.param = std::move(p);
    slots_.push_back(std::move(s));
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double lr_t = config_.lr * std::sqrt(bc2) / bc1;
  const auto& k = kernels::active();
  for (Slot& s : slots_) {
    if (!s.param.has_grad()) {
      throw Error("optimizer: parameter has no gradient; run backward before step");
    }
    k.adam_update(s.param.values_mut().data(), s.param.grad().data(), s.m.data(), s.v.data(),
                  s.param.size(), lr_t, config_.beta1, config_.beta2, config_.eps);
    s.param.drop_grad();
  }
}

void AdamOptimizer::zero_grad() {
  for (Slot& s : slots_) s.param.clear_grad();
}

}  // namespace headprune
