#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "headprune/common.hpp"

namespace headprune {

using Shape = std::vector<size_t>;

size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense f64 array with an optional same-shape gradient accumulator.
// Value-semantic handle over shared storage; copies alias.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t size() const { return impl_->values.size(); }
  size_t ndim() const { return impl_->shape.size(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> values_mut() { return impl_->values; }

  bool has_grad() const { return impl_->grad_present; }
  std::span<const double> grad() const;
  // allocates a zero-filled gradient buffer on first use
  std::span<double> grad_mut();
  void clear_grad();  // zero-fill, keeps the buffer
  void drop_grad();   // removes the buffer entirely

  double item() const;

  // identity within one computation graph; -1 for tensors no graph has seen
  int64_t node_id() const { return impl_->node_id; }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Graph;
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool grad_present = false;
    bool requires_grad = false;
    int64_t node_id = -1;
    uint64_t graph_serial = 0;
  };
  std::shared_ptr<Impl> impl_;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
};

}  // namespace headprune
