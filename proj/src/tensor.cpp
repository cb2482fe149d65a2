#include "headprune/tensor.hpp"

#include <numeric>
#include <sstream>

namespace headprune {

size_t shape_size(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->values.assign(shape_size(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->values) v = value;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

std::span<const double> Tensor::grad() const {
  if (!impl_->grad_present) throw Error("tensor: gradient not populated");
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  if (!impl_->grad_present) {
    impl_->grad.assign(impl_->values.size(), 0.0);
    impl_->grad_present = true;
  }
  return impl_->grad;
}

void Tensor::clear_grad() {
  if (impl_->grad_present) impl_->grad.assign(impl_->values.size(), 0.0);
}

void Tensor::drop_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
  impl_->grad_present = false;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() on non-scalar shape " + shape_str(shape()));
  return impl_->values[0];
}

}  // namespace headprune
