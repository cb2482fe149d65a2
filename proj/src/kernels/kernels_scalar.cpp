#include <cmath>

#include "headprune/kernels.hpp"

namespace headprune::kernels {
namespace {

void add_scalar(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(const double* a, const double* b, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_scalar(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_store_scalar(double alpha, const double* x, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void shift_store_scalar(const double* x, double c, double* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = x[i] + c;
}

double dot_scalar(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double reduce_sum_scalar(const double* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double reduce_max_scalar(const double* x, size_t n) {
  double m = -HUGE_VAL;
  for (size_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void adam_update_scalar(double* param, const double* grad, double* m, double* v, size_t n,
                        double lr_t, double beta1, double beta2, double eps) {
  for (size_t i = 0; i < n; ++i) {
    double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g);
    param[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table = {
      "scalar",          add_scalar,        mul_scalar, axpy_scalar,
      scale_store_scalar, shift_store_scalar, dot_scalar, reduce_sum_scalar,
      reduce_max_scalar, adam_update_scalar,
  };
  return table;
}

}  // namespace headprune::kernels
