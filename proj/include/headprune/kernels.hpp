#pragma once

#include <cstddef>
#include <string>

namespace headprune::kernels {

// Double-precision vector kernels behind the tensor math. Every entry has a
// scalar reference implementation and an AVX2 variant; the active table is
// picked once at startup (cpuid, overridable with HEADPRUNE_KERNELS=scalar|avx2).
//
// Lane-wise kernels (add..adam_update) are bit-exact across variants. The
// horizontal reductions (dot, reduce_sum) may differ in summation order and
// are equivalence-tested under a relative tolerance instead.
struct KernelTable {
  const char* name;

  void (*add)(const double* a, const double* b, double* out, size_t n);
  void (*mul)(const double* a, const double* b, double* out, size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, size_t n);
  // out = alpha * x
  void (*scale_store)(double alpha, const double* x, double* out, size_t n);
  // out = x + c
  void (*shift_store)(const double* x, double c, double* out, size_t n);

  double (*dot)(const double* a, const double* b, size_t n);
  double (*reduce_sum)(const double* x, size_t n);
  double (*reduce_max)(const double* x, size_t n);

  // Adam with bias-corrected step size folded into lr_t:
  //   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2;
  //   p -= lr_t * m / (sqrt(v) + eps)
  void (*adam_update)(double* param, const double* grad, double* m, double* v, size_t n,
                      double lr_t, double beta1, double beta2, double eps);
};

const KernelTable& scalar_table();
const KernelTable& avx2_table();
bool avx2_supported();

// Active table, resolved once per process.
const KernelTable& active();

}  // namespace headprune::kernels
