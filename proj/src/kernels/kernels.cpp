#include "headprune/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

#if defined(__x86_64__) || defined(_M_X64)
#include <cpuid.h>
#endif

namespace headprune::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  unsigned int eax = 0, ebx = 0, ecx = 0, edx = 0;
  if (__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) {
    return (ebx & (1u << 5)) != 0;  // AVX2 bit in EBX
  }
#endif
  return false;
}

const KernelTable& active() {
  static const KernelTable* chosen = [] {
    const char* env = std::getenv("HEADPRUNE_KERNELS");
    if (env != nullptr) {
      if (std::strcmp(env, "scalar") == 0) return &scalar_table();
      if (std::strcmp(env, "avx2") == 0) {
        if (!avx2_supported()) throw std::runtime_error("HEADPRUNE_KERNELS=avx2 but CPU lacks AVX2");
        return &avx2_table();
      }
      throw std::runtime_error(std::string("unknown HEADPRUNE_KERNELS value: ") + env);
    }
    return avx2_supported() ? &avx2_table() : &scalar_table();
  }();
  return *chosen;
}

}  // namespace headprune::kernels
