#pragma once

#include <cmath>
#include <vector>

namespace headprune::oracle {

// Brute-force Spearman, written independently of the importance module: ranks
// come from pairwise counting (1 + #smaller + half the remaining ties) rather
// than sorting, then Pearson correlation over the explicit rank vectors.
inline std::vector<double> counting_ranks(const std::vector<double>& x) {
  std::vector<double> ranks(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    size_t less = 0, equal = 0;
    for (size_t j = 0; j < x.size(); ++j) {
      less += x[j] < x[i] ? 1 : 0;
      equal += x[j] == x[i] ? 1 : 0;
    }
    ranks[i] = 1.0 + static_cast<double>(less) + (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return ranks;
}

inline double naive_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::vector<double> ra = counting_ranks(a), rb = counting_ranks(b);
  const size_t n = ra.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace headprune::oracle
