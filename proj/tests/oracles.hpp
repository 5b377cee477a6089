#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "mmbeam/metrics.hpp"

namespace mmbeam::test {

/// Double-loop distance-based accuracy written straight from its definition.
inline double naive_dba(const std::vector<int>& truth, const std::vector<std::array<int, 3>>& top3) {
  double total = 0.0;
  for (int K = 1; K <= 3; ++K) {
    double err = 0.0;
    for (std::size_t n = 0; n < truth.size(); ++n) {
      double best = 1.0;
      for (int k = 0; k < K; ++k) {
        const double d = std::abs(top3[n][k] - truth[n]) / 5.0;
        best = std::min(best, std::min(d, 1.0));
      }
      err += best;
    }
    total += 1.0 - err / static_cast<double>(truth.size());
  }
  return total / 3.0;
}

/// Three distinct random beam ids.
inline std::array<int, 3> random_top3(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(1, kNumBeams);
  std::array<int, 3> t{};
  for (int k = 0; k < 3; ++k) {
    int v;
    do v = u(rng);
    while (std::find(t.begin(), t.begin() + k, v) != t.begin() + k);
    t[k] = v;
  }
  return t;
}

}  // namespace mmbeam::test
