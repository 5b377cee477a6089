#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mmbeam/ad/nn.hpp"

namespace mmbeam::test {

inline ad::Tensor<double> random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  ad::Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.vec()) v = u(rng);
  return t;
}

/// Values whose pairwise gaps are at least `gap`, randomly placed; keeps
/// max/relu kinks far from the finite-difference step.
inline ad::Tensor<double> spaced_tensor(ad::Shape shape, Rng& rng, double gap = 0.01) {
  ad::Tensor<double> t(std::move(shape));
  std::vector<int> perm(t.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  std::shuffle(perm.begin(), perm.end(), rng);
  const double mid = 0.5 * static_cast<double>(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) t[i] = (perm[i] - mid + 0.5) * gap;
  return t;
}

/// Central finite-difference check of d(sum(out * R))/dp for every listed
/// parameter, R a fixed random projection. Returns the largest norm-wise
/// relative error ||g_analytic - g_numeric|| / (||g_analytic|| + ||g_numeric||).
inline double gradcheck(const std::vector<ad::Parameter<double>*>& params,
                        const std::function<ad::Var<double>(ad::Tape<double>&)>& build, std::uint64_t seed,
                        double h = 1e-5) {
  Rng rng(seed);
  ad::Tensor<double> proj;
  auto loss_of = [&](bool backward) {
    ad::Tape<double> tape;
    const auto out = build(tape);
    if (proj.empty()) proj = random_tensor(out.shape(), rng);
    const auto loss = ad::sum(ad::mul(out, tape.constant(proj)));
    if (backward) {
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
    }
    return loss.value()[0];
  };
  loss_of(true);
  std::vector<ad::Tensor<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = params[k]->value.vec();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + h;
      const double fp = loss_of(false);
      v[i] = keep - h;
      const double fm = loss_of(false);
      v[i] = keep;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      diff2 += (a - num) * (a - num);
      a2 += a * a;
      n2 += num * num;
    }
    // Structurally zero gradients (e.g. a bias under a shift-invariant
    // softmax) leave only rounding noise on both sides; below 1e-8 the
    // absolute difference is reported instead of the relative one.
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    const double rel = std::max(a2, n2) < 1e-16 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
    worst = std::max(worst, rel);
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mmbeam_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace mmbeam::test
