#include <doctest.h>

#include <random>
#include <vector>

#include "mmbeam/common.hpp"
#include "mmbeam/kernels/conv.hpp"
#include "mmbeam/kernels/gemm.hpp"

using namespace mmbeam;
using namespace mmbeam::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

// Restores the thread count on scope exit.
struct ThreadGuard {
  int saved = max_threads();
  ~ThreadGuard() { set_threads(saved); }
};

template <typename T>
void check_close(const std::vector<T>& a, const std::vector<T>& b) {
  // Contraction into FMA may differ between the blocked and the naive loop.
  const double tol = std::is_same_v<T, float> ? 1e-5 : 1e-13;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

template <typename T>
void check_gemm(int M, int N, int K, std::uint64_t seed) {
  const auto A = random_vec<T>(static_cast<std::size_t>(M) * K, seed);
  const auto B = random_vec<T>(static_cast<std::size_t>(K) * N, seed + 1);
  const auto C0 = random_vec<T>(static_cast<std::size_t>(M) * N, seed + 2);
  for (bool acc : {false, true}) {
    auto c1 = C0, c2 = C0;
    gemm_nn(M, N, K, A.data(), B.data(), c1.data(), acc);
    reference::gemm_nn(M, N, K, A.data(), B.data(), c2.data(), acc);
    check_close(c1, c2);
    // B read as [N,K] and A as [K,M] reuse the same buffers.
    c1 = C0;
    c2 = C0;
    gemm_nt(M, N, K, A.data(), B.data(), c1.data(), acc);
    reference::gemm_nt(M, N, K, A.data(), B.data(), c2.data(), acc);
    check_close(c1, c2);
    c1 = C0;
    c2 = C0;
    gemm_tn(M, N, K, A.data(), B.data(), c1.data(), acc);
    reference::gemm_tn(M, N, K, A.data(), B.data(), c2.data(), acc);
    check_close(c1, c2);
  }
}

template <typename T>
void check_conv(const ConvGeometry& g, std::uint64_t seed) {
  const std::size_t nin = static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width;
  const std::size_t nw = static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel;
  const std::size_t nout = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
  const auto x = random_vec<T>(nin, seed), w = random_vec<T>(nw, seed + 1), b = random_vec<T>(g.out_channels, seed + 2);
  const auto go = random_vec<T>(nout, seed + 3);
  std::vector<T> y1(nout), y2(nout);
  conv2d_forward(g, x.data(), w.data(), b.data(), y1.data());
  reference::conv2d_forward(g, x.data(), w.data(), b.data(), y2.data());
  for (std::size_t i = 0; i < nout; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-5));
  std::vector<T> gi1(nin), gi2(nin), gw1(nw), gw2(nw), gb1(g.out_channels), gb2(g.out_channels);
  conv2d_backward_input(g, w.data(), go.data(), gi1.data());
  reference::conv2d_backward_input(g, w.data(), go.data(), gi2.data());
  for (std::size_t i = 0; i < nin; ++i) CHECK(gi1[i] == doctest::Approx(gi2[i]).epsilon(1e-5));
  conv2d_backward_weight(g, x.data(), go.data(), gw1.data(), gb1.data());
  reference::conv2d_backward_weight(g, x.data(), go.data(), gw2.data(), gb2.data());
  for (std::size_t i = 0; i < nw; ++i) CHECK(gw1[i] == doctest::Approx(gw2[i]).epsilon(1e-5));
  for (int i = 0; i < g.out_channels; ++i) CHECK(gb1[i] == doctest::Approx(gb2[i]).epsilon(1e-5));
}

// Runs every kernel at 1 and 4 threads and requires identical bits.
template <typename T>
void check_thread_invariance(const ConvGeometry& g, std::uint64_t seed) {
  ThreadGuard guard;
  const std::size_t nin = static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width;
  const std::size_t nw = static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel * g.kernel;
  const std::size_t nout = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
  const auto x = random_vec<T>(nin, seed), w = random_vec<T>(nw, seed + 1), go = random_vec<T>(nout, seed + 2);
  auto run = [&](int threads) {
    set_threads(threads);
    std::vector<T> y(nout), gi(nin), gw(nw), gb(g.out_channels);
    conv2d_forward(g, x.data(), w.data(), static_cast<const T*>(nullptr), y.data());
    conv2d_backward_input(g, w.data(), go.data(), gi.data());
    conv2d_backward_weight(g, x.data(), go.data(), gw.data(), gb.data());
    std::vector<T> all = y;
    all.insert(all.end(), gi.begin(), gi.end());
    all.insert(all.end(), gw.begin(), gw.end());
    all.insert(all.end(), gb.begin(), gb.end());
    return all;
  };
  CHECK(run(1) == run(4));
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("gemm kernels equal the reference loops") {
    const int dims[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 9, 33}, {64, 48, 80}, {130, 7, 129}};
    std::uint64_t seed = 0;
    for (const auto& d : dims) {
      check_gemm<float>(d[0], d[1], d[2], seed += 10);
      check_gemm<double>(d[0], d[1], d[2], seed += 10);
    }
  }

  TEST_CASE("gemm is thread-count invariant") {
    ThreadGuard guard;
    const int M = 97, N = 61, K = 129;
    const auto A = random_vec<float>(M * K, 1), B = random_vec<float>(K * N, 2);
    std::vector<float> c1(M * N), c4(M * N);
    set_threads(1);
    gemm_nn(M, N, K, A.data(), B.data(), c1.data(), false);
    set_threads(4);
    gemm_nn(M, N, K, A.data(), B.data(), c4.data(), false);
    CHECK(c1 == c4);
  }

  TEST_CASE("conv kernels equal the reference loops") {
    std::uint64_t seed = 0;
    for (int k : {1, 3, 7})
      for (int stride : {1, 2})
        for (int pad : {0, k / 2}) {
          ConvGeometry g{2, 3, 11, 9, 4, k, stride, pad};
          check_conv<float>(g, seed += 10);
          check_conv<double>(g, seed += 10);
        }
  }

  TEST_CASE("conv kernels are thread-count invariant") {
    check_thread_invariance<float>(ConvGeometry{5, 3, 12, 10, 6, 3, 1, 1}, 7);
    check_thread_invariance<double>(ConvGeometry{3, 2, 9, 9, 4, 3, 2, 1}, 9);
  }

  TEST_CASE("geometry helpers") {
    ConvGeometry g{1, 3, 224, 224, 64, 7, 2, 3};
    CHECK(g.out_height() == 112);
    CHECK(g.out_width() == 112);
    CHECK(g.macs() == 118013952L);
  }
}
