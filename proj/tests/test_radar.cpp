#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mmbeam/radar.hpp"

using namespace mmbeam;
using namespace mmbeam::radar;

namespace {

RadarCube random_cube(std::uint64_t seed, int a, int s, int c) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RadarCube cube(a, s, c);
  for (auto& v : cube.iq) v = cplx(n(rng), n(rng));
  return cube;
}

// exp(j 2 pi (fa a + fs s + fd c)) with amplitude `amp`.
RadarCube tone(int a, int s, int c, double fa, double fs, double fd, double amp = 1.0) {
  RadarCube cube(a, s, c);
  for (int i = 0; i < a; ++i)
    for (int k = 0; k < s; ++k)
      for (int l = 0; l < c; ++l)
        cube.at(i, k, l) = amp * std::polar(1.0, 2.0 * std::numbers::pi * (fa * i + fs * k + fd * l));
  return cube;
}

std::pair<int, int> argmax2(const ad::Tensor<double>& t) {
  const int cols = t.dim(1);
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    if (t[i] > t[best]) best = i;
  return {static_cast<int>(best / cols), static_cast<int>(best % cols)};
}

// Dense-DFT range-angle map: 2-D transform of the zero-padded
// [a_bins, S] slice per chirp, centre-shifted along angle, averaged.
ad::Tensor<double> dense_range_angle(const RadarCube& cube, int a_bins) {
  const int A = cube.antennas, S = cube.samples, C = cube.chirps;
  ad::Tensor<double> map({S, a_bins});
  for (int c = 0; c < C; ++c) {
    std::vector<std::vector<cplx>> rows(a_bins, std::vector<cplx>(S));
    for (int a = 0; a < A; ++a)
      for (int s = 0; s < S; ++s) rows[a][s] = cube.at(a, s, c);
    for (auto& r : rows) r = reference::dft(r);
    for (int s = 0; s < S; ++s) {
      std::vector<cplx> col(a_bins);
      for (int a = 0; a < a_bins; ++a) col[a] = rows[a][s];
      const auto f = reference::dft(col);
      for (int k = 0; k < a_bins; ++k) map[static_cast<std::size_t>(s) * a_bins + (k + a_bins / 2) % a_bins] += std::abs(f[k]);
    }
  }
  for (auto& v : map.vec()) v /= C;
  return map;
}

ad::Tensor<double> dense_range_velocity(const RadarCube& cube) {
  const int A = cube.antennas, S = cube.samples, C = cube.chirps;
  ad::Tensor<double> map({S, C});
  for (int a = 0; a < A; ++a) {
    std::vector<std::vector<cplx>> rows(S, std::vector<cplx>(C));
    for (int c = 0; c < C; ++c) {
      std::vector<cplx> col(S);
      for (int s = 0; s < S; ++s) col[s] = cube.at(a, s, c);
      const auto f = reference::dft(col);
      for (int s = 0; s < S; ++s) rows[s][c] = f[s];
    }
    for (int s = 0; s < S; ++s) {
      const auto f = reference::dft(rows[s]);
      for (int k = 0; k < C; ++k) map[static_cast<std::size_t>(s) * C + (k + C / 2) % C] += std::abs(f[k]);
    }
  }
  for (auto& v : map.vec()) v /= A;
  return map;
}

double max_abs_diff(const ad::Tensor<double>& a, const ad::Tensor<double>& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("radar") {
  TEST_CASE("dense DFT oracle inverts") {
    Rng rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<cplx> x(13);
    for (auto& v : x) v = cplx(n(rng), n(rng));
    const auto X = reference::dft(x, -1);
    const auto y = reference::dft(X, +1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] / 13.0 - x[i]) < 1e-12);
  }

  TEST_CASE("FFT maps agree with the dense DFT") {
    const int shapes[][4] = {{4, 16, 8, 64}, {4, 32, 16, 16}, {3, 12, 6, 8}, {1, 8, 4, 5}, {4, 64, 32, 64}};
    std::uint64_t seed = 0;
    for (const auto& s : shapes) {
      const auto cube = random_cube(++seed, s[0], s[1], s[2]);
      const auto ra = range_angle_map(cube, s[3]);
      const auto rv = range_velocity_map(cube);
      const double scale = std::sqrt(static_cast<double>(s[1]) * s[0] * s[2]);
      CHECK(max_abs_diff(ra, dense_range_angle(cube, s[3])) < 1e-10 * scale);
      CHECK(max_abs_diff(rv, dense_range_velocity(cube)) < 1e-10 * scale);
    }
  }

  TEST_CASE("on-grid tone peaks at the shifted bins") {
    const int A = 4, S = 32, C = 16, NA = 64;
    for (int ka : {-32, -7, 0, 5, 31})
      for (int kd : {-8, -3, 0, 7}) {
        const int ks = 9;
        const auto cube = tone(A, S, C, static_cast<double>(ka) / NA, static_cast<double>(ks) / S,
                               static_cast<double>(kd) / C);
        const auto ra = range_angle_map(cube, NA);
        const auto rv = range_velocity_map(cube);
        const auto [r1, c1] = argmax2(ra);
        const auto [r2, c2] = argmax2(rv);
        CHECK(r1 == ks);
        CHECK(c1 == shifted_bin(static_cast<double>(ka) / NA, NA));
        CHECK(c1 == ka + NA / 2);
        CHECK(r2 == ks);
        CHECK(c2 == kd + C / 2);
        // Exact magnitudes for an on-grid tone.
        CHECK(ra[static_cast<std::size_t>(r1) * NA + c1] == doctest::Approx(A * S).epsilon(1e-9));
        CHECK(rv[static_cast<std::size_t>(r2) * C + c2] == doctest::Approx(S * C).epsilon(1e-9));
      }
  }

  TEST_CASE("stationary target sits in the centre Doppler column") {
    const auto cube = tone(4, 16, 8, 0.125, 0.25, 0.0);
    const auto [r, c] = argmax2(range_velocity_map(cube));
    CHECK(r == 4);
    CHECK(c == 4);
  }

  TEST_CASE("shifted_bin wraps") {
    CHECK(shifted_bin(0.0, 64) == 32);
    CHECK(shifted_bin(-0.5, 64) == 0);
    CHECK(shifted_bin(0.5, 64) == 0);
    CHECK(shifted_bin(31.0 / 64, 64) == 63);
    CHECK(shifted_bin(0.0, 5) == 2);
  }

  TEST_CASE("maps are normalised and concatenated") {
    const auto cube = random_cube(11, 4, 16, 8);
    const auto m = make_maps(cube, 32, true);
    CHECK(m.concat.shape() == ad::Shape{16, 40});
    double mx = 0.0;
    for (double v : m.h_ra.vec()) {
      CHECK(v >= 0.0);
      mx = std::max(mx, v);
    }
    CHECK(mx == doctest::Approx(1.0));
    for (int r = 0; r < 16; ++r) {
      CHECK(m.concat[r * 40 + 3] == m.h_ra[r * 32 + 3]);
      CHECK(m.concat[r * 40 + 32 + 5] == m.h_rv[r * 8 + 5]);
    }
    const auto only = make_maps(cube, 32, false);
    CHECK(only.concat.shape() == ad::Shape{16, 32});
    CHECK(only.h_rv.empty());
    // Zero cubes stay zero.
    const auto z = make_maps(RadarCube(4, 8, 4), 16);
    for (double v : z.concat.vec()) CHECK(v == 0.0);
  }

  TEST_CASE("batch equals per-cube maps") {
    std::vector<RadarCube> cubes;
    for (std::uint64_t s = 0; s < 9; ++s) cubes.push_back(random_cube(50 + s, 4, 16, 8));
    const auto batch = make_maps_batch(cubes, 64);
    for (std::size_t i = 0; i < cubes.size(); ++i) CHECK(batch[i].concat == make_maps(cubes[i], 64).concat);
  }

  TEST_CASE("flip mirrors the angle axis and is an involution") {
    const auto cube = random_cube(5, 4, 16, 8);
    const auto m = make_maps(cube, 64);
    const auto f = flip_radar(m);
    CHECK(flip_radar(f).concat == m.concat);
    CHECK(f.h_rv == m.h_rv);
    // A tone at angle frequency fa maps to -fa.
    for (int ka : {-20, -1, 3, 17}) {
      const auto a = make_maps(tone(4, 16, 8, ka / 64.0, 0.25, 0.0), 64);
      const auto b = make_maps(tone(4, 16, 8, -ka / 64.0, 0.25, 0.0), 64);
      CHECK(max_abs_diff(flip_radar(a).h_ra, b.h_ra) < 1e-9);
    }
  }

  TEST_CASE("augment stays in bounds and is seeded") {
    const auto m = make_maps(random_cube(8, 4, 16, 8), 32);
    const auto a = augment_radar(m, 0.2, 17);
    CHECK(a.concat == augment_radar(m, 0.2, 17).concat);
    CHECK_FALSE(a.concat == augment_radar(m, 0.2, 18).concat);
    for (std::size_t i = 0; i < m.h_ra.size(); ++i) {
      CHECK(a.h_ra[i] >= 0.0);
      CHECK(a.h_ra[i] <= 1.0);
      CHECK(a.h_ra[i] >= m.h_ra[i] * 0.8 - 1e-12);
      CHECK(a.h_ra[i] <= std::min(1.0, m.h_ra[i] * 1.2) + 1e-12);
    }
    CHECK(augment_radar(m, 0.0, 1).concat == m.concat);
    CHECK_THROWS_AS(augment_radar(m, 1.5, 1), ArgumentError);
  }

  TEST_CASE("errors and tensor round trip") {
    CHECK_THROWS_AS(RadarCube(0, 4, 4), ArgumentError);
    const auto cube = random_cube(1, 4, 16, 8);
    CHECK_THROWS_AS(range_angle_map(cube, 2), ArgumentError);
    RadarCube bad = cube;
    bad.iq[3] = cplx(std::nan(""), 0.0);
    CHECK_THROWS_AS(make_maps(bad, 64), ArgumentError);
    const auto t = to_tensor(cube);
    CHECK(t.shape() == ad::Shape{4, 16, 8, 2});
    const auto back = from_tensor(t);
    for (std::size_t i = 0; i < cube.iq.size(); ++i)
      CHECK(std::abs(back.iq[i] - cplx(static_cast<float>(cube.iq[i].real()), static_cast<float>(cube.iq[i].imag()))) == 0.0);
    CHECK_THROWS_AS(from_tensor(ad::Tensor<float>({4, 16, 8})), DataError);
  }

  TEST_CASE("dense DFT preserves energy") {
    const auto cube = random_cube(77, 1, 48, 1);
    const auto f = reference::dft(cube.iq);
    double ex = 0.0, ef = 0.0;
    for (const auto& v : cube.iq) ex += std::norm(v);
    for (const auto& v : f) ef += std::norm(v);
    CHECK(ef == doctest::Approx(48.0 * ex).epsilon(1e-12));
  }

  TEST_CASE("maps ignore the overall cube amplitude") {
    const auto cube = random_cube(78, 4, 16, 8);
    RadarCube scaled = cube;
    for (auto& v : scaled.iq) v *= 3.7;
    const auto a = make_maps(cube, 32), b = make_maps(scaled, 32);
    REQUIRE(a.concat.shape() == b.concat.shape());
    for (std::size_t i = 0; i < a.concat.size(); ++i) CHECK(b.concat[i] == doctest::Approx(a.concat[i]).epsilon(1e-12));
  }
}
