#include "mmbeam/radar.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace mmbeam::radar {

RadarCube::RadarCube(int a, int s, int c) : antennas(a), samples(s), chirps(c) {
  require(a >= 1 && s >= 1 && c >= 1, "radar cube dimensions must be positive");
  iq.assign(static_cast<std::size_t>(a) * s * c, cplx(0.0, 0.0));
}

void RadarCube::validate() const {
  require(antennas >= 1 && samples >= 1 && chirps >= 1, "radar cube dimensions must be positive");
  require(iq.size() == static_cast<std::size_t>(antennas) * samples * chirps, "radar cube size mismatch");
  for (const auto& v : iq)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw ArgumentError("radar cube has non-finite entries");
}

namespace {

// 2-D forward transforms of fixed size. Plans are built once with
// FFTW_ESTIMATE (deterministic algorithm choice) under a mutex and executed
// through the thread-safe new-array interface.
class Fft2d {
 public:
  Fft2d(int n0, int n1) : n0_(n0), n1_(n1) {
    Buffer in(n0, n1), out(n0, n1);
    plan_ = fftw_plan_dft_2d(n0, n1, in.get(), out.get(), FFTW_FORWARD, FFTW_ESTIMATE);
    if (!plan_) throw NumericError("FFTW plan creation failed");
  }
  ~Fft2d() { fftw_destroy_plan(plan_); }
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  struct Buffer {
    Buffer(int n0, int n1)
        : p(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(n0) * n1))),
          n(static_cast<std::size_t>(n0) * n1) {
      if (!p) throw std::bad_alloc();
    }
    ~Buffer() { fftw_free(p); }
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
    fftw_complex* get() { return p; }
    void zero() { std::fill_n(reinterpret_cast<double*>(p), 2 * n, 0.0); }
    fftw_complex* p;
    std::size_t n;
  };

  void execute(Buffer& in, Buffer& out) const { fftw_execute_dft(plan_, in.get(), out.get()); }
  int n0() const { return n0_; }
  int n1() const { return n1_; }

 private:
  int n0_, n1_;
  fftw_plan plan_;
};

const Fft2d& plan_for(int n0, int n1) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<Fft2d>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{n0, n1}];
  if (!slot) slot = std::make_unique<Fft2d>(n0, n1);
  return *slot;
}

double magnitude(const fftw_complex& v) { return std::hypot(v[0], v[1]); }

void normalise_max(ad::Tensor<double>& t) {
  double m = 0.0;
  for (double v : t.vec()) m = std::max(m, v);
  if (m > 0.0)
    for (auto& v : t.vec()) v /= m;
}

}  // namespace

int shifted_bin(double f, int n) {
  const int k = static_cast<int>(std::lround(f * n));
  return ((k + n / 2) % n + n) % n;
}

ad::Tensor<double> range_angle_map(const RadarCube& cube, int a_bins) {
  cube.validate();
  if (a_bins < cube.antennas) throw ArgumentError("range_angle_map: a_bins must be at least the antenna count");
  const int S = cube.samples, A = cube.antennas, C = cube.chirps;
  const Fft2d& fft = plan_for(a_bins, S);
  Fft2d::Buffer in(a_bins, S), out(a_bins, S);
  ad::Tensor<double> map({S, a_bins});
  for (int c = 0; c < C; ++c) {
    in.zero();
    for (int a = 0; a < A; ++a)
      for (int s = 0; s < S; ++s) {
        const cplx v = cube.at(a, s, c);
        in.p[static_cast<std::size_t>(a) * S + s][0] = v.real();
        in.p[static_cast<std::size_t>(a) * S + s][1] = v.imag();
      }
    fft.execute(in, out);
    for (int k = 0; k < a_bins; ++k) {
      const int col = (k + a_bins / 2) % a_bins;
      for (int r = 0; r < S; ++r)
        map[static_cast<std::size_t>(r) * a_bins + col] += magnitude(out.p[static_cast<std::size_t>(k) * S + r]);
    }
  }
  for (auto& v : map.vec()) v /= C;
  return map;
}

ad::Tensor<double> range_velocity_map(const RadarCube& cube) {
  cube.validate();
  const int S = cube.samples, A = cube.antennas, C = cube.chirps;
  const Fft2d& fft = plan_for(S, C);
  Fft2d::Buffer in(S, C), out(S, C);
  ad::Tensor<double> map({S, C});
  for (int a = 0; a < A; ++a) {
    for (int s = 0; s < S; ++s)
      for (int c = 0; c < C; ++c) {
        const cplx v = cube.at(a, s, c);
        in.p[static_cast<std::size_t>(s) * C + c][0] = v.real();
        in.p[static_cast<std::size_t>(s) * C + c][1] = v.imag();
      }
    fft.execute(in, out);
    for (int r = 0; r < S; ++r)
      for (int k = 0; k < C; ++k)
        map[static_cast<std::size_t>(r) * C + (k + C / 2) % C] += magnitude(out.p[static_cast<std::size_t>(r) * C + k]);
  }
  for (auto& v : map.vec()) v /= A;
  return map;
}

void rebuild_concat(RadarMaps& maps) {
  const int R = maps.h_ra.dim(0), NA = maps.h_ra.dim(1);
  const int NV = maps.h_rv.empty() ? 0 : maps.h_rv.dim(1);
  if (NV > 0 && maps.h_rv.dim(0) != R) throw ArgumentError("radar maps disagree on range bins");
  maps.concat = ad::Tensor<double>({R, NA + NV});
  for (int r = 0; r < R; ++r) {
    for (int j = 0; j < NA; ++j)
      maps.concat[static_cast<std::size_t>(r) * (NA + NV) + j] = maps.h_ra[static_cast<std::size_t>(r) * NA + j];
    for (int j = 0; j < NV; ++j)
      maps.concat[static_cast<std::size_t>(r) * (NA + NV) + NA + j] = maps.h_rv[static_cast<std::size_t>(r) * NV + j];
  }
}

RadarMaps make_maps(const RadarCube& cube, int a_bins, bool include_velocity) {
  RadarMaps m;
  m.h_ra = range_angle_map(cube, a_bins);
  normalise_max(m.h_ra);
  if (include_velocity) {
    m.h_rv = range_velocity_map(cube);
    normalise_max(m.h_rv);
  }
  rebuild_concat(m);
  return m;
}

std::vector<RadarMaps> make_maps_batch(std::span<const RadarCube> cubes, int a_bins, bool include_velocity) {
  std::vector<RadarMaps> out(cubes.size());
  const long n = static_cast<long>(cubes.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) out[i] = make_maps(cubes[i], a_bins, include_velocity);
  return out;
}

RadarMaps augment_radar(const RadarMaps& maps, double noise_fraction, std::uint64_t seed) {
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0))
    throw ArgumentError("radar noise fraction must be in [0,1]");
  RadarMaps out = maps;
  if (noise_fraction == 0.0) return out;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-noise_fraction, noise_fraction);
  for (auto* t : {&out.h_ra, &out.h_rv})
    for (auto& v : t->vec()) v = std::clamp(v * (1.0 + u(rng)), 0.0, 1.0);
  rebuild_concat(out);
  return out;
}

RadarMaps flip_radar(const RadarMaps& maps) {
  RadarMaps out = maps;
  const int R = maps.h_ra.dim(0), N = maps.h_ra.dim(1);
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < N; ++j)
      out.h_ra[static_cast<std::size_t>(r) * N + j] = maps.h_ra[static_cast<std::size_t>(r) * N + (N - j) % N];
  rebuild_concat(out);
  return out;
}

ad::Tensor<float> to_tensor(const RadarCube& cube) {
  ad::Tensor<float> t({cube.antennas, cube.samples, cube.chirps, 2});
  for (std::size_t i = 0; i < cube.iq.size(); ++i) {
    t[2 * i] = static_cast<float>(cube.iq[i].real());
    t[2 * i + 1] = static_cast<float>(cube.iq[i].imag());
  }
  return t;
}

RadarCube from_tensor(const ad::Tensor<float>& t) {
  if (t.rank() != 4 || t.dim(3) != 2) throw DataError("radar tensor must have shape [A,S,C,2]");
  RadarCube cube(t.dim(0), t.dim(1), t.dim(2));
  for (std::size_t i = 0; i < cube.iq.size(); ++i) {
    cube.iq[i] = cplx(t[2 * i], t[2 * i + 1]);
    if (!std::isfinite(t[2 * i]) || !std::isfinite(t[2 * i + 1])) throw DataError("radar tensor has non-finite entries");
  }
  return cube;
}

std::vector<cplx> reference::dft(std::span<const cplx> x, int sign) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * i) % n) / static_cast<double>(n);
      acc += x[i] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace mmbeam::radar
