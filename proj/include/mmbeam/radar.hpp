#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "mmbeam/ad/tensor.hpp"
#include "mmbeam/common.hpp"

namespace mmbeam::radar {

using cplx = std::complex<double>;

/// IQ samples indexed [antenna][sample][chirp].
struct RadarCube {
  int antennas = 0, samples = 0, chirps = 0;
  std::vector<cplx> iq;

  RadarCube() = default;
  RadarCube(int a, int s, int c);
  cplx& at(int a, int s, int c) { return iq[(static_cast<std::size_t>(a) * samples + s) * chirps + c]; }
  const cplx& at(int a, int s, int c) const { return iq[(static_cast<std::size_t>(a) * samples + s) * chirps + c]; }
  void validate() const;
};

/// Magnitude maps, each scaled so that its maximum is 1 (zero maps stay 0).
struct RadarMaps {
  ad::Tensor<double> h_ra;    // [range_bins, angle_bins]
  ad::Tensor<double> h_rv;    // [range_bins, velocity_bins]; empty when velocity is disabled
  ad::Tensor<double> concat;  // [range_bins, angle_bins (+ velocity_bins)]
};

/// Range FFT over samples, zero-padded angle FFT over antennas (centre-shifted),
/// magnitude averaged over chirps. Output [samples, a_bins].
ad::Tensor<double> range_angle_map(const RadarCube& cube, int a_bins);
/// Range FFT over samples, Doppler FFT over chirps (centre-shifted), magnitude
/// averaged over antennas. Output [samples, chirps].
ad::Tensor<double> range_velocity_map(const RadarCube& cube);

/// Normalises both maps and concatenates them column-wise. With
/// include_velocity = false only the range-angle half is produced.
RadarMaps make_maps(const RadarCube& cube, int a_bins, bool include_velocity = true);
/// Batch form; cubes are processed in parallel with identical results.
std::vector<RadarMaps> make_maps_batch(std::span<const RadarCube> cubes, int a_bins, bool include_velocity = true);

/// Rebuilds `concat` from h_ra and h_rv.
void rebuild_concat(RadarMaps& maps);

/// m -> clip(m (1 + u), 0, 1), u ~ U[-noise_fraction, noise_fraction].
RadarMaps augment_radar(const RadarMaps& maps, double noise_fraction, std::uint64_t seed);

/// Mirrors the angle axis of h_ra about its zero-frequency bin,
/// j -> (a_bins - j) mod a_bins. Radial velocity is unchanged by a lateral
/// mirror, so h_rv is left as is.
RadarMaps flip_radar(const RadarMaps& maps);

/// Shifted bin index of a normalised frequency f in [-0.5, 0.5) on an n-point grid.
int shifted_bin(double f, int n);

/// Conversions to and from [A,S,C,2] (real, imaginary) arrays.
ad::Tensor<float> to_tensor(const RadarCube& cube);
RadarCube from_tensor(const ad::Tensor<float>& t);

namespace reference {
/// Dense O(N^2) DFT used as the FFT oracle. sign = -1 for the forward transform.
std::vector<cplx> dft(std::span<const cplx> x, int sign = -1);
}  // namespace reference

}  // namespace mmbeam::radar
