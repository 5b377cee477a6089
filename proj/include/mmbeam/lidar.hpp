#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmbeam/ad/tensor.hpp"
#include "mmbeam/common.hpp"

// Sensor frame: x forward along the camera axis, y to the left, z up.

namespace mmbeam::lidar {

struct Point {
  double x = 0.0, y = 0.0, z = 0.0;
  double intensity = 0.0;
  bool operator==(const Point&) const = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const noexcept { return points.size(); }
  /// Throws ArgumentError on non-finite coordinates or negative intensity.
  void validate() const;
  bool operator==(const PointCloud&) const = default;
};

struct Roi {
  double x_min = 0.0, x_max = 64.0;
  double y_min = -32.0, y_max = 32.0;
  double z_min = -2.0, z_max = 4.0;

  void validate() const;
  bool contains(const Point& p) const;
};

struct BevConfig {
  Roi roi;
  double cell_size = 1.0;
  /// Intensity normaliser; max cell intensity / i_ref is clipped to 1.
  double i_ref = 1.0;
  /// Point count at which the density channel saturates.
  double density_saturation = 64.0;

  void validate() const;
  int rows() const;  // along x, far edge first
  int cols() const;  // along y, left edge first so columns run like image columns
  /// Cell of a point inside the roi as (row, col).
  std::pair<int, int> cell_of(const Point& p) const;
};

/// Planes [height, intensity, density], each rows x cols, values in [0,1].
struct BevImage {
  ad::Tensor<double> planes;  // [3, rows, cols]
  BevConfig config;

  int rows() const { return planes.dim(1); }
  int cols() const { return planes.dim(2); }
  double at(int channel, int row, int col) const {
    return planes[(static_cast<std::size_t>(channel) * rows() + row) * cols() + col];
  }
};

BevImage to_bev(const PointCloud& pc, const BevConfig& cfg);
/// Same result as calling to_bev on each cloud; clouds are rasterised in parallel.
std::vector<BevImage> to_bev_batch(std::span<const PointCloud> clouds, const BevConfig& cfg);
namespace reference {
std::vector<BevImage> to_bev_batch(std::span<const PointCloud> clouds, const BevConfig& cfg);
}

struct BackgroundModel {
  ad::Tensor<double> occupancy;  // [rows, cols], fraction of frames occupied
  int n_frames = 0;
  BevConfig config;
  /// 99th percentile of point intensities over all frames.
  double i_ref = 1.0;
};

BackgroundModel build_background(std::span<const PointCloud> frames, const BevConfig& cfg);
/// Drops points in cells with occupancy >= threshold; keeps input order.
PointCloud filter_background(const PointCloud& pc, const BackgroundModel& bg, double threshold);

/// Keeps points with atan2(y, x) in [azimuth_min, azimuth_max] degrees.
PointCloud crop_fov(const PointCloud& pc, double azimuth_min, double azimuth_max);

/// Drops floor(drop_fraction * N) points chosen uniformly, then adds
/// N(0, jitter_sigma^2) to every surviving coordinate.
PointCloud augment_pointcloud(const PointCloud& pc, double drop_fraction, double jitter_sigma, std::uint64_t seed);

/// y -> -y.
PointCloud flip_pointcloud(const PointCloud& pc);

/// Mirrors the column axis of a BEV image.
BevImage flip_bev(const BevImage& bev);

/// Quantile q in [0,1] of the point intensities (linear interpolation).
double intensity_quantile(std::span<const PointCloud> frames, double q);

/// Conversions to and from [N,4] (x, y, z, intensity) arrays.
ad::Tensor<float> to_tensor(const PointCloud& pc);
PointCloud from_tensor(const ad::Tensor<float>& t);

}  // namespace mmbeam::lidar
