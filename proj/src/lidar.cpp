#include "mmbeam/lidar.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mmbeam::lidar {

void PointCloud::validate() const {
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.intensity))
      throw ArgumentError("point cloud contains non-finite values");
    if (p.intensity < 0.0) throw ArgumentError("point cloud intensity must be non-negative");
  }
}

void Roi::validate() const {
  for (double v : {x_min, x_max, y_min, y_max, z_min, z_max})
    if (!std::isfinite(v)) throw ArgumentError("roi bounds must be finite");
  if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) throw ArgumentError("degenerate roi");
}

bool Roi::contains(const Point& p) const {
  return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max && p.z >= z_min && p.z <= z_max;
}

void BevConfig::validate() const {
  roi.validate();
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ArgumentError("BEV cell size must be positive");
  if (!(i_ref > 0.0)) throw ArgumentError("BEV intensity reference must be positive");
  if (!(density_saturation > 1.0)) throw ArgumentError("BEV density saturation must exceed 1");
}

namespace {
int cells(double extent, double cell) { return std::max(1, static_cast<int>(std::ceil(extent / cell - 1e-9))); }
}  // namespace

int BevConfig::rows() const { return cells(roi.x_max - roi.x_min, cell_size); }
int BevConfig::cols() const { return cells(roi.y_max - roi.y_min, cell_size); }

std::pair<int, int> BevConfig::cell_of(const Point& p) const {
  const int H = rows(), W = cols();
  const int r = std::clamp(static_cast<int>(std::floor((roi.x_max - p.x) / cell_size)), 0, H - 1);
  // Columns are indexed outward from the lateral centre line so that y -> -y
  // maps column c to W-1-c exactly.
  const double u = (p.y - 0.5 * (roi.y_min + roi.y_max)) / cell_size;
  int c;
  if (W % 2 == 0) {
    const int k = static_cast<int>(std::floor(std::abs(u)));
    c = u > 0.0 ? W / 2 - 1 - k : W / 2 + k;
  } else {
    const int k = static_cast<int>(std::floor(std::abs(u) + 0.5));
    c = u > 0.0 ? (W - 1) / 2 - k : (W - 1) / 2 + k;
  }
  return {r, std::clamp(c, 0, W - 1)};
}

BevImage to_bev(const PointCloud& pc, const BevConfig& cfg) {
  cfg.validate();
  const int H = cfg.rows(), W = cfg.cols();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<double> zmax(plane, -std::numeric_limits<double>::infinity());
  std::vector<double> imax(plane, 0.0);
  std::vector<int> count(plane, 0);
  for (const auto& p : pc.points) {
    if (!cfg.roi.contains(p)) continue;
    const auto [r, c] = cfg.cell_of(p);
    const std::size_t i = static_cast<std::size_t>(r) * W + c;
    zmax[i] = std::max(zmax[i], p.z);
    imax[i] = std::max(imax[i], p.intensity);
    ++count[i];
  }
  BevImage out{ad::Tensor<double>({3, H, W}), cfg};
  double* h = out.planes.data();
  double* in = h + plane;
  double* d = in + plane;
  const double zr = cfg.roi.z_max - cfg.roi.z_min;
  const double log_sat = std::log(cfg.density_saturation);
  for (std::size_t i = 0; i < plane; ++i) {
    if (count[i] == 0) continue;
    h[i] = std::clamp((zmax[i] - cfg.roi.z_min) / zr, 0.0, 1.0);
    in[i] = std::min(imax[i] / cfg.i_ref, 1.0);
    d[i] = std::min(1.0, std::log(count[i] + 1.0) / log_sat);
  }
  return out;
}

std::vector<BevImage> to_bev_batch(std::span<const PointCloud> clouds, const BevConfig& cfg) {
  cfg.validate();
  std::vector<BevImage> out(clouds.size());
  const long n = static_cast<long>(clouds.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) out[i] = to_bev(clouds[i], cfg);
  return out;
}

std::vector<BevImage> reference::to_bev_batch(std::span<const PointCloud> clouds, const BevConfig& cfg) {
  std::vector<BevImage> out;
  out.reserve(clouds.size());
  for (const auto& c : clouds) out.push_back(to_bev(c, cfg));
  return out;
}

double intensity_quantile(std::span<const PointCloud> frames, double q) {
  require(q >= 0.0 && q <= 1.0, "quantile must be in [0,1]");
  std::vector<double> v;
  for (const auto& f : frames)
    for (const auto& p : f.points) v.push_back(p.intensity);
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

BackgroundModel build_background(std::span<const PointCloud> frames, const BevConfig& cfg) {
  if (frames.empty()) throw ArgumentError("build_background: need at least one frame");
  cfg.validate();
  const int H = cfg.rows(), W = cfg.cols();
  BackgroundModel bg{ad::Tensor<double>({H, W}), static_cast<int>(frames.size()), cfg, 1.0};
  std::vector<char> hit(static_cast<std::size_t>(H) * W);
  for (const auto& f : frames) {
    std::fill(hit.begin(), hit.end(), 0);
    for (const auto& p : f.points) {
      if (!cfg.roi.contains(p)) continue;
      const auto [r, c] = cfg.cell_of(p);
      hit[static_cast<std::size_t>(r) * W + c] = 1;
    }
    for (std::size_t i = 0; i < hit.size(); ++i) bg.occupancy[i] += hit[i];
  }
  for (auto& v : bg.occupancy.vec()) v /= static_cast<double>(frames.size());
  const double q = intensity_quantile(frames, 0.99);
  bg.i_ref = q > 0.0 ? q : 1.0;
  return bg;
}

PointCloud filter_background(const PointCloud& pc, const BackgroundModel& bg, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("background threshold must be in [0,1]");
  const int W = bg.config.cols();
  PointCloud out;
  out.points.reserve(pc.size());
  for (const auto& p : pc.points) {
    if (bg.config.roi.contains(p)) {
      const auto [r, c] = bg.config.cell_of(p);
      if (bg.occupancy[static_cast<std::size_t>(r) * W + c] >= threshold) continue;
    }
    out.points.push_back(p);
  }
  return out;
}

PointCloud crop_fov(const PointCloud& pc, double azimuth_min, double azimuth_max) {
  if (!(azimuth_min < azimuth_max)) throw ArgumentError("crop_fov: azimuth_min must be below azimuth_max");
  PointCloud out;
  for (const auto& p : pc.points) {
    const double a = std::atan2(p.y, p.x) * 180.0 / std::numbers::pi;
    if (a >= azimuth_min && a <= azimuth_max) out.points.push_back(p);
  }
  return out;
}

PointCloud augment_pointcloud(const PointCloud& pc, double drop_fraction, double jitter_sigma, std::uint64_t seed) {
  if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) throw ArgumentError("drop fraction must be in [0,1)");
  if (!(jitter_sigma >= 0.0)) throw ArgumentError("jitter sigma must be non-negative");
  Rng rng(seed);
  const std::size_t n = pc.size();
  const auto n_drop = static_cast<std::size_t>(std::floor(drop_fraction * static_cast<double>(n)));
  std::vector<char> keep(n, 1);
  if (n_drop > 0) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first n_drop entries are a uniform subset.
    for (std::size_t i = 0; i < n_drop; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      keep[idx[i]] = 0;
    }
  }
  PointCloud out;
  out.points.reserve(n - n_drop);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    Point p = pc.points[i];
    if (jitter_sigma > 0.0) {
      p.x += jitter_sigma * noise(rng);
      p.y += jitter_sigma * noise(rng);
      p.z += jitter_sigma * noise(rng);
    }
    out.points.push_back(p);
  }
  return out;
}

PointCloud flip_pointcloud(const PointCloud& pc) {
  PointCloud out = pc;
  for (auto& p : out.points) p.y = -p.y;
  return out;
}

BevImage flip_bev(const BevImage& bev) {
  BevImage out = bev;
  const int H = bev.rows(), W = bev.cols();
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        out.planes[(static_cast<std::size_t>(ch) * H + r) * W + c] = bev.at(ch, r, W - 1 - c);
  return out;
}

ad::Tensor<float> to_tensor(const PointCloud& pc) {
  ad::Tensor<float> t({static_cast<int>(pc.size()), 4});
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto& p = pc.points[i];
    t[4 * i + 0] = static_cast<float>(p.x);
    t[4 * i + 1] = static_cast<float>(p.y);
    t[4 * i + 2] = static_cast<float>(p.z);
    t[4 * i + 3] = static_cast<float>(p.intensity);
  }
  return t;
}

PointCloud from_tensor(const ad::Tensor<float>& t) {
  if (t.rank() != 2 || t.dim(1) != 4) throw DataError("point cloud tensor must have shape [N,4]");
  PointCloud pc;
  pc.points.resize(static_cast<std::size_t>(t.dim(0)));
  for (std::size_t i = 0; i < pc.size(); ++i)
    pc.points[i] = {t[4 * i], t[4 * i + 1], t[4 * i + 2], t[4 * i + 3]};
  try {
    pc.validate();
  } catch (const ArgumentError& e) {
    throw DataError(e.what());
  }
  return pc;
}

}  // namespace mmbeam::lidar
