#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mmbeam/geospatial.hpp"
#include "mmbeam/lidar.hpp"
#include "mmbeam/metrics.hpp"
#include "mmbeam/radar.hpp"
#include "mmbeam/vision.hpp"

// Synthetic roadside scenes. Local frame: origin at the base station, x along
// the camera axis, y to the left, z up (ground at z = 0). Angles measured in
// the codebook convention are positive to the right: sin(psi) = -y / r.

namespace mmbeam::synth {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

/// Straight two-lane road. The centre line passes through (distance, 0) and
/// runs along d = (sin a, -cos a), i.e. left to right for a = 0.
struct RoadConfig {
  double distance = 15.0;     // m
  double angle_deg = 0.0;     // rotation of the road direction
  double half_length = 28.0;  // m, along-track extent each side of the centre
  double width = 7.0;         // m
};

struct CameraConfig {
  double fov_deg = 100.0;  // horizontal
  int width = 96;
  int height = 64;
  double mount_height = 6.0;  // m
};

struct RadarConfig {
  int antennas = 8;
  int samples = 64;
  int chirps = 16;
  double r_max = 60.0;       // m
  double v_max = 20.0;       // m/s
  double noise_sigma = 0.05; // per real/imaginary component
};

struct LidarConfig {
  int vehicle_points = 160;
  int ground_points = 300;
  int object_points = 40;
  double mount_height = 1.5;  // m
  double noise_sigma = 0.02;  // m
};

struct WorldConfig {
  int scenario_id = 32;
  double theta_deg = 44.8;  // compass angle of the camera axis, counter-clockwise from east
  geo::GpsFix bs{0.0, 0.0};
  RoadConfig road;
  CameraConfig camera;
  RadarConfig radar;
  LidarConfig lidar;
  bool night = false;
  bool mirrored = false;  // y -> -y for every generated position
  double gps_noise_sigma = 0.2;    // m, per axis
  double image_noise_sigma = 0.01;
  double sampling_interval = 0.2;  // s between instances
  double speed_min = 4.0, speed_max = 14.0;  // m/s
  int static_objects = 6;
  int n_antennas = kNumBeams;  // codebook array size

  /// Road must intersect the camera field of view and stay inside r_max.
  void validate() const;
  /// Copy with every noise source disabled.
  WorldConfig noise_free() const;
  geo::ScenarioCalibration calibration() const { return {scenario_id, theta_deg}; }
};

/// Geometry of the four measured scenarios; other ids get a default road.
WorldConfig scenario_preset(int scenario_id);

struct VehicleTrack {
  double s5 = 0.0;        // along-track coordinate at the last instance
  double speed = 8.0;     // m/s, >= 0
  int direction = 1;      // +1 along d, -1 against it
  double lane_offset = -1.75;  // m from the centre line, positive away from the BS
  std::array<double, 3> extent{4.5, 1.8, 1.5};  // length, width, height
  std::array<double, 3> color{0.7, 0.1, 0.1};
  double intensity = 0.8;

  void validate() const;
  /// Along-track coordinate at time t (seconds relative to instance 5).
  double along(double t) const { return s5 + direction * speed * t; }
};

/// Static box behind the road (building, cabinet, pole).
struct StaticObject {
  double along = 0.0, offset = 0.0;  // road coordinates of the centre
  double length = 4.0, width = 4.0, height = 5.0;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double intensity = 0.4;
};

/// Geometry helper bound to one world; applies the mirror flag.
class Scene {
 public:
  explicit Scene(const WorldConfig& world, std::uint64_t root_seed);

  const WorldConfig& world() const { return world_; }
  const std::vector<StaticObject>& objects() const { return objects_; }

  /// Local position of road coordinates (along, offset).
  Vec2 local(double along, double offset) const;
  /// Road direction in local coordinates.
  Vec2 direction() const;
  /// Unit normal pointing away from the BS.
  Vec2 normal() const;
  /// Along-track coordinate where the ray at codebook sine `s` meets the lane.
  double along_for_sine(double s, double lane_offset) const;

  VehicleTrack random_track(Rng& rng) const;

 private:
  WorldConfig world_;
  std::vector<StaticObject> objects_;
  double mirror_ = 1.0;
};

/// |a(psi)^H f_b|^2 for the unit-norm DFT codebook sin(theta_b) = (2b - 65)/64.
std::array<double, kNumBeams> beam_powers_sine(double sine, int n_antennas = kNumBeams);
/// Same for an angle in degrees; requires |angle| < 90.
std::array<double, kNumBeams> beam_powers(double angle_deg, int n_antennas = kNumBeams);
/// Codebook direction of beam b in sine space.
double beam_sine(int b);
/// Arg-max beam, ties toward the smaller index.
BeamLabel best_beam(const std::array<double, kNumBeams>& powers);

/// Ground truth carried next to a generated sample.
struct SampleTruth {
  std::array<Vec2, kNumInstances> ue{};       // local positions
  std::array<double, kNumInstances> sine{};   // codebook sine of each position
  std::array<double, kNumGpsInstances> calibrated_angle{};  // noise-free, degrees
  VehicleTrack track;
};

struct SampleRecord {
  int sample_id = 0;
  int scenario_id = 0;
  std::array<vision::ImageFrame, kNumInstances> images;
  std::array<lidar::PointCloud, kNumInstances> clouds;
  std::array<radar::RadarCube, kNumInstances> cubes;
  std::array<geo::GpsFix, kNumGpsInstances> gps;
  std::optional<BeamLabel> label;
  std::vector<double> powers;  // 64 entries when present
  SampleTruth truth;
};

/// Renders the five instances of `track` ending at t5. Throws ArgumentError
/// when any instance lies off the road.
SampleRecord generate_sample(const Scene& scene, const VehicleTrack& track, std::uint64_t seed);
/// Draws a random track from `seed` and renders it.
SampleRecord generate_random_sample(const Scene& scene, std::uint64_t seed);

/// Splits `total` by `ratios` (largest remainder, ties to the lower index).
std::vector<int> counts_from_ratios(int total, const std::vector<double>& ratios);

struct SamplePlan {
  int sample_id = 0;
  int world_index = 0;
  std::uint64_t seed = 0;
};
/// Sample ids are consecutive from 0 in world order; seeds derive from the root.
std::vector<SamplePlan> plan_dataset(const std::vector<int>& counts, std::uint64_t root_seed);

/// Codebook sine seen from the BS for a local position.
double codebook_sine(Vec2 p);

}  // namespace mmbeam::synth
