#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mmbeam/pipeline.hpp"
#include "mmbeam/training.hpp"

// Strict INI run configuration. Sections: [world], [prep], [model], [train],
// [augment], [eval]. Lines are `key = value`; `#` and `;` start comments.
// Unknown sections or keys, duplicates and unparsable values raise ConfigError
// before any side effect.

namespace mmbeam::io {

struct WorldSpec {
  std::vector<int> scenarios{31, 32, 33, 34};
  std::vector<double> ratios{1, 10, 10, 10};
  int samples = 310;
  std::uint64_t seed = 0;
  double gps_noise = 0.2;
  double image_noise = 0.01;
  double radar_noise = 0.05;
  double lidar_noise = 0.02;
  bool noise_free = false;
  bool mirrored = false;
  double sampling_interval = 0.2;
  int image_width = 96, image_height = 64;
  double fov = 100.0;
  int radar_antennas = 8, radar_samples = 64, radar_chirps = 16;
  int lidar_vehicle_points = 160, lidar_ground_points = 300, lidar_object_points = 40;
  int static_objects = 6;
  double speed_min = 4.0, speed_max = 14.0;

  /// One world per scenario, starting from the scenario preset.
  std::vector<synth::WorldConfig> worlds() const;
  std::vector<int> counts() const;
};

struct RunConfig {
  WorldSpec world;
  pipeline::PrepConfig prep;
  model::FusionConfig model;
  training::TrainConfig train;
  int eval_batch = 64;
  std::set<std::string> sections;  // sections present in the source text

  /// Every key with its effective value, in canonical order. Parsing the
  /// result yields an identical configuration.
  std::string resolved() const;
  void validate() const;
};

RunConfig parse_config(std::string_view text);
/// Throws ConfigError when the file is missing or invalid.
RunConfig load_config(const std::filesystem::path& path);

/// Parses a modality list such as "image,gps" into the model config.
void set_modalities(model::FusionConfig& cfg, const std::string& list);
std::string modality_list(const model::FusionConfig& cfg);

}  // namespace mmbeam::io
