#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmbeam/geospatial.hpp"
#include "mmbeam/metrics.hpp"

// Line-delimited dataset manifests. Paths are stored relative to the
// manifest directory. Doubles use the shortest round-trip representation.

namespace mmbeam::io {

inline constexpr const char* kRawHeader = "# mmbeam-manifest v1 raw";
inline constexpr const char* kPreparedHeader = "# mmbeam-manifest v1 prepared";

struct RawEntry {
  int sample_id = 0;
  int scenario_id = 0;
  std::array<std::string, kNumInstances> images, lidar, radar;
  std::array<geo::GpsFix, kNumGpsInstances> gps{};
  std::optional<int> label;
  std::string powers;  // empty when absent
};

struct RawManifest {
  std::filesystem::path dir;
  std::vector<RawEntry> entries;
};

struct PreparedEntry {
  int sample_id = 0;
  int scenario_id = 0;
  // Empty strings for modalities that were not prepared.
  std::array<std::string, kNumInstances> image, lidar, radar;
  std::array<double, kNumGpsInstances> angle{};
  double distance = 0.0;
  int label = 1;
};

struct PreparedManifest {
  std::filesystem::path dir;
  bool image = true, lidar = true, radar = true;
  int radar_angle_bins = 64;
  bool distance_feature = false;
  std::vector<PreparedEntry> entries;
};

struct ScenarioInfo {
  int scenario_id = 0;
  double theta_deg = 0.0;
  geo::GpsFix bs;
  bool night = false;
  bool mirrored = false;
};

struct PredictionRow {
  int sample_id = 0;
  int scenario_id = 0;
  BeamPrediction prediction;
};

struct TruthRow {
  int sample_id = 0;
  int scenario_id = 0;
  BeamLabel beam;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);
int parse_int(const std::string& s);

void write_raw_manifest(const std::filesystem::path& path, const RawManifest& m);
/// Checks the header, unique ids and that every referenced file exists.
/// A prepared manifest is rejected with DataError.
RawManifest read_raw_manifest(const std::filesystem::path& path);

void write_prepared_manifest(const std::filesystem::path& path, const PreparedManifest& m);
PreparedManifest read_prepared_manifest(const std::filesystem::path& path);

void write_scenarios(const std::filesystem::path& path, const std::vector<ScenarioInfo>& s);
std::vector<ScenarioInfo> read_scenarios(const std::filesystem::path& path);

/// `sample_id,scenario_id,b1,b2,b3`
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);
/// `sample_id,scenario_id,beam`
void write_truth(const std::filesystem::path& path, const std::vector<TruthRow>& rows);
std::vector<TruthRow> read_truth(const std::filesystem::path& path);

}  // namespace mmbeam::io
