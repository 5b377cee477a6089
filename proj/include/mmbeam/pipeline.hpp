#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mmbeam/fusion_model.hpp"
#include "mmbeam/synth.hpp"

// Raw sample -> model-ready tensors, plus batching and the prepared-sample
// mirror used by flip augmentation.

namespace mmbeam::pipeline {

struct PrepConfig {
  bool image = true;
  bool lidar = true;
  bool radar = true;
  // Brightness enhancement applies to frames whose mean intensity is below
  // `enhance_below` (a flip-invariant test).
  bool enhance = true;
  double enhance_below = 0.2;
  double enhance_gamma = 0.5;
  double enhance_gain = 1.0;
  bool scene_mask = false;
  double mask_threshold = 0.05;
  bool background_filter = false;
  double background_threshold = 0.8;
  int background_samples = 20;  // first samples per scenario used for masks and backgrounds
  bool crop_fov = false;
  double fov_min = -60.0, fov_max = 60.0;  // degrees, lidar azimuth window
  lidar::BevConfig bev;
  int radar_angle_bins = 64;
  bool radar_velocity = true;
  bool distance_feature = false;

  void validate() const;
};

/// Per-scenario statistics learned from the first frames of a scenario.
struct ScenarioModels {
  std::optional<lidar::BackgroundModel> background;
  std::optional<vision::SceneMask> mask;
};

struct PreparedSample {
  int sample_id = 0;
  int scenario_id = 0;
  // [5, C, H, W] per enabled modality.
  std::map<model::Modality, ad::Tensor<float>> inputs;
  std::array<double, kNumGpsInstances> angle{};  // calibrated, degrees
  double distance = 0.0;                          // m, instance 2
  BeamLabel label;
};

struct PreparedDataset {
  PrepConfig prep;
  std::vector<PreparedSample> samples;

  std::vector<int> scenario_ids() const;  // sorted, unique
};

/// Builds scenario models from raw samples of one scenario.
ScenarioModels build_scenario_models(std::span<const synth::SampleRecord> records, const PrepConfig& cfg);

/// Applies the enabled transforms; GPS angles are taken relative to `bs` and
/// calibrated. Throws DataError when the record has no label.
PreparedSample prepare_sample(const synth::SampleRecord& rec, const PrepConfig& cfg,
                              const geo::ScenarioCalibration& cal, const geo::GpsFix& bs,
                              const ScenarioModels* models = nullptr);

/// Generates and prepares samples one at a time; raw records are discarded
/// after preparation. Output is ordered by sample id and independent of the
/// thread count.
PreparedDataset synthesize_prepared(const std::vector<synth::WorldConfig>& worlds, const std::vector<int>& counts,
                                    std::uint64_t root_seed, const PrepConfig& cfg);

/// Mirror of a prepared sample: image and BEV columns reversed, range-angle
/// columns j -> (N - j) mod N, range-velocity untouched, angles negated,
/// label 65 - b. An involution.
PreparedSample flip_prepared(const PreparedSample& s, int radar_angle_bins);

/// Sets the model input shapes from the first sample of `data`.
void configure_inputs(model::FusionConfig& cfg, const PreparedDataset& data);

/// GPS feature scale for the optional distance input.
inline constexpr double kDistanceScale = 100.0;

/// Stacks samples into a model batch; `flip[i]` mirrors sample i on the fly.
model::Batch make_batch(const PreparedDataset& data, std::span<const int> indices, std::span<const char> flip,
                        const model::FusionConfig& cfg);

/// Labels of the selected samples, flipped where requested.
std::vector<BeamLabel> batch_labels(const PreparedDataset& data, std::span<const int> indices,
                                    std::span<const char> flip);

}  // namespace mmbeam::pipeline
