#include "mmbeam/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <exception>
#include <set>

namespace mmbeam::pipeline {

using ad::Tensor;
using model::Modality;

void PrepConfig::validate() const {
  require(enhance_gamma > 0.0 && enhance_gain > 0.0, "brightness gamma and gain must be positive");
  require(enhance_below >= 0.0 && enhance_below <= 1.0, "enhance_below must be in [0,1]");
  require(mask_threshold > 0.0 && mask_threshold < 1.0, "mask threshold must be in (0,1)");
  require(background_threshold >= 0.0 && background_threshold <= 1.0, "background threshold must be in [0,1]");
  require(background_samples >= 1, "background_samples must be positive");
  require(fov_min < fov_max, "fov_min must be below fov_max");
  require(radar_angle_bins >= 2, "radar angle bins must be at least 2");
  bev.validate();
}

std::vector<int> PreparedDataset::scenario_ids() const {
  std::set<int> ids;
  for (const auto& s : samples) ids.insert(s.scenario_id);
  return {ids.begin(), ids.end()};
}

namespace {

double mean_intensity(const vision::ImageFrame& img) {
  double s = 0.0;
  for (double v : img.pixels.vec()) s += v;
  return s / static_cast<double>(img.pixels.size());
}

// Stacks five [C,H,W] tensors into [5,C,H,W].
Tensor<float> stack(const std::array<Tensor<float>, kNumInstances>& parts) {
  ad::Shape shape{kNumInstances};
  for (int d : parts[0].shape()) shape.push_back(d);
  Tensor<float> out(shape);
  const std::size_t n = parts[0].size();
  for (int i = 0; i < kNumInstances; ++i) {
    if (parts[i].shape() != parts[0].shape()) throw DataError("instance tensors differ in shape");
    std::copy(parts[i].vec().begin(), parts[i].vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return out;
}

double flip_deg(double a) { return geo::flip_angle(geo::CalibratedAngle(a)).degrees(); }

// Copies one [5,C,H,W] sample tensor into `dst`, mirrored when `flip`.
// Images and BEV maps reverse the last axis; radar maps mirror the
// range-angle block about the DC column and keep the range-velocity block.
void copy_instance_block(const Tensor<float>& src, float* dst, Modality m, bool flip, int radar_angle_bins) {
  if (!flip) {
    std::copy(src.vec().begin(), src.vec().end(), dst);
    return;
  }
  const int W = src.dim(-1);
  const std::size_t rows = src.size() / static_cast<std::size_t>(W);
  const float* s = src.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = s + r * W;
    float* out = dst + r * W;
    if (m == Modality::Radar) {
      const int n = radar_angle_bins;
      for (int j = 0; j < n; ++j) out[j] = in[(n - j) % n];
      for (int j = n; j < W; ++j) out[j] = in[j];
    } else {
      for (int j = 0; j < W; ++j) out[j] = in[W - 1 - j];
    }
  }
}

}  // namespace

ScenarioModels build_scenario_models(std::span<const synth::SampleRecord> records, const PrepConfig& cfg) {
  ScenarioModels m;
  if (records.empty()) return m;
  if (cfg.scene_mask && cfg.image) {
    std::vector<vision::ImageFrame> frames;
    for (const auto& r : records)
      for (const auto& f : r.images) frames.push_back(f);
    m.mask = vision::build_scene_mask(frames, cfg.mask_threshold);
  }
  if (cfg.background_filter && cfg.lidar) {
    std::vector<lidar::PointCloud> clouds;
    for (const auto& r : records)
      for (const auto& c : r.clouds) clouds.push_back(c);
    m.background = lidar::build_background(clouds, cfg.bev);
  }
  return m;
}

PreparedSample prepare_sample(const synth::SampleRecord& rec, const PrepConfig& cfg,
                              const geo::ScenarioCalibration& cal, const geo::GpsFix& bs,
                              const ScenarioModels* models) {
  if (!rec.label) throw DataError("sample " + std::to_string(rec.sample_id) + " has no label");
  PreparedSample out;
  out.sample_id = rec.sample_id;
  out.scenario_id = rec.scenario_id;
  out.label = *rec.label;

  if (cfg.image) {
    std::array<Tensor<float>, kNumInstances> parts;
    for (int i = 0; i < kNumInstances; ++i) {
      vision::ImageFrame img = rec.images[i];
      if (cfg.enhance && mean_intensity(img) < cfg.enhance_below)
        img = vision::enhance_brightness(img, cfg.enhance_gamma, cfg.enhance_gain);
      if (models && models->mask) img = vision::apply_mask(img, *models->mask);
      parts[i] = vision::to_tensor(img);
    }
    out.inputs[Modality::Image] = stack(parts);
  }
  if (cfg.lidar) {
    std::array<Tensor<float>, kNumInstances> parts;
    for (int i = 0; i < kNumInstances; ++i) {
      lidar::PointCloud pc = rec.clouds[i];
      if (cfg.crop_fov) pc = lidar::crop_fov(pc, cfg.fov_min, cfg.fov_max);
      if (models && models->background) pc = lidar::filter_background(pc, *models->background, cfg.background_threshold);
      parts[i] = lidar::to_bev(pc, cfg.bev).planes.cast<float>();
    }
    out.inputs[Modality::Lidar] = stack(parts);
  }
  if (cfg.radar) {
    std::array<Tensor<float>, kNumInstances> parts;
    for (int i = 0; i < kNumInstances; ++i) {
      const radar::RadarMaps maps = radar::make_maps(rec.cubes[i], cfg.radar_angle_bins, cfg.radar_velocity);
      Tensor<float> t = maps.concat.cast<float>();
      t.reshape({1, maps.concat.dim(0), maps.concat.dim(1)});
      parts[i] = std::move(t);
    }
    out.inputs[Modality::Radar] = stack(parts);
  }
  for (int g = 0; g < kNumGpsInstances; ++g)
    out.angle[g] = geo::calibrate(geo::relative_angle(rec.gps[g], bs), cal).degrees();
  out.distance = geo::distance_m(rec.gps[kNumGpsInstances - 1], bs);
  return out;
}

PreparedDataset synthesize_prepared(const std::vector<synth::WorldConfig>& worlds, const std::vector<int>& counts,
                                    std::uint64_t root_seed, const PrepConfig& cfg) {
  require(worlds.size() == counts.size(), "one sample count per world is required");
  cfg.validate();
  std::vector<synth::Scene> scenes;
  for (const auto& w : worlds) scenes.emplace_back(w, root_seed);
  const auto plan = synth::plan_dataset(counts, root_seed);

  std::vector<ScenarioModels> models(worlds.size());
  if ((cfg.scene_mask && cfg.image) || (cfg.background_filter && cfg.lidar)) {
    for (std::size_t w = 0; w < worlds.size(); ++w) {
      std::vector<synth::SampleRecord> recs;
      for (const auto& p : plan)
        if (p.world_index == static_cast<int>(w) && static_cast<int>(recs.size()) < cfg.background_samples)
          recs.push_back(synth::generate_random_sample(scenes[w], p.seed));
      models[w] = build_scenario_models(recs, cfg);
    }
  }

  PreparedDataset data;
  data.prep = cfg;
  data.samples.resize(plan.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(plan.size()); ++i) {
    try {
      const auto& p = plan[i];
      const auto& scene = scenes[p.world_index];
      synth::SampleRecord rec = synth::generate_random_sample(scene, p.seed);
      rec.sample_id = p.sample_id;
      data.samples[i] = prepare_sample(rec, cfg, scene.world().calibration(), scene.world().bs, &models[p.world_index]);
    } catch (...) {
#pragma omp critical(mmbeam_prep_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return data;
}

PreparedSample flip_prepared(const PreparedSample& s, int radar_angle_bins) {
  PreparedSample f = s;
  for (auto& [m, t] : f.inputs) copy_instance_block(s.inputs.at(m), t.data(), m, true, radar_angle_bins);
  for (auto& a : f.angle) a = flip_deg(a);
  f.label = model::flip_label(s.label);
  return f;
}

void configure_inputs(model::FusionConfig& cfg, const PreparedDataset& data) {
  if (data.samples.empty()) throw DataError("dataset is empty");
  const auto& s = data.samples.front();
  for (Modality m : cfg.modalities) {
    const auto it = s.inputs.find(m);
    if (it == s.inputs.end())
      throw ConfigError("model uses modality " + model::to_string(m) + " but the dataset was prepared without it");
    const auto& sh = it->second.shape();
    const model::InputShape in{sh[1], sh[2], sh[3]};
    switch (m) {
      case Modality::Image: cfg.image = in; break;
      case Modality::Lidar: cfg.lidar = in; break;
      case Modality::Radar: cfg.radar = in; break;
    }
  }
  cfg.gps_features = data.prep.distance_feature ? 3 : 2;
}

model::Batch make_batch(const PreparedDataset& data, std::span<const int> indices, std::span<const char> flip,
                        const model::FusionConfig& cfg) {
  require(flip.empty() || flip.size() == indices.size(), "flip mask must match the batch size");
  const int B = static_cast<int>(indices.size());
  require(B > 0, "batch must not be empty");
  model::Batch batch;
  for (Modality m : cfg.modalities) {
    const auto& first = data.samples.at(indices[0]).inputs;
    const auto it = first.find(m);
    if (it == first.end()) throw DataError("sample lacks modality " + model::to_string(m));
    ad::Shape shape{B};
    for (int d : it->second.shape()) shape.push_back(d);
    Tensor<float> t(shape);
    const std::size_t per = it->second.size();
    for (int b = 0; b < B; ++b) {
      const auto& src = data.samples.at(indices[b]).inputs.at(m);
      if (src.size() != per) throw DataError("samples differ in " + model::to_string(m) + " shape");
      copy_instance_block(src, t.data() + b * per, m, !flip.empty() && flip[b], data.prep.radar_angle_bins);
    }
    batch.inputs.emplace(m, std::move(t));
  }
  if (cfg.use_gps) {
    Tensor<float> g({B, cfg.gps_features});
    for (int b = 0; b < B; ++b) {
      const auto& s = data.samples.at(indices[b]);
      const bool f = !flip.empty() && flip[b];
      for (int k = 0; k < kNumGpsInstances; ++k)
        g[b * cfg.gps_features + k] = static_cast<float>((f ? flip_deg(s.angle[k]) : s.angle[k]) / 180.0);
      if (cfg.gps_features == 3) g[b * cfg.gps_features + 2] = static_cast<float>(s.distance / kDistanceScale);
    }
    batch.gps = std::move(g);
  }
  return batch;
}

std::vector<BeamLabel> batch_labels(const PreparedDataset& data, std::span<const int> indices,
                                    std::span<const char> flip) {
  std::vector<BeamLabel> out;
  out.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const BeamLabel l = data.samples.at(indices[i]).label;
    out.push_back(!flip.empty() && flip[i] ? model::flip_label(l) : l);
  }
  return out;
}

}  // namespace mmbeam::pipeline
