#include "mmbeam/app/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <sstream>

#include "mmbeam/io/checkpoint.hpp"
#include "mmbeam/io/tensor_file.hpp"
#include "mmbeam/training.hpp"

namespace mmbeam::app {

namespace {

constexpr int kChunk = 32;  // samples held in memory at once

std::string pad_id(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

// Runs f(i) for i in [0, n) in parallel and rethrows the first error.
template <typename F>
void parallel_for(int n, F&& f) {
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
#pragma omp critical(mmbeam_cmd_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

synth::SampleRecord load_record(const io::RawManifest& m, const io::RawEntry& e) {
  synth::SampleRecord r;
  r.sample_id = e.sample_id;
  r.scenario_id = e.scenario_id;
  for (int i = 0; i < kNumInstances; ++i) {
    if (e.images[i].empty() || e.lidar[i].empty() || e.radar[i].empty())
      throw DataError("sample " + std::to_string(e.sample_id) + " lacks sensor files");
    r.images[i] = vision::from_tensor(io::read_tensor_f32(m.dir / e.images[i]), e.scenario_id);
    r.clouds[i] = lidar::from_tensor(io::read_tensor_f32(m.dir / e.lidar[i]));
    r.cubes[i] = radar::from_tensor(io::read_tensor_f32(m.dir / e.radar[i]));
  }
  r.gps = e.gps;
  if (e.label) r.label = BeamLabel(*e.label);
  return r;
}

std::map<int, io::ScenarioInfo> scenario_table(const fs::path& dir, const std::vector<io::RawEntry>& entries) {
  std::map<int, io::ScenarioInfo> table;
  const fs::path p = dir / "scenarios.csv";
  if (fs::exists(p))
    for (const auto& s : io::read_scenarios(p)) table[s.scenario_id] = s;
  for (const auto& e : entries) {
    if (table.count(e.scenario_id)) continue;
    const auto cal = geo::measured_calibration(e.scenario_id);
    if (!cal) throw DataError("no calibration for scenario " + std::to_string(e.scenario_id));
    table[e.scenario_id] = io::ScenarioInfo{e.scenario_id, cal->theta, {}, false, false};
  }
  return table;
}

void write_text(const fs::path& p, const std::string& s) { io::write_file_atomic(p, s); }

io::RunConfig config_from_checkpoint(const io::Checkpoint& ck) {
  try {
    return io::parse_config(ck.config_text);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint carries an invalid config: ") + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

fs::path cmd_synth(const io::RunConfig& cfg, const fs::path& out_dir) {
  if (!cfg.sections.count("world")) throw ConfigError("synth requires a [world] section");
  const auto worlds = cfg.world.worlds();
  const auto counts = cfg.world.counts();
  std::vector<synth::Scene> scenes;
  for (const auto& w : worlds) scenes.emplace_back(w, cfg.world.seed);
  const auto plan = synth::plan_dataset(counts, cfg.world.seed);

  fs::create_directories(out_dir);
  io::RawManifest manifest;
  std::vector<io::TruthRow> truth;
  for (std::size_t base = 0; base < plan.size(); base += kChunk) {
    const int n = static_cast<int>(std::min<std::size_t>(kChunk, plan.size() - base));
    std::vector<synth::SampleRecord> recs(n);
    parallel_for(n, [&](int i) {
      const auto& p = plan[base + i];
      recs[i] = synth::generate_random_sample(scenes[p.world_index], p.seed);
      recs[i].sample_id = p.sample_id;
    });
    for (const auto& r : recs) {
      const std::string rel = "samples/" + pad_id(r.sample_id) + "/";
      io::RawEntry e;
      e.sample_id = r.sample_id;
      e.scenario_id = r.scenario_id;
      for (int i = 0; i < kNumInstances; ++i) {
        const std::string k = std::to_string(i + 1);
        e.images[i] = rel + "image_" + k + ".mmbt";
        e.lidar[i] = rel + "lidar_" + k + ".mmbt";
        e.radar[i] = rel + "radar_" + k + ".mmbt";
        io::write_tensor(out_dir / e.images[i], vision::to_tensor(r.images[i]));
        io::write_tensor(out_dir / e.lidar[i], lidar::to_tensor(r.clouds[i]));
        io::write_tensor(out_dir / e.radar[i], radar::to_tensor(r.cubes[i]));
      }
      e.gps = r.gps;
      if (r.label) e.label = r.label->index();
      e.powers = rel + "powers.mmbt";
      io::write_tensor(out_dir / e.powers, ad::Tensor<double>({kNumBeams}, r.powers));
      manifest.entries.push_back(e);
      if (r.label) truth.push_back({r.sample_id, r.scenario_id, *r.label});
    }
  }
  std::vector<io::ScenarioInfo> scen;
  for (const auto& w : worlds) scen.push_back({w.scenario_id, w.theta_deg, w.bs, w.night, w.mirrored});
  io::write_scenarios(out_dir / "scenarios.csv", scen);
  io::write_truth(out_dir / "truth.csv", truth);
  write_text(out_dir / "config.resolved.ini", cfg.resolved());
  const fs::path mpath = out_dir / "manifest.csv";
  io::write_raw_manifest(mpath, manifest);
  log_info("synth: wrote " + std::to_string(manifest.entries.size()) + " samples to " + out_dir.string());
  return mpath;
}

fs::path cmd_prep(const fs::path& manifest_path, const io::RunConfig& cfg, const fs::path& out_dir) {
  const io::RawManifest raw = io::read_raw_manifest(manifest_path);
  const auto table = scenario_table(raw.dir, raw.entries);
  const auto& pc = cfg.prep;

  std::map<int, pipeline::ScenarioModels> models;
  if ((pc.scene_mask && pc.image) || (pc.background_filter && pc.lidar)) {
    std::map<int, std::vector<synth::SampleRecord>> firsts;
    for (const auto& e : raw.entries) {
      auto& v = firsts[e.scenario_id];
      if (static_cast<int>(v.size()) < pc.background_samples) v.push_back(load_record(raw, e));
    }
    for (const auto& [id, recs] : firsts) models[id] = pipeline::build_scenario_models(recs, pc);
  }

  fs::create_directories(out_dir);
  io::PreparedManifest out;
  out.image = pc.image;
  out.lidar = pc.lidar;
  out.radar = pc.radar;
  out.radar_angle_bins = pc.radar_angle_bins;
  out.distance_feature = pc.distance_feature;
  out.entries.resize(raw.entries.size());
  const int n = static_cast<int>(raw.entries.size());
  for (int base = 0; base < n; base += kChunk) {
    const int m = std::min(kChunk, n - base);
    parallel_for(m, [&](int i) {
      const auto& e = raw.entries[base + i];
      const auto rec = load_record(raw, e);
      const auto& info = table.at(e.scenario_id);
      const auto mit = models.find(e.scenario_id);
      const auto s = pipeline::prepare_sample(rec, pc, {e.scenario_id, info.theta_deg}, info.bs,
                                              mit == models.end() ? nullptr : &mit->second);
      io::PreparedEntry pe;
      pe.sample_id = s.sample_id;
      pe.scenario_id = s.scenario_id;
      pe.angle = s.angle;
      pe.distance = s.distance;
      pe.label = s.label.index();
      const std::string rel = "prepared/" + pad_id(s.sample_id) + "/";
      const std::pair<model::Modality, const char*> kinds[] = {
          {model::Modality::Image, "image_"}, {model::Modality::Lidar, "bev_"}, {model::Modality::Radar, "radar_"}};
      for (const auto& [mod, stem] : kinds) {
        const auto it = s.inputs.find(mod);
        if (it == s.inputs.end()) continue;
        const auto& t = it->second;
        const ad::Shape inst{t.dim(1), t.dim(2), t.dim(3)};
        const std::size_t per = ad::numel(inst);
        auto& paths = mod == model::Modality::Image ? pe.image : mod == model::Modality::Lidar ? pe.lidar : pe.radar;
        for (int k = 0; k < kNumInstances; ++k) {
          paths[k] = rel + stem + std::to_string(k + 1) + ".mmbt";
          ad::Tensor<float> part(inst, std::vector<float>(t.vec().begin() + k * per, t.vec().begin() + (k + 1) * per));
          io::write_tensor(out_dir / paths[k], part);
        }
      }
      out.entries[base + i] = pe;
    });
  }
  write_text(out_dir / "config.resolved.ini", cfg.resolved());
  const fs::path mpath = out_dir / "prepared.csv";
  io::write_prepared_manifest(mpath, out);
  log_info("prep: prepared " + std::to_string(n) + " samples into " + out_dir.string());
  return mpath;
}

pipeline::PreparedDataset load_prepared(const io::PreparedManifest& m) {
  pipeline::PreparedDataset d;
  d.prep.image = m.image;
  d.prep.lidar = m.lidar;
  d.prep.radar = m.radar;
  d.prep.radar_angle_bins = m.radar_angle_bins;
  d.prep.distance_feature = m.distance_feature;
  d.samples.resize(m.entries.size());
  parallel_for(static_cast<int>(m.entries.size()), [&](int i) {
    const auto& e = m.entries[i];
    auto& s = d.samples[i];
    s.sample_id = e.sample_id;
    s.scenario_id = e.scenario_id;
    s.angle = e.angle;
    s.distance = e.distance;
    s.label = BeamLabel(e.label);
    const std::pair<model::Modality, const std::array<std::string, kNumInstances>*> kinds[] = {
        {model::Modality::Image, &e.image}, {model::Modality::Lidar, &e.lidar}, {model::Modality::Radar, &e.radar}};
    for (const auto& [mod, paths] : kinds) {
      if ((*paths)[0].empty()) continue;
      ad::Tensor<float> stacked;
      for (int k = 0; k < kNumInstances; ++k) {
        if ((*paths)[k].empty()) throw DataError("sample " + std::to_string(e.sample_id) + " lacks an instance file");
        const auto t = io::read_tensor_f32(m.dir / (*paths)[k]);
        if (t.rank() != 3) throw DataError("prepared tensors must be [C,H,W]");
        if (k == 0) stacked = ad::Tensor<float>({kNumInstances, t.dim(0), t.dim(1), t.dim(2)});
        if (t.size() * kNumInstances != stacked.size()) throw DataError("prepared instance shapes differ");
        std::copy(t.vec().begin(), t.vec().end(), stacked.vec().begin() + k * t.size());
      }
      s.inputs.emplace(mod, std::move(stacked));
    }
  });
  return d;
}

TrainOutputs cmd_train(const fs::path& manifest_path, io::RunConfig cfg, const fs::path& out_dir) {
  const auto m = io::read_prepared_manifest(manifest_path);
  if (m.entries.empty()) throw DataError("training manifest is empty");
  const auto data = load_prepared(m);
  pipeline::configure_inputs(cfg.model, data);
  cfg.model.validate();

  fs::create_directories(out_dir);
  const std::string resolved = cfg.resolved();
  write_text(out_dir / "config.resolved.ini", resolved);

  model::FusionModel model(cfg.model, cfg.train.seed);
  std::vector<int> ids(data.samples.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  const auto split = ids.size() >= 2 ? training::split_dataset(ids, cfg.train.split_fraction, cfg.train.seed)
                                     : training::Split{ids, {}};
  TrainOutputs outs{out_dir / "checkpoint.mmbc", out_dir / "train_log.csv"};
  std::uint64_t last_step = 0;
  // The per-epoch checkpoint keeps the last good state if a later epoch fails.
  auto on_epoch = [&](const training::EpochLog& row, const training::StateMap& raw, const training::StateMap& ema) {
    io::Checkpoint ck;
    ck.step = row.step;
    ck.epoch = row.epoch;
    ck.config_text = resolved;
    ck.raw = raw;
    ck.ema = ema;
    io::write_checkpoint(outs.checkpoint, ck);
    last_step = row.step;
  };
  const auto res = training::train(model, data, split, cfg.train, on_epoch);

  io::Checkpoint best;
  best.step = last_step;
  best.epoch = res.best_epoch;
  best.config_text = resolved;
  best.raw = res.best_raw;
  best.ema = res.best_ema;
  io::write_checkpoint(outs.checkpoint, best);
  write_text(outs.log, training::log_csv(res.log, data.scenario_ids()));
  log_info("train: best epoch " + std::to_string(res.best_epoch) + " val DBA " + std::to_string(res.best_val_dba));
  return outs;
}

metrics::DbaReport cmd_eval(const fs::path& manifest_path, const fs::path& checkpoint, const fs::path& out_dir) {
  const auto ck = io::read_checkpoint(checkpoint);
  io::RunConfig cfg = config_from_checkpoint(ck);
  const auto m = io::read_prepared_manifest(manifest_path);
  if (m.entries.empty()) throw DataError("evaluation manifest is empty");
  const auto data = load_prepared(m);
  pipeline::configure_inputs(cfg.model, data);
  model::FusionModel model(cfg.model, cfg.train.seed);
  model.store().load_state(ck.ema.empty() ? ck.raw : ck.ema);

  std::vector<int> idx(data.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  const auto preds = training::predict(model, data, idx, cfg.eval_batch);
  std::vector<io::PredictionRow> rows;
  std::vector<BeamLabel> truths;
  std::vector<int> scen;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = data.samples[i];
    rows.push_back({s.sample_id, s.scenario_id, preds[i]});
    truths.push_back(s.label);
    scen.push_back(s.scenario_id);
  }
  fs::create_directories(out_dir);
  io::write_predictions(out_dir / "predictions.csv", rows);
  const auto rep = metrics::dba_score(truths, preds, scen);
  write_text(out_dir / "dba.csv", metrics::to_csv(rep));
  return rep;
}

void configure_inputs_from_config(io::RunConfig& cfg) {
  const auto& w = cfg.world;
  const auto& p = cfg.prep;
  cfg.model.image = {3, w.image_height, w.image_width};
  cfg.model.lidar = {3, p.bev.rows(), p.bev.cols()};
  cfg.model.radar = {1, w.radar_samples, p.radar_angle_bins + (p.radar_velocity ? w.radar_chirps : 0)};
  cfg.model.gps_features = p.distance_feature ? 3 : 2;
}

std::string cmd_flops(const io::RunConfig& cfg_in) {
  io::RunConfig cfg = cfg_in;
  configure_inputs_from_config(cfg);
  const auto rep = model::count_complexity(cfg.model);
  std::string out = model::to_csv(rep);
  std::ostringstream extra;
  if (cfg.model.backbone.name == "resnet18") {
    const auto measured = model::backbone_params(cfg.model.backbone, 3);
    extra << "resnet18_backbone_measured,," << measured << '\n'
          << "resnet18_backbone_reference,," << model::kReferenceResnet18Params << '\n'
          << "resnet18_backbone_delta,,"
          << static_cast<long long>(measured) - static_cast<long long>(model::kReferenceResnet18Params) << '\n';
  }
  if (cfg.model.modalities.empty() && cfg.model.use_gps)
    extra << "gps_reference,," << model::kReferenceGpsParams << '\n'
          << "gps_delta,," << static_cast<long long>(rep.total_params) - static_cast<long long>(model::kReferenceGpsParams)
          << '\n';
  return out + extra.str();
}

metrics::DbaReport cmd_score(const fs::path& truth_path, const fs::path& pred_path) {
  const auto truth = io::read_truth(truth_path);
  const auto preds = io::read_predictions(pred_path);
  std::map<int, BeamPrediction> by_id;
  for (const auto& p : preds) by_id[p.sample_id] = p.prediction;
  std::vector<BeamLabel> t;
  std::vector<BeamPrediction> p;
  std::vector<int> s;
  for (const auto& row : truth) {
    const auto it = by_id.find(row.sample_id);
    if (it == by_id.end()) throw DataError("no prediction for sample " + std::to_string(row.sample_id));
    t.push_back(row.beam);
    p.push_back(it->second);
    s.push_back(row.scenario_id);
  }
  if (t.empty()) throw DataError("truth file is empty");
  return metrics::dba_score(t, p, s);
}

// ---------------------------------------------------------------------------

int run_cli(int argc, char** argv) {
  CLI::App app{"mmbeam: multimodal sensing-assisted mmWave beam prediction"};
  app.require_subcommand(1);

  std::string config, out, manifest, checkpoint, modalities, truth, preds, out_file;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("-c,--config", config, "Run configuration (INI)")->required();
  synth_cmd->add_option("-o,--out", out, "Output directory")->required();

  auto* prep_cmd = app.add_subcommand("prep", "Transform a raw dataset into model inputs");
  prep_cmd->add_option("-m,--manifest", manifest, "Raw manifest")->required();
  prep_cmd->add_option("-c,--config", config, "Run configuration (INI)")->required();
  prep_cmd->add_option("-o,--out", out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model on a prepared dataset");
  train_cmd->add_option("-m,--manifest", manifest, "Prepared manifest")->required();
  train_cmd->add_option("-c,--config", config, "Run configuration (INI)")->required();
  train_cmd->add_option("-o,--out", out, "Output directory")->required();
  train_cmd->add_option("--modalities", modalities, "Override the model inputs, e.g. gps or image,gps");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("-m,--manifest", manifest, "Prepared manifest")->required();
  eval_cmd->add_option("-k,--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("-o,--out", out, "Output directory")->required();

  auto* flops_cmd = app.add_subcommand("flops", "Report MACs and parameters per block");
  flops_cmd->add_option("-c,--config", config, "Run configuration (INI)")->required();
  flops_cmd->add_option("--modalities", modalities, "Override the model inputs");
  flops_cmd->add_option("-o,--out", out_file, "Write the CSV here instead of stdout");

  auto* score_cmd = app.add_subcommand("score", "Score a prediction file");
  score_cmd->add_option("-t,--truth", truth, "Truth file (sample_id,scenario_id,beam)")->required();
  score_cmd->add_option("-p,--predictions", preds, "Prediction file (sample_id,scenario_id,b1,b2,b3)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto load = [&] {
      io::RunConfig c = io::load_config(config);
      if (!modalities.empty()) {
        io::set_modalities(c.model, modalities);
        c.model.validate();
      }
      return c;
    };
    if (*synth_cmd) {
      std::cout << cmd_synth(load(), out).string() << '\n';
    } else if (*prep_cmd) {
      std::cout << cmd_prep(manifest, load(), out).string() << '\n';
    } else if (*train_cmd) {
      const auto o = cmd_train(manifest, load(), out);
      std::cout << o.checkpoint.string() << '\n';
    } else if (*eval_cmd) {
      std::cout << metrics::to_key_value(cmd_eval(manifest, checkpoint, out));
    } else if (*flops_cmd) {
      const std::string csv = cmd_flops(load());
      if (out_file.empty()) std::cout << csv;
      else io::write_file_atomic(out_file, csv);
    } else if (*score_cmd) {
      std::cout << metrics::to_key_value(cmd_score(truth, preds));
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const ArgumentError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mmbeam::app
