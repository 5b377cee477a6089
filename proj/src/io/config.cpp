#include "mmbeam/io/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "mmbeam/io/manifest.hpp"
#include "mmbeam/io/tensor_file.hpp"

namespace mmbeam::io {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::string cur;
  std::istringstream is(v);
  while (std::getline(is, cur, ',')) out.push_back(trim(cur));
  return out;
}

int to_int(const std::string& v) {
  int x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& v) {
  try {
    return parse_double(v);
  } catch (const DataError&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

std::string b2s(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + f(xs[i]);
  return s;
}

std::string ints(const std::vector<int>& v) {
  return join(v, [](int x) { return std::to_string(x); });
}
std::string doubles(const std::vector<double>& v) { return join(v, format_double); }
std::vector<int> parse_ints(const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(s));
  return out;
}
std::vector<double> parse_doubles(const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(s));
  return out;
}

struct Entry {
  std::string section, key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define MMB_INT(sec, key, field) \
  Entry{sec, key, [](const RunConfig& c) { return std::to_string(c.field); }, [](RunConfig& c, const std::string& v) { c.field = to_int(v); }}
#define MMB_U64(sec, key, field) \
  Entry{sec, key, [](const RunConfig& c) { return std::to_string(c.field); }, [](RunConfig& c, const std::string& v) { c.field = to_u64(v); }}
#define MMB_DBL(sec, key, field) \
  Entry{sec, key, [](const RunConfig& c) { return format_double(c.field); }, [](RunConfig& c, const std::string& v) { c.field = to_double(v); }}
#define MMB_BOOL(sec, key, field) \
  Entry{sec, key, [](const RunConfig& c) { return b2s(c.field); }, [](RunConfig& c, const std::string& v) { c.field = to_bool(v); }}

const std::vector<Entry>& schema() {
  static const std::vector<Entry> s = {
      Entry{"world", "scenarios", [](const RunConfig& c) { return ints(c.world.scenarios); },
            [](RunConfig& c, const std::string& v) { c.world.scenarios = parse_ints(v); }},
      Entry{"world", "ratios", [](const RunConfig& c) { return doubles(c.world.ratios); },
            [](RunConfig& c, const std::string& v) { c.world.ratios = parse_doubles(v); }},
      MMB_INT("world", "samples", world.samples),
      MMB_U64("world", "seed", world.seed),
      MMB_DBL("world", "gps_noise", world.gps_noise),
      MMB_DBL("world", "image_noise", world.image_noise),
      MMB_DBL("world", "radar_noise", world.radar_noise),
      MMB_DBL("world", "lidar_noise", world.lidar_noise),
      MMB_BOOL("world", "noise_free", world.noise_free),
      MMB_BOOL("world", "mirrored", world.mirrored),
      MMB_DBL("world", "sampling_interval", world.sampling_interval),
      MMB_INT("world", "image_width", world.image_width),
      MMB_INT("world", "image_height", world.image_height),
      MMB_DBL("world", "fov", world.fov),
      MMB_INT("world", "radar_antennas", world.radar_antennas),
      MMB_INT("world", "radar_samples", world.radar_samples),
      MMB_INT("world", "radar_chirps", world.radar_chirps),
      MMB_INT("world", "lidar_vehicle_points", world.lidar_vehicle_points),
      MMB_INT("world", "lidar_ground_points", world.lidar_ground_points),
      MMB_INT("world", "lidar_object_points", world.lidar_object_points),
      MMB_INT("world", "static_objects", world.static_objects),
      MMB_DBL("world", "speed_min", world.speed_min),
      MMB_DBL("world", "speed_max", world.speed_max),

      MMB_BOOL("prep", "image", prep.image),
      MMB_BOOL("prep", "lidar", prep.lidar),
      MMB_BOOL("prep", "radar", prep.radar),
      MMB_BOOL("prep", "enhance", prep.enhance),
      MMB_DBL("prep", "enhance_below", prep.enhance_below),
      MMB_DBL("prep", "enhance_gamma", prep.enhance_gamma),
      MMB_DBL("prep", "enhance_gain", prep.enhance_gain),
      MMB_BOOL("prep", "scene_mask", prep.scene_mask),
      MMB_DBL("prep", "mask_threshold", prep.mask_threshold),
      MMB_BOOL("prep", "background_filter", prep.background_filter),
      MMB_DBL("prep", "background_threshold", prep.background_threshold),
      MMB_INT("prep", "background_samples", prep.background_samples),
      MMB_BOOL("prep", "crop_fov", prep.crop_fov),
      MMB_DBL("prep", "fov_min", prep.fov_min),
      MMB_DBL("prep", "fov_max", prep.fov_max),
      MMB_DBL("prep", "bev_x_min", prep.bev.roi.x_min),
      MMB_DBL("prep", "bev_x_max", prep.bev.roi.x_max),
      MMB_DBL("prep", "bev_y_min", prep.bev.roi.y_min),
      MMB_DBL("prep", "bev_y_max", prep.bev.roi.y_max),
      MMB_DBL("prep", "bev_z_min", prep.bev.roi.z_min),
      MMB_DBL("prep", "bev_z_max", prep.bev.roi.z_max),
      MMB_DBL("prep", "bev_cell", prep.bev.cell_size),
      MMB_DBL("prep", "bev_i_ref", prep.bev.i_ref),
      MMB_INT("prep", "radar_angle_bins", prep.radar_angle_bins),
      MMB_BOOL("prep", "radar_velocity", prep.radar_velocity),
      MMB_BOOL("prep", "distance_feature", prep.distance_feature),

      Entry{"model", "modalities", [](const RunConfig& c) { return modality_list(c.model); },
            [](RunConfig& c, const std::string& v) { set_modalities(c.model, v); }},
      Entry{"model", "backbone", [](const RunConfig& c) { return c.model.backbone.name; },
            [](RunConfig& c, const std::string& v) { c.model.backbone = model::BackboneConfig::preset(v); }},
      Entry{"model", "channels", [](const RunConfig& c) { return ints(c.model.backbone.stage_channels); },
            [](RunConfig& c, const std::string& v) { c.model.backbone.stage_channels = parse_ints(v); }},
      Entry{"model", "blocks", [](const RunConfig& c) { return ints(c.model.backbone.blocks_per_stage); },
            [](RunConfig& c, const std::string& v) { c.model.backbone.blocks_per_stage = parse_ints(v); }},
      MMB_INT("model", "stem_kernel", model.backbone.stem_kernel),
      MMB_INT("model", "stem_stride", model.backbone.stem_stride),
      MMB_BOOL("model", "stem_pool", model.backbone.stem_pool),
      MMB_INT("model", "layers", model.transformer_layers),
      MMB_INT("model", "heads", model.heads),
      MMB_INT("model", "mlp_ratio", model.mlp_ratio),
      MMB_DBL("model", "dropout", model.dropout),
      MMB_INT("model", "feature_dim", model.feature_dim),
      Entry{"model", "pool",
            [](const RunConfig& c) { return std::string(c.model.final_pool == model::FinalPool::Flatten ? "flatten" : "average"); },
            [](RunConfig& c, const std::string& v) {
              if (v == "flatten") c.model.final_pool = model::FinalPool::Flatten;
              else if (v == "average") c.model.final_pool = model::FinalPool::Average;
              else throw ConfigError("pool must be flatten or average");
            }},
      Entry{"model", "head_hidden", [](const RunConfig& c) { return ints(c.model.head_hidden); },
            [](RunConfig& c, const std::string& v) { c.model.head_hidden = parse_ints(v); }},

      MMB_DBL("train", "lr", train.lr0),
      MMB_DBL("train", "lr_min", train.lr_min),
      MMB_INT("train", "batch_size", train.batch_size),
      MMB_INT("train", "epochs", train.epochs),
      MMB_DBL("train", "split", train.split_fraction),
      MMB_U64("train", "seed", train.seed),
      MMB_DBL("train", "ema_decay", train.ema_decay),
      MMB_BOOL("train", "ema_warmup", train.ema_warmup),
      MMB_DBL("train", "label_sigma", train.label_sigma),
      MMB_DBL("train", "focal_gamma", train.focal.gamma),
      Entry{"train", "scenario_weights",
            [](const RunConfig& c) {
              std::string s;
              for (const auto& [id, w] : c.train.scenario_weights)
                s += (s.empty() ? "" : ",") + std::to_string(id) + ":" + format_double(w);
              return s;
            },
            [](RunConfig& c, const std::string& v) {
              c.train.scenario_weights.clear();
              for (const auto& item : split_list(v)) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) throw ConfigError("scenario weight '" + item + "' must be id:weight");
                c.train.scenario_weights[to_int(trim(item.substr(0, colon)))] = to_double(trim(item.substr(colon + 1)));
              }
            }},
      MMB_U64("train", "max_steps", train.max_steps),

      MMB_BOOL("augment", "flip", train.augment.flip),
      MMB_DBL("augment", "flip_prob", train.augment.flip_prob),
      MMB_DBL("augment", "brightness", train.augment.photometric.brightness),
      MMB_DBL("augment", "contrast", train.augment.photometric.contrast),
      MMB_DBL("augment", "gamma", train.augment.photometric.gamma),
      MMB_DBL("augment", "hue", train.augment.photometric.hue_shift),
      MMB_DBL("augment", "saturation", train.augment.photometric.saturation),
      MMB_DBL("augment", "sharpness", train.augment.photometric.sharpness),
      MMB_DBL("augment", "blur", train.augment.photometric.blur_sigma),
      MMB_DBL("augment", "radar_noise", train.augment.radar_noise),

      MMB_INT("eval", "batch_size", eval_batch),
  };
  return s;
}

#undef MMB_INT
#undef MMB_U64
#undef MMB_DBL
#undef MMB_BOOL

}  // namespace

void set_modalities(model::FusionConfig& cfg, const std::string& list) {
  cfg.modalities.clear();
  cfg.use_gps = false;
  for (const auto& name : split_list(list)) {
    if (name == "gps") {
      if (cfg.use_gps) throw ConfigError("duplicate modality gps");
      cfg.use_gps = true;
    } else {
      cfg.modalities.push_back(model::parse_modality(name));
    }
  }
  if (cfg.modalities.empty() && !cfg.use_gps) throw ConfigError("modality list is empty");
}

std::string modality_list(const model::FusionConfig& cfg) {
  std::string s;
  for (auto m : cfg.modalities) s += (s.empty() ? "" : ",") + model::to_string(m);
  if (cfg.use_gps) s += s.empty() ? "gps" : ",gps";
  return s;
}

std::vector<synth::WorldConfig> WorldSpec::worlds() const {
  std::vector<synth::WorldConfig> out;
  for (int id : scenarios) {
    synth::WorldConfig w = synth::scenario_preset(id);
    w.gps_noise_sigma = gps_noise;
    w.image_noise_sigma = image_noise;
    w.radar.noise_sigma = radar_noise;
    w.lidar.noise_sigma = lidar_noise;
    w.mirrored = mirrored;
    w.sampling_interval = sampling_interval;
    w.camera.width = image_width;
    w.camera.height = image_height;
    w.camera.fov_deg = fov;
    w.radar.antennas = radar_antennas;
    w.radar.samples = radar_samples;
    w.radar.chirps = radar_chirps;
    w.lidar.vehicle_points = lidar_vehicle_points;
    w.lidar.ground_points = lidar_ground_points;
    w.lidar.object_points = lidar_object_points;
    w.static_objects = static_objects;
    w.speed_min = speed_min;
    w.speed_max = speed_max;
    if (noise_free) w = w.noise_free();
    out.push_back(w);
  }
  return out;
}

std::vector<int> WorldSpec::counts() const {
  if (ratios.size() != scenarios.size()) throw ConfigError("[world] ratios must have one entry per scenario");
  try {
    return synth::counts_from_ratios(samples, ratios);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

void RunConfig::validate() const {
  if (world.scenarios.empty()) throw ConfigError("[world] scenarios must not be empty");
  if (world.samples < 0) throw ConfigError("[world] samples must be non-negative");
  world.counts();
  try {
    for (const auto& w : world.worlds()) w.validate();
    prep.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  model.validate();
  train.validate();
  if (eval_batch <= 0) throw ConfigError("[eval] batch_size must be positive");
}

std::string RunConfig::resolved() const {
  std::ostringstream os;
  std::string section;
  for (const auto& e : schema()) {
    if (e.section != section) {
      if (!section.empty()) os << '\n';
      section = e.section;
      os << '[' << section << "]\n";
    }
    os << e.key << " = " << e.get(*this) << '\n';
  }
  return os.str();
}

RunConfig parse_config(std::string_view text) {
  std::map<std::pair<std::string, std::string>, std::string> values;
  std::set<std::string> known_sections;
  for (const auto& e : schema()) known_sections.insert(e.section);
  RunConfig cfg;
  std::string section;
  std::istringstream is{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      cfg.sections.insert(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& e : schema()) known = known || (e.section == section && e.key == key);
    if (!known) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    if (!values.emplace(std::make_pair(section, key), value).second)
      throw ConfigError(where + "duplicate key '" + key + "' in [" + section + "]");
  }
  for (const auto& e : schema()) {
    const auto it = values.find({e.section, e.key});
    if (it == values.end()) continue;
    try {
      e.set(cfg, it->second);
    } catch (const ConfigError& err) {
      throw ConfigError("[" + e.section + "] " + e.key + ": " + err.what());
    } catch (const ArgumentError& err) {
      throw ConfigError("[" + e.section + "] " + e.key + ": " + err.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

}  // namespace mmbeam::io
