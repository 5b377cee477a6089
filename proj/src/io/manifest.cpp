#include "mmbeam/io/manifest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "mmbeam/io/tensor_file.hpp"

namespace mmbeam::io {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw DataError("invalid number '" + s + "'");
  return v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw DataError("invalid integer '" + s + "'");
  return v;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string path_field(const std::string& p) { return p.empty() ? "-" : p; }
std::string path_from_field(const std::string& f) { return f == "-" ? std::string() : f; }

void require_file(const fs::path& dir, const std::string& rel, const fs::path& manifest) {
  if (!rel.empty() && !fs::exists(dir / rel))
    throw DataError(manifest.string() + ": referenced file missing: " + (dir / rel).string());
}

template <typename F>
auto with_line_context(const fs::path& path, std::size_t line_no, F&& f) {
  try {
    return f();
  } catch (const DataError& e) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

std::string raw_columns() {
  std::string s = "sample_id,scenario_id";
  for (const char* k : {"image", "lidar", "radar"})
    for (int i = 1; i <= kNumInstances; ++i) s += std::string(",") + k + std::to_string(i);
  s += ",lat1,lon1,lat2,lon2,label,powers";
  return s;
}

std::string prepared_columns() {
  std::string s = "sample_id,scenario_id";
  for (const char* k : {"image", "bev", "radar"})
    for (int i = 1; i <= kNumInstances; ++i) s += std::string(",") + k + std::to_string(i);
  s += ",angle1,angle2,distance,label";
  return s;
}

void check_unique(const std::vector<int>& ids, const fs::path& path) {
  std::set<int> seen;
  for (int id : ids)
    if (!seen.insert(id).second) throw DataError(path.string() + ": duplicate sample id " + std::to_string(id));
}

}  // namespace

void write_raw_manifest(const fs::path& path, const RawManifest& m) {
  std::ostringstream os;
  os << kRawHeader << '\n' << raw_columns() << '\n';
  for (const auto& e : m.entries) {
    os << e.sample_id << ',' << e.scenario_id;
    for (const auto* arr : {&e.images, &e.lidar, &e.radar})
      for (const auto& p : *arr) os << ',' << path_field(p);
    for (const auto& g : e.gps) os << ',' << format_double(g.latitude) << ',' << format_double(g.longitude);
    os << ',' << (e.label ? std::to_string(*e.label) : std::string("-")) << ',' << path_field(e.powers) << '\n';
  }
  write_file_atomic(path, os.str());
}

RawManifest read_raw_manifest(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty manifest");
  if (lines[0].rfind(kPreparedHeader, 0) == 0)
    throw DataError(path.string() + ": manifest is already preprocessed");
  if (lines[0] != kRawHeader) throw DataError(path.string() + ": not a raw mmbeam manifest");
  if (lines.size() < 2 || lines[1] != raw_columns()) throw DataError(path.string() + ": unexpected column header");
  RawManifest m;
  m.dir = path.parent_path();
  std::vector<int> ids;
  for (std::size_t li = 2; li < lines.size(); ++li) {
    m.entries.push_back(with_line_context(path, li + 1, [&] {
      const auto f = split_csv(lines[li]);
      if (f.size() != 2 + 15 + 4 + 2) throw DataError("expected 23 fields, found " + std::to_string(f.size()));
      RawEntry e;
      e.sample_id = parse_int(f[0]);
      e.scenario_id = parse_int(f[1]);
      for (int i = 0; i < kNumInstances; ++i) {
        e.images[i] = path_from_field(f[2 + i]);
        e.lidar[i] = path_from_field(f[7 + i]);
        e.radar[i] = path_from_field(f[12 + i]);
      }
      for (int g = 0; g < kNumGpsInstances; ++g) {
        e.gps[g] = {parse_double(f[17 + 2 * g]), parse_double(f[18 + 2 * g])};
        e.gps[g].validate();
      }
      if (f[21] != "-") {
        e.label = parse_int(f[21]);
        BeamLabel check(*e.label);
      }
      e.powers = path_from_field(f[22]);
      for (const auto* arr : {&e.images, &e.lidar, &e.radar})
        for (const auto& p : *arr) require_file(m.dir, p, path);
      require_file(m.dir, e.powers, path);
      return e;
    }));
    ids.push_back(m.entries.back().sample_id);
  }
  check_unique(ids, path);
  return m;
}

void write_prepared_manifest(const fs::path& path, const PreparedManifest& m) {
  std::ostringstream os;
  os << kPreparedHeader << " image=" << m.image << " lidar=" << m.lidar << " radar=" << m.radar
     << " radar_angle_bins=" << m.radar_angle_bins << " distance_feature=" << m.distance_feature << '\n'
     << prepared_columns() << '\n';
  for (const auto& e : m.entries) {
    os << e.sample_id << ',' << e.scenario_id;
    for (const auto* arr : {&e.image, &e.lidar, &e.radar})
      for (const auto& p : *arr) os << ',' << path_field(p);
    os << ',' << format_double(e.angle[0]) << ',' << format_double(e.angle[1]) << ',' << format_double(e.distance)
       << ',' << e.label << '\n';
  }
  write_file_atomic(path, os.str());
}

PreparedManifest read_prepared_manifest(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty manifest");
  if (lines[0].rfind(kRawHeader, 0) == 0) throw DataError(path.string() + ": manifest has not been prepared");
  if (lines[0].rfind(kPreparedHeader, 0) != 0) throw DataError(path.string() + ": not a prepared mmbeam manifest");
  PreparedManifest m;
  m.dir = path.parent_path();
  {
    std::istringstream is(lines[0].substr(std::string(kPreparedHeader).size()));
    std::string kv;
    while (is >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw DataError(path.string() + ": bad header field '" + kv + "'");
      const std::string k = kv.substr(0, eq);
      const int v = with_line_context(path, 1, [&] { return parse_int(kv.substr(eq + 1)); });
      if (k == "image") m.image = v != 0;
      else if (k == "lidar") m.lidar = v != 0;
      else if (k == "radar") m.radar = v != 0;
      else if (k == "radar_angle_bins") m.radar_angle_bins = v;
      else if (k == "distance_feature") m.distance_feature = v != 0;
      else throw DataError(path.string() + ": unknown header field '" + k + "'");
    }
  }
  if (lines.size() < 2 || lines[1] != prepared_columns()) throw DataError(path.string() + ": unexpected column header");
  std::vector<int> ids;
  for (std::size_t li = 2; li < lines.size(); ++li) {
    m.entries.push_back(with_line_context(path, li + 1, [&] {
      const auto f = split_csv(lines[li]);
      if (f.size() != 2 + 15 + 4) throw DataError("expected 21 fields, found " + std::to_string(f.size()));
      PreparedEntry e;
      e.sample_id = parse_int(f[0]);
      e.scenario_id = parse_int(f[1]);
      for (int i = 0; i < kNumInstances; ++i) {
        e.image[i] = path_from_field(f[2 + i]);
        e.lidar[i] = path_from_field(f[7 + i]);
        e.radar[i] = path_from_field(f[12 + i]);
      }
      e.angle = {parse_double(f[17]), parse_double(f[18])};
      e.distance = parse_double(f[19]);
      e.label = parse_int(f[20]);
      BeamLabel check(e.label);
      for (const auto* arr : {&e.image, &e.lidar, &e.radar})
        for (const auto& p : *arr) require_file(m.dir, p, path);
      return e;
    }));
    ids.push_back(m.entries.back().sample_id);
  }
  check_unique(ids, path);
  return m;
}

void write_scenarios(const fs::path& path, const std::vector<ScenarioInfo>& s) {
  std::ostringstream os;
  os << "scenario_id,theta_deg,bs_lat,bs_lon,night,mirrored\n";
  for (const auto& i : s)
    os << i.scenario_id << ',' << format_double(i.theta_deg) << ',' << format_double(i.bs.latitude) << ','
       << format_double(i.bs.longitude) << ',' << i.night << ',' << i.mirrored << '\n';
  write_file_atomic(path, os.str());
}

std::vector<ScenarioInfo> read_scenarios(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "scenario_id,theta_deg,bs_lat,bs_lon,night,mirrored")
    throw DataError(path.string() + ": unexpected scenario table header");
  std::vector<ScenarioInfo> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    out.push_back(with_line_context(path, li + 1, [&] {
      const auto f = split_csv(lines[li]);
      if (f.size() != 6) throw DataError("expected 6 fields");
      ScenarioInfo i;
      i.scenario_id = parse_int(f[0]);
      i.theta_deg = parse_double(f[1]);
      i.bs = {parse_double(f[2]), parse_double(f[3])};
      i.night = parse_int(f[4]) != 0;
      i.mirrored = parse_int(f[5]) != 0;
      return i;
    }));
  }
  return out;
}

void write_predictions(const fs::path& path, const std::vector<PredictionRow>& rows) {
  std::ostringstream os;
  os << "sample_id,scenario_id,b1,b2,b3\n";
  for (const auto& r : rows)
    os << r.sample_id << ',' << r.scenario_id << ',' << r.prediction.topk[0] << ',' << r.prediction.topk[1] << ','
       << r.prediction.topk[2] << '\n';
  write_file_atomic(path, os.str());
}

std::vector<PredictionRow> read_predictions(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "sample_id,scenario_id,b1,b2,b3")
    throw DataError(path.string() + ": unexpected prediction header");
  std::vector<PredictionRow> out;
  std::vector<int> ids;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    out.push_back(with_line_context(path, li + 1, [&] {
      const auto f = split_csv(lines[li]);
      if (f.size() != 5) throw DataError("expected 5 fields");
      PredictionRow r;
      r.sample_id = parse_int(f[0]);
      r.scenario_id = parse_int(f[1]);
      r.prediction.topk = {parse_int(f[2]), parse_int(f[3]), parse_int(f[4])};
      r.prediction.validate();
      return r;
    }));
    ids.push_back(out.back().sample_id);
  }
  check_unique(ids, path);
  return out;
}

void write_truth(const fs::path& path, const std::vector<TruthRow>& rows) {
  std::ostringstream os;
  os << "sample_id,scenario_id,beam\n";
  for (const auto& r : rows) os << r.sample_id << ',' << r.scenario_id << ',' << r.beam.index() << '\n';
  write_file_atomic(path, os.str());
}

std::vector<TruthRow> read_truth(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "sample_id,scenario_id,beam") throw DataError(path.string() + ": unexpected truth header");
  std::vector<TruthRow> out;
  std::vector<int> ids;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    out.push_back(with_line_context(path, li + 1, [&] {
      const auto f = split_csv(lines[li]);
      if (f.size() != 3) throw DataError("expected 3 fields");
      return TruthRow{parse_int(f[0]), parse_int(f[1]), BeamLabel(parse_int(f[2]))};
    }));
    ids.push_back(out.back().sample_id);
  }
  check_unique(ids, path);
  return out;
}

}  // namespace mmbeam::io
