#include "mmbeam/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace mmbeam::synth {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

double normal01(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

}  // namespace

double codebook_sine(Vec2 p) { return -p.y / std::hypot(p.x, p.y); }

// ---------------------------------------------------------------------------
// World configuration

void VehicleTrack::validate() const {
  require(speed >= 0.0 && std::isfinite(speed), "vehicle speed must be non-negative");
  require(direction == 1 || direction == -1, "vehicle direction must be +1 or -1");
  for (double e : extent) require(e > 0.0, "vehicle extent must be positive");
}

void WorldConfig::validate() const {
  bs.validate();
  require(camera.width >= 8 && camera.height >= 8, "camera resolution must be at least 8x8");
  require(camera.fov_deg > 10.0 && camera.fov_deg < 170.0, "camera FoV must be in (10, 170) degrees");
  require(camera.mount_height > 0.0, "camera mount height must be positive");
  require(radar.antennas >= 1 && radar.samples >= 2 && radar.chirps >= 2, "radar cube dimensions too small");
  require(radar.r_max > 0.0 && radar.v_max > 0.0, "radar r_max and v_max must be positive");
  require(road.distance > 0.0 && road.half_length > 0.0 && road.width > 0.0, "road dimensions must be positive");
  require(std::abs(road.angle_deg) < 60.0, "road angle must be within 60 degrees of the lateral axis");
  require(speed_min >= 0.0 && speed_max >= speed_min, "speed range invalid");
  require(sampling_interval > 0.0, "sampling interval must be positive");
  require(4.0 * speed_max * sampling_interval < 2.0 * road.half_length, "road too short for a five-instance track");
  require(gps_noise_sigma >= 0.0 && image_noise_sigma >= 0.0 && radar.noise_sigma >= 0.0 && lidar.noise_sigma >= 0.0,
          "noise levels must be non-negative");
  require(lidar.vehicle_points >= 0 && lidar.ground_points >= 0 && lidar.object_points >= 0,
          "lidar point counts must be non-negative");
  require(static_objects >= 0 && n_antennas >= 1, "static object and antenna counts invalid");

  const double a = road.angle_deg * kDeg;
  const Vec2 d{std::sin(a), -std::cos(a)}, n{std::cos(a), std::sin(a)};
  double r_far = 0.0;
  for (double s : {-road.half_length, road.half_length})
    for (double o : {-road.width / 2, road.width / 2}) {
      const Vec2 p{road.distance + s * d.x + o * n.x, s * d.y + o * n.y};
      require(p.x > 1.0, "road must lie in front of the base station");
      r_far = std::max(r_far, std::hypot(p.x, p.y));
    }
  require(radar.r_max > r_far + 3.0, "radar r_max must exceed the largest UE range on the road");
  // The road centre lies on the camera axis, so the road always intersects the FoV.
}

WorldConfig WorldConfig::noise_free() const {
  WorldConfig w = *this;
  w.gps_noise_sigma = 0.0;
  w.image_noise_sigma = 0.0;
  w.radar.noise_sigma = 0.0;
  w.lidar.noise_sigma = 0.0;
  return w;
}

WorldConfig scenario_preset(int scenario_id) {
  require(scenario_id > 0, "scenario id must be positive");
  WorldConfig w;
  w.scenario_id = scenario_id;
  if (auto cal = geo::measured_calibration(scenario_id)) w.theta_deg = cal->theta;
  else w.theta_deg = 0.0;
  switch (scenario_id) {
    case 31: w.road = {14.0, 10.0, 26.0, 7.0}; break;
    case 32: w.road = {16.0, -8.0, 30.0, 7.0}; break;
    case 33: w.road = {12.0, 5.0, 24.0, 7.0}; w.night = true; break;
    case 34: w.road = {15.0, -12.0, 28.0, 7.0}; w.night = true; break;
    default: break;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Scene geometry

Scene::Scene(const WorldConfig& world, std::uint64_t root_seed) : world_(world), mirror_(world.mirrored ? -1.0 : 1.0) {
  world_.validate();
  Rng rng(derive_seed(root_seed, seed_tag::kSceneStatic, static_cast<std::uint64_t>(world_.scenario_id)));
  const auto& road = world_.road;
  for (int i = 0; i < world_.static_objects; ++i) {
    StaticObject o;
    o.along = uniform(rng, -road.half_length, road.half_length);
    o.length = uniform(rng, 3.0, 8.0);
    o.width = uniform(rng, 3.0, 8.0);
    o.height = uniform(rng, 3.0, 9.0);
    o.offset = road.width / 2 + 3.0 + o.width / 2 + uniform(rng, 0.0, 10.0);
    const double g = uniform(rng, 0.35, 0.7);
    o.color = {g * uniform(rng, 0.85, 1.1), g, g * uniform(rng, 0.8, 1.0)};
    for (auto& c : o.color) c = std::clamp(c, 0.0, 1.0);
    o.intensity = uniform(rng, 0.3, 0.5);
    objects_.push_back(o);
  }
}

Vec2 Scene::direction() const {
  const double a = world_.road.angle_deg * kDeg;
  return {std::sin(a), mirror_ * -std::cos(a)};
}

Vec2 Scene::normal() const {
  const double a = world_.road.angle_deg * kDeg;
  return {std::cos(a), mirror_ * std::sin(a)};
}

Vec2 Scene::local(double along, double offset) const {
  const double a = world_.road.angle_deg * kDeg;
  const double x = world_.road.distance + along * std::sin(a) + offset * std::cos(a);
  const double y = -along * std::cos(a) + offset * std::sin(a);
  return {x, mirror_ * y};
}

double Scene::along_for_sine(double s, double lane_offset) const {
  require(s > -1.0 && s < 1.0, "along_for_sine: sine must be in (-1, 1)");
  double lo = -1e4, hi = 1e4;
  const double f_lo = codebook_sine(local(lo, lane_offset)) - s;
  const double f_hi = codebook_sine(local(hi, lane_offset)) - s;
  if ((f_lo > 0) == (f_hi > 0)) throw DegenerateGeometryError("along_for_sine: direction not reached by the road");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = codebook_sine(local(mid, lane_offset)) - s;
    if ((f > 0) == (f_lo > 0)) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

VehicleTrack Scene::random_track(Rng& rng) const {
  VehicleTrack t;
  t.direction = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
  t.speed = uniform(rng, world_.speed_min, world_.speed_max);
  t.lane_offset = t.direction > 0 ? -world_.road.width / 4 : world_.road.width / 4;
  t.extent = {uniform(rng, 3.8, 5.2), uniform(rng, 1.6, 2.0), uniform(rng, 1.3, 1.9)};
  static constexpr std::array<std::array<double, 3>, 6> kPalette{{{0.75, 0.1, 0.1},
                                                                  {0.1, 0.2, 0.7},
                                                                  {0.9, 0.9, 0.9},
                                                                  {0.1, 0.1, 0.1},
                                                                  {0.8, 0.7, 0.1},
                                                                  {0.2, 0.55, 0.25}}};
  t.color = kPalette[std::uniform_int_distribution<int>(0, 5)(rng)];
  t.intensity = uniform(rng, 0.6, 1.0);
  const double L = world_.road.half_length, travel = 4.0 * t.speed * world_.sampling_interval;
  t.s5 = t.direction > 0 ? uniform(rng, -L + travel, L) : uniform(rng, -L, L - travel);
  return t;
}

// ---------------------------------------------------------------------------
// Codebook

double beam_sine(int b) { return (2.0 * BeamLabel(b).index() - 65.0) / 64.0; }

std::array<double, kNumBeams> beam_powers_sine(double sine, int n_antennas) {
  require(std::isfinite(sine) && sine > -1.0 && sine < 1.0, "beam_powers: sine must be in (-1, 1)");
  require(n_antennas >= 1, "beam_powers: antenna count must be positive");
  std::array<double, kNumBeams> p{};
  for (int b = 1; b <= kNumBeams; ++b) {
    const double delta = sine - (2.0 * b - 65.0) / 64.0;
    double re = 0.0, im = 0.0;
    for (int n = 0; n < n_antennas; ++n) {
      const double ph = kPi * n * delta;
      re += std::cos(ph);
      im += std::sin(ph);
    }
    p[b - 1] = (re * re + im * im) / n_antennas;
  }
  return p;
}

std::array<double, kNumBeams> beam_powers(double angle_deg, int n_antennas) {
  if (!(std::abs(angle_deg) < 90.0)) throw ArgumentError("beam_powers: angle must be within (-90, 90) degrees");
  return beam_powers_sine(std::sin(angle_deg * kDeg), n_antennas);
}

BeamLabel best_beam(const std::array<double, kNumBeams>& powers) {
  int best = 0;
  for (int b = 1; b < kNumBeams; ++b)
    if (powers[b] > powers[best]) best = b;
  return BeamLabel(best + 1);
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct ScreenRect {
  double u0, u1, v_top, v_bot;
  bool visible;
};

struct Camera {
  double f, cu, cv, hc;
  int W, H;

  explicit Camera(const CameraConfig& c)
      : f(0.5 * c.width / std::tan(0.5 * c.fov_deg * kDeg)),
        cu(0.5 * (c.width - 1)),
        cv(0.5 * (c.height - 1)),
        hc(c.mount_height),
        W(c.width),
        H(c.height) {}

  double u_of(Vec2 p) const { return -f * p.y / p.x; }
  double v_of(double x, double z) const { return f * (hc - z) / x; }
};

// Ground-plane footprint corners of a box.
std::array<Vec2, 4> footprint(Vec2 c, Vec2 h, Vec2 s, double length, double width) {
  std::array<Vec2, 4> out{};
  int i = 0;
  for (double a : {-0.5, 0.5})
    for (double b : {-0.5, 0.5}) out[i++] = {c.x + a * length * h.x + b * width * s.x, c.y + a * length * h.y + b * width * s.y};
  return out;
}

ScreenRect project_box(const Camera& cam, const std::array<Vec2, 4>& corners, double height) {
  ScreenRect r{1e300, -1e300, 1e300, -1e300, true};
  for (const auto& p : corners) {
    if (p.x <= 0.5) return {0, 0, 0, 0, false};
    const double u = cam.u_of(p);
    r.u0 = std::min(r.u0, u);
    r.u1 = std::max(r.u1, u);
    r.v_bot = std::max(r.v_bot, cam.v_of(p.x, 0.0));
    r.v_top = std::min(r.v_top, cam.v_of(p.x, height));
  }
  return r;
}

double overlap(double lo, double hi, double a, double b) { return std::max(0.0, std::min(hi, b) - std::max(lo, a)); }

void paint_rect(vision::ImageFrame& img, const Camera& cam, const ScreenRect& r, const std::array<double, 3>& color) {
  if (!r.visible) return;
  const int c0 = std::max(0, static_cast<int>(std::floor(r.u0 + cam.cu)));
  const int c1 = std::min(cam.W - 1, static_cast<int>(std::ceil(r.u1 + cam.cu)));
  const int r0 = std::max(0, static_cast<int>(std::floor(r.v_top + cam.cv)));
  const int r1 = std::min(cam.H - 1, static_cast<int>(std::ceil(r.v_bot + cam.cv)));
  for (int row = r0; row <= r1; ++row) {
    const double v = row - cam.cv;
    const double cv = overlap(v - 0.5, v + 0.5, r.v_top, r.v_bot);
    if (cv <= 0.0) continue;
    for (int col = c0; col <= c1; ++col) {
      const double u = col - cam.cu;
      const double cov = cv * overlap(u - 0.5, u + 0.5, r.u0, r.u1);
      if (cov <= 0.0) continue;
      for (int ch = 0; ch < 3; ++ch) {
        double& p = img.at(ch, row, col);
        p = (1.0 - cov) * p + cov * color[ch];
      }
    }
  }
}

void add_blob(vision::ImageFrame& img, const Camera& cam, double u0, double v0, double sigma, double amp,
              const std::array<double, 3>& tint) {
  // Window bounds use floor/ceil pairs so that the window of a mirrored blob
  // is the mirrored window.
  const double reach = std::ceil(3.0 * sigma) + 1.0;
  const int c0 = std::max(0, static_cast<int>(std::floor(u0 + cam.cu - reach)));
  const int c1 = std::min(cam.W - 1, static_cast<int>(std::ceil(u0 + cam.cu + reach)));
  const int r0 = std::max(0, static_cast<int>(std::floor(v0 + cam.cv - reach)));
  const int r1 = std::min(cam.H - 1, static_cast<int>(std::ceil(v0 + cam.cv + reach)));
  for (int row = r0; row <= r1; ++row)
    for (int col = c0; col <= c1; ++col) {
      const double du = (col - cam.cu) - u0, dv = (row - cam.cv) - v0;
      const double w = amp * std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
      for (int ch = 0; ch < 3; ++ch) img.at(ch, row, col) += w * tint[ch];
    }
}

struct VehicleState {
  Vec2 center, heading, side, velocity;
};

vision::ImageFrame render_image(const Scene& scene, const VehicleTrack& track, const VehicleState& veh) {
  const WorldConfig& w = scene.world();
  const Camera cam(w.camera);
  vision::ImageFrame img(cam.H, cam.W, w.scenario_id);
  const double dim = w.night ? 0.12 : 1.0;
  const double a = w.road.angle_deg * kDeg;
  const double mirror = w.mirrored ? -1.0 : 1.0;
  for (int row = 0; row < cam.H; ++row) {
    const double v = row - cam.cv;
    for (int col = 0; col < cam.W; ++col) {
      std::array<double, 3> c{};
      if (v <= 0.0) {
        const double t = std::min(1.0, -v / cam.cv);
        c = {0.8 - 0.35 * t, 0.88 - 0.23 * t, 1.0 - 0.05 * t};
      } else {
        const double u = col - cam.cu;
        const double xg = cam.f * cam.hc / v;
        const double yg = -(u * xg) / cam.f;
        // Road membership is evaluated in road coordinates, which are
        // mirror-invariant.
        const double px = xg - w.road.distance, py = mirror * yg;
        const double along = px * std::sin(a) - py * std::cos(a);
        const double off = px * std::cos(a) + py * std::sin(a);
        const double shade = 0.85 + 0.15 * std::min(1.0, v / cam.cv);
        if (std::abs(off) <= w.road.width / 2 && std::abs(along) <= w.road.half_length + 10.0) {
          c = {0.33 * shade, 0.33 * shade, 0.36 * shade};
        } else {
          c = {0.30 * shade, 0.50 * shade, 0.24 * shade};
        }
      }
      for (int ch = 0; ch < 3; ++ch) img.at(ch, row, col) = dim * c[ch];
    }
  }

  // Static objects far to near, then the vehicle in front of them.
  std::vector<std::pair<double, const StaticObject*>> order;
  for (const auto& o : scene.objects()) {
    const Vec2 c = scene.local(o.along, o.offset);
    order.emplace_back(std::hypot(c.x, c.y), &o);
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
  for (const auto& [range, o] : order) {
    const auto corners = footprint(scene.local(o->along, o->offset), scene.direction(), scene.normal(), o->length, o->width);
    std::array<double, 3> col = o->color;
    for (auto& ch : col) ch *= dim;
    paint_rect(img, cam, project_box(cam, corners, o->height), col);
  }

  const auto& e = track.extent;
  const auto corners = footprint(veh.center, veh.heading, veh.side, e[0], e[1]);
  std::array<double, 3> body = track.color;
  for (auto& ch : body) ch *= w.night ? 0.15 : 1.0;
  paint_rect(img, cam, project_box(cam, corners, e[2]), body);

  if (w.night) {
    // Head lights at the front corners, tail lights at the rear.
    for (double end : {0.5, -0.5}) {
      const bool front = end > 0;
      for (double side : {-0.35, 0.35}) {
        const Vec2 p{veh.center.x + end * e[0] * veh.heading.x + side * e[1] * veh.side.x,
                     veh.center.y + end * e[0] * veh.heading.y + side * e[1] * veh.side.y};
        if (p.x <= 0.5) continue;
        const double sigma = std::max(0.7, cam.f * 0.3 / p.x);
        add_blob(img, cam, cam.u_of(p), cam.v_of(p.x, 0.7), sigma, front ? 1.0 : 0.6,
                 front ? std::array<double, 3>{1.0, 0.95, 0.8} : std::array<double, 3>{0.9, 0.1, 0.1});
      }
    }
  }
  for (auto& p : img.pixels.vec()) p = std::clamp(p, 0.0, 1.0);
  return img;
}

// Uniform samples on the surface of a box (top and four sides, weighted by area).
void sample_box(lidar::PointCloud& pc, Rng& rng, int n, Vec2 c, Vec2 h, Vec2 s, double length, double width,
                double height, double z0, double intensity, double noise) {
  const double a_top = length * width, a_long = length * height, a_end = width * height;
  const double total = a_top + 2 * a_long + 2 * a_end;
  for (int i = 0; i < n; ++i) {
    const double pick = uniform(rng, 0.0, total);
    double a = uniform(rng, -0.5, 0.5), b = uniform(rng, -0.5, 0.5), z = uniform(rng, 0.0, height);
    if (pick < a_top) z = height;
    else if (pick < a_top + 2 * a_long) b = pick < a_top + a_long ? -0.5 : 0.5;
    else a = pick < a_top + 2 * a_long + a_end ? -0.5 : 0.5;
    lidar::Point p{c.x + a * length * h.x + b * width * s.x, c.y + a * length * h.y + b * width * s.y, z0 + z,
                   intensity * uniform(rng, 0.8, 1.0)};
    const double nx = normal01(rng), ny = normal01(rng), nz = normal01(rng);
    p.x += noise * nx;
    p.y += noise * ny;
    p.z += noise * nz;
    pc.points.push_back(p);
  }
}

lidar::PointCloud render_lidar(const Scene& scene, const VehicleTrack& track, const VehicleState& veh, Rng& rng) {
  const WorldConfig& w = scene.world();
  const double z0 = -w.lidar.mount_height, noise = w.lidar.noise_sigma;
  const double mirror = w.mirrored ? -1.0 : 1.0;
  lidar::PointCloud pc;
  sample_box(pc, rng, w.lidar.vehicle_points, veh.center, veh.heading, veh.side, track.extent[0], track.extent[1],
             track.extent[2], z0, track.intensity, noise);
  for (const auto& o : scene.objects())
    sample_box(pc, rng, w.lidar.object_points, scene.local(o.along, o.offset), scene.direction(), scene.normal(),
               o.length, o.width, o.height, z0, o.intensity, noise);
  for (int i = 0; i < w.lidar.ground_points; ++i) {
    const double x = uniform(rng, 2.0, 60.0), y = uniform(rng, -30.0, 30.0);
    const double intensity = uniform(rng, 0.02, 0.15);
    const double nz = normal01(rng);
    pc.points.push_back({x, mirror * y, z0 + noise * nz, intensity});
  }
  return pc;
}

struct RadarTarget {
  Vec2 p;
  Vec2 v;
  double amp;
};

radar::RadarCube render_radar(const Scene& scene, const std::vector<RadarTarget>& targets, Rng& rng) {
  const auto& rc = scene.world().radar;
  const int A = rc.antennas, S = rc.samples, C = rc.chirps;
  radar::RadarCube cube(A, S, C);
  std::vector<radar::cplx> ea(A), es(S), ec(C);
  for (const auto& t : targets) {
    const double r = std::hypot(t.p.x, t.p.y);
    const double phase0 = uniform(rng, 0.0, 2.0 * kPi);
    if (r >= rc.r_max) continue;
    const double v_r = (t.p.x * t.v.x + t.p.y * t.v.y) / r;
    const double mu_r = 0.4 * r / rc.r_max;
    const double mu_d = 0.4 * std::clamp(v_r / rc.v_max, -1.0, 1.0);
    const double mu_a = 0.5 * codebook_sine(t.p);
    // Antenna phases are referenced to the array centre, so a lateral mirror
    // maps each angle spectrum onto its reverse.
    for (int a = 0; a < A; ++a) ea[a] = std::polar(1.0, 2.0 * kPi * mu_a * (a - 0.5 * (A - 1)));
    for (int s = 0; s < S; ++s) es[s] = std::polar(1.0, 2.0 * kPi * mu_r * s);
    for (int c = 0; c < C; ++c) ec[c] = std::polar(1.0, 2.0 * kPi * mu_d * c);
    const radar::cplx g = std::polar(t.amp, phase0);
    for (int a = 0; a < A; ++a)
      for (int s = 0; s < S; ++s) {
        const radar::cplx gas = g * ea[a] * es[s];
        for (int c = 0; c < C; ++c) cube.at(a, s, c) += gas * ec[c];
      }
  }
  for (auto& v : cube.iq) {
    const double re = normal01(rng), im = normal01(rng);
    v += radar::cplx(rc.noise_sigma * re, rc.noise_sigma * im);
  }
  return cube;
}

}  // namespace

SampleRecord generate_sample(const Scene& scene, const VehicleTrack& track, std::uint64_t seed) {
  track.validate();
  const WorldConfig& w = scene.world();
  Rng rng(seed);
  SampleRecord rec;
  rec.scenario_id = w.scenario_id;
  rec.truth.track = track;
  const Vec2 heading{track.direction * scene.direction().x, track.direction * scene.direction().y};
  const Vec2 side = scene.normal();
  const Vec2 velocity{track.speed * heading.x, track.speed * heading.y};

  for (int k = 0; k < kNumInstances; ++k) {
    const double t = -(kNumInstances - 1 - k) * w.sampling_interval;
    const double along = track.along(t);
    if (std::abs(along) > w.road.half_length + 1e-9)
      throw ArgumentError("generate_sample: track leaves the road at instance " + std::to_string(k + 1));
    const VehicleState veh{scene.local(along, track.lane_offset), heading, side, velocity};
    rec.truth.ue[k] = veh.center;
    rec.truth.sine[k] = codebook_sine(veh.center);

    rec.clouds[k] = render_lidar(scene, track, veh, rng);

    std::vector<RadarTarget> targets{{veh.center, velocity, 1.0}};
    for (const auto& o : scene.objects()) targets.push_back({scene.local(o.along, o.offset), {0.0, 0.0}, 0.35});
    rec.cubes[k] = render_radar(scene, targets, rng);

    rec.images[k] = render_image(scene, track, veh);
    if (w.image_noise_sigma > 0.0)
      for (auto& p : rec.images[k].pixels.vec()) p = std::clamp(p + w.image_noise_sigma * normal01(rng), 0.0, 1.0);
  }

  const double th = w.theta_deg * kDeg;
  for (int k = 0; k < kNumGpsInstances; ++k) {
    const Vec2 p = rec.truth.ue[k];
    const double nx = normal01(rng), ny = normal01(rng);
    const double x = p.x + w.gps_noise_sigma * nx, y = p.y + w.gps_noise_sigma * ny;
    rec.gps[k] = geo::from_local_xy({x * std::cos(th) - y * std::sin(th), x * std::sin(th) + y * std::cos(th)}, w.bs);
    rec.truth.calibrated_angle[k] = geo::wrap_degrees(std::atan2(p.y, p.x) / kDeg);
  }

  const auto powers = beam_powers_sine(rec.truth.sine[kNumInstances - 1], w.n_antennas);
  rec.powers.assign(powers.begin(), powers.end());
  rec.label = best_beam(powers);
  return rec;
}

SampleRecord generate_random_sample(const Scene& scene, std::uint64_t seed) {
  Rng rng(seed);
  const VehicleTrack track = scene.random_track(rng);
  return generate_sample(scene, track, derive_seed(seed, seed_tag::kSynthSample, 1));
}

std::vector<int> counts_from_ratios(int total, const std::vector<double>& ratios) {
  require(total >= 0, "sample total must be non-negative");
  require(!ratios.empty(), "ratios must not be empty");
  double sum = 0.0;
  for (double r : ratios) {
    require(r >= 0.0 && std::isfinite(r), "ratios must be non-negative");
    sum += r;
  }
  require(sum > 0.0, "ratios must not all be zero");
  std::vector<int> counts(ratios.size());
  std::vector<double> frac(ratios.size());
  int assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double exact = total * ratios[i] / sum;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    frac[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::vector<std::size_t> idx(ratios.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned) ++counts[idx[j % idx.size()]];
  return counts;
}

std::vector<SamplePlan> plan_dataset(const std::vector<int>& counts, std::uint64_t root_seed) {
  std::vector<SamplePlan> plan;
  int id = 0;
  for (std::size_t w = 0; w < counts.size(); ++w)
    for (int i = 0; i < counts[w]; ++i, ++id)
      plan.push_back({id, static_cast<int>(w), derive_seed(root_seed, seed_tag::kSynthSample, static_cast<std::uint64_t>(id))});
  return plan;
}

}  // namespace mmbeam::synth
