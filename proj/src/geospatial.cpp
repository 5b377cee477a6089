#include "mmbeam/geospatial.hpp"

#include <cmath>
#include <numbers>

namespace mmbeam::geo {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kMetresPerDegree = kEarthRadiusM * kDegToRad;
}  // namespace

void GpsFix::validate() const {
  if (!std::isfinite(latitude) || !std::isfinite(longitude) || std::abs(latitude) > 90.0 ||
      std::abs(longitude) > 180.0)
    throw ArgumentError("invalid GPS fix");
}

double wrap_degrees(double deg) {
  if (!std::isfinite(deg)) throw ArgumentError("angle must be finite");
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

LocalXY to_local_xy(const GpsFix& ue, const GpsFix& bs) {
  ue.validate();
  bs.validate();
  return {(ue.longitude - bs.longitude) * std::cos(bs.latitude * kDegToRad) * kMetresPerDegree,
          (ue.latitude - bs.latitude) * kMetresPerDegree};
}

GpsFix from_local_xy(const LocalXY& offset, const GpsFix& bs) {
  bs.validate();
  GpsFix fix{bs.latitude + offset.y / kMetresPerDegree,
             bs.longitude + offset.x / (kMetresPerDegree * std::cos(bs.latitude * kDegToRad))};
  fix.validate();
  return fix;
}

CalibratedAngle relative_angle(const LocalXY& d) {
  if (d.x == 0.0 && d.y == 0.0) throw DegenerateGeometryError("UE and BS positions coincide");
  return CalibratedAngle(std::atan2(d.y, d.x) / kDegToRad);
}

CalibratedAngle relative_angle(const GpsFix& ue, const GpsFix& bs) {
  if (ue == bs) throw DegenerateGeometryError("UE and BS positions coincide");
  return relative_angle(to_local_xy(ue, bs));
}

CalibratedAngle calibrate(CalibratedAngle raw, const ScenarioCalibration& cal) {
  return CalibratedAngle(raw.degrees() - cal.theta);
}

CalibratedAngle uncalibrate(CalibratedAngle calibrated, const ScenarioCalibration& cal) {
  return CalibratedAngle(calibrated.degrees() + cal.theta);
}

CalibratedAngle flip_angle(CalibratedAngle a) { return CalibratedAngle(-a.degrees()); }

double distance_m(const GpsFix& ue, const GpsFix& bs) {
  const LocalXY d = to_local_xy(ue, bs);
  return std::hypot(d.x, d.y);
}

std::optional<ScenarioCalibration> measured_calibration(int scenario_id) {
  switch (scenario_id) {
    case 31: return ScenarioCalibration{31, -50.52};
    case 32: return ScenarioCalibration{32, 44.8};
    case 33: return ScenarioCalibration{33, 55.6};
    case 34: return ScenarioCalibration{34, -60.0};
    default: return std::nullopt;
  }
}

}  // namespace mmbeam::geo
