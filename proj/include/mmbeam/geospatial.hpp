#pragma once

#include <optional>

#include "mmbeam/common.hpp"

namespace mmbeam::geo {

inline constexpr double kEarthRadiusM = 6378137.0;

struct GpsFix {
  double latitude = 0.0;   // degrees
  double longitude = 0.0;  // degrees

  void validate() const;
  bool operator==(const GpsFix&) const = default;
};

/// East/north offsets in metres on the tangent plane at the base station.
struct LocalXY {
  double x = 0.0;
  double y = 0.0;
};

/// Wraps into (-180, 180].
double wrap_degrees(double deg);

/// Angle in degrees, always kept in (-180, 180].
class CalibratedAngle {
 public:
  CalibratedAngle() = default;
  explicit CalibratedAngle(double degrees) : degrees_(wrap_degrees(degrees)) {}
  double degrees() const noexcept { return degrees_; }

 private:
  double degrees_ = 0.0;
};

struct ScenarioCalibration {
  int scenario_id = 0;
  double theta = 0.0;  // degrees
};

/// Equirectangular projection of `ue` relative to `bs`.
LocalXY to_local_xy(const GpsFix& ue, const GpsFix& bs);
/// Inverse of to_local_xy.
GpsFix from_local_xy(const LocalXY& offset, const GpsFix& bs);

/// Four-quadrant bearing atan2(dy, dx) of the UE seen from the BS.
/// Throws DegenerateGeometryError when the two fixes coincide.
CalibratedAngle relative_angle(const GpsFix& ue, const GpsFix& bs);
CalibratedAngle relative_angle(const LocalXY& offset);

/// Rotates by the scenario angle so that the camera axis maps to 0 degrees.
CalibratedAngle calibrate(CalibratedAngle raw, const ScenarioCalibration& cal);
CalibratedAngle uncalibrate(CalibratedAngle calibrated, const ScenarioCalibration& cal);

/// Mirror about the camera axis (used together with 65 - beam relabelling).
CalibratedAngle flip_angle(CalibratedAngle a);

double distance_m(const GpsFix& ue, const GpsFix& bs);

/// Calibration angles of the four measured scenarios (31..34).
std::optional<ScenarioCalibration> measured_calibration(int scenario_id);

}  // namespace mmbeam::geo
