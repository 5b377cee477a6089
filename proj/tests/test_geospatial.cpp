#include <doctest.h>

#include <cmath>
#include <random>

#include "mmbeam/geospatial.hpp"

using namespace mmbeam;
using namespace mmbeam::geo;

TEST_SUITE("geospatial") {
  TEST_CASE("wrap into (-180, 180]") {
    CHECK(wrap_degrees(180.0) == 180.0);
    CHECK(wrap_degrees(-180.0) == 180.0);
    CHECK(wrap_degrees(540.0) == 180.0);
    CHECK(wrap_degrees(-190.0) == doctest::Approx(170.0));
    CHECK(wrap_degrees(190.0) == doctest::Approx(-170.0));
    CHECK(wrap_degrees(0.0) == 0.0);
    CHECK_THROWS_AS(wrap_degrees(std::nan("")), ArgumentError);
    CHECK(CalibratedAngle(-720.0 + 30.0).degrees() == doctest::Approx(30.0));
  }

  TEST_CASE("cardinal directions") {
    const GpsFix bs{40.0, -74.0};
    const double east = relative_angle(from_local_xy({10.0, 0.0}, bs), bs).degrees();
    const double north = relative_angle(from_local_xy({0.0, 10.0}, bs), bs).degrees();
    const double west = relative_angle(from_local_xy({-10.0, 0.0}, bs), bs).degrees();
    CHECK(east == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(north == doctest::Approx(90.0).epsilon(1e-9));
    CHECK(west == doctest::Approx(180.0).epsilon(1e-9));
  }

  TEST_CASE("local round trip and distance") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-200.0, 200.0);
    const GpsFix bs{33.42, -111.93};
    for (int i = 0; i < 200; ++i) {
      const LocalXY d{u(rng), u(rng)};
      const LocalXY back = to_local_xy(from_local_xy(d, bs), bs);
      CHECK(std::abs(back.x - d.x) < 1e-6);
      CHECK(std::abs(back.y - d.y) < 1e-6);
      CHECK(distance_m(from_local_xy(d, bs), bs) == doctest::Approx(std::hypot(d.x, d.y)).epsilon(1e-9));
    }
  }

  TEST_CASE("calibration round trip within 1e-12") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> a(-179.9, 180.0), th(-90.0, 90.0);
    for (int i = 0; i < 1000; ++i) {
      const CalibratedAngle raw(a(rng));
      const ScenarioCalibration cal{32, th(rng)};
      const double back = uncalibrate(calibrate(raw, cal), cal).degrees();
      CHECK(std::abs(wrap_degrees(back - raw.degrees())) < 1e-12);
    }
  }

  TEST_CASE("calibration rotates the camera axis to zero") {
    const GpsFix bs{0.0, 0.0};
    const double theta = 44.8;
    const double t = theta * std::numbers::pi / 180.0;
    // A UE straight along the camera axis.
    const GpsFix ue = from_local_xy({20.0 * std::cos(t), 20.0 * std::sin(t)}, bs);
    const double c = calibrate(relative_angle(ue, bs), {32, theta}).degrees();
    CHECK(std::abs(c) < 1e-9);
  }

  TEST_CASE("flip is an involution and negates") {
    for (double v : {-179.5, -90.0, -1e-9, 0.0, 12.25, 90.0, 180.0}) {
      const CalibratedAngle x(v);
      CHECK(flip_angle(flip_angle(x)).degrees() == x.degrees());
      if (v != 180.0) CHECK(flip_angle(x).degrees() == -x.degrees());
    }
  }

  TEST_CASE("errors") {
    const GpsFix bs{10.0, 10.0};
    CHECK_THROWS_AS(relative_angle(bs, bs), DegenerateGeometryError);
    CHECK_THROWS_AS(relative_angle(LocalXY{0.0, 0.0}), DegenerateGeometryError);
    CHECK_THROWS_AS((GpsFix{91.0, 0.0}.validate()), ArgumentError);
    CHECK_THROWS_AS((GpsFix{0.0, std::nan("")}.validate()), ArgumentError);
  }

  TEST_CASE("measured calibrations") {
    CHECK(measured_calibration(31)->theta == -50.52);
    CHECK(measured_calibration(32)->theta == 44.8);
    CHECK(measured_calibration(33)->theta == 55.6);
    CHECK(measured_calibration(34)->theta == -60.0);
    CHECK_FALSE(measured_calibration(7).has_value());
  }
}
