#include <doctest.h>

#include <cmath>

#include "mmbeam/synth.hpp"
#include "worlds.hpp"

using namespace mmbeam;
using namespace mmbeam::synth;
using mmbeam::test::small_world;

TEST_SUITE("synth") {
  TEST_CASE("on-grid directions give the full array gain") {
    for (int b = 1; b <= kNumBeams; ++b) {
      const auto p = beam_powers_sine(beam_sine(b));
      CHECK(p[b - 1] == doctest::Approx(64.0).epsilon(1e-12));
      CHECK(best_beam(p).index() == b);
      double total = 0.0;
      for (double v : p) total += v;
      // Orthogonal codebook: the powers of an on-grid direction sum to N.
      CHECK(total == doctest::Approx(64.0).epsilon(1e-9));
    }
  }

  TEST_CASE("broadside ties between the two middle beams") {
    const auto p = beam_powers(0.0);
    CHECK(p[31] == p[32]);
    CHECK(best_beam(p).index() == 32);
    // Right of boresight (positive angle) selects higher beams.
    CHECK(best_beam(beam_powers(10.0)).index() > 33);
    CHECK(best_beam(beam_powers(-10.0)).index() < 32);
    CHECK_THROWS_AS(beam_powers(90.0), ArgumentError);
  }

  TEST_CASE("labels sweep monotonically along every noise-free track") {
    for (int id : {31, 32, 33, 34}) {
      for (bool mirrored : {false, true}) {
        const Scene scene(small_world(id, mirrored, true), 1);
        for (double lane : {-1.75, 1.75}) {
          int prev = 0;
          bool first = true;
          const double L = scene.world().road.half_length;
          for (double s = -L; s <= L; s += 0.05) {
            const int b = best_beam(beam_powers_sine(codebook_sine(scene.local(s, lane)))).index();
            // Along +d the vehicle moves left to right (right to left when mirrored).
            if (!first) {
              if (mirrored) CHECK(b <= prev);
              else CHECK(b >= prev);
            }
            prev = b;
            first = false;
          }
        }
      }
    }
  }

  TEST_CASE("generated samples carry consistent truth") {
    const Scene scene(small_world(32), 7);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto rec = generate_random_sample(scene, s);
      REQUIRE(rec.label.has_value());
      CHECK(rec.powers.size() == 64u);
      std::array<double, kNumBeams> p{};
      std::copy(rec.powers.begin(), rec.powers.end(), p.begin());
      CHECK(best_beam(p) == *rec.label);
      CHECK(rec.images[0].height() == 16);
      CHECK(rec.images[0].width() == 24);
      CHECK(rec.cubes[4].antennas == 4);
      // Instances are ordered in time: the sine moves monotonically.
      const int sign = rec.truth.sine[4] > rec.truth.sine[0] ? 1 : -1;
      for (int k = 1; k < kNumInstances; ++k) CHECK(sign * (rec.truth.sine[k] - rec.truth.sine[k - 1]) >= 0.0);
      const auto again = generate_random_sample(scene, s);
      CHECK(again.images[2].pixels == rec.images[2].pixels);
      CHECK(again.clouds[1] == rec.clouds[1]);
    }
  }

  TEST_CASE("mirrored worlds render mirrored samples") {
    const Scene plain(small_world(31, false, true), 3), mirror(small_world(31, true, true), 3);
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto a = generate_random_sample(plain, s), b = generate_random_sample(mirror, s);
      CHECK(b.label->index() == 65 - a.label->index());
      for (int k = 0; k < kNumInstances; ++k) {
        CHECK(vision::flip_image(a.images[k]).pixels == b.images[k].pixels);
        CHECK(lidar::flip_pointcloud(a.clouds[k]) == b.clouds[k]);
        CHECK(b.truth.sine[k] == -a.truth.sine[k]);
      }
    }
  }

  TEST_CASE("stationary vehicle sits in the zero-Doppler column") {
    auto w = small_world(32, false, true);
    w.static_objects = 0;
    w.lidar.ground_points = 0;
    const Scene scene(w, 1);
    VehicleTrack t;
    t.speed = 0.0;
    t.s5 = 3.0;
    const auto rec = generate_sample(scene, t, 5);
    const auto rv = radar::range_velocity_map(rec.cubes[4]);
    const int C = rv.dim(1);
    std::size_t best = 0;
    for (std::size_t i = 1; i < rv.size(); ++i)
      if (rv[i] > rv[best]) best = i;
    CHECK(static_cast<int>(best % C) == C / 2);
  }

  TEST_CASE("ratio split and dataset plan") {
    CHECK(counts_from_ratios(310, {1, 10, 10, 10}) == std::vector<int>{10, 100, 100, 100});
    CHECK(counts_from_ratios(10, {1, 1, 1}) == std::vector<int>{4, 3, 3});
    CHECK(counts_from_ratios(0, {1, 2}) == std::vector<int>{0, 0});
    CHECK_THROWS_AS(counts_from_ratios(5, {0, 0}), ArgumentError);
    const auto plan = plan_dataset({2, 3}, 9);
    REQUIRE(plan.size() == 5u);
    for (int i = 0; i < 5; ++i) CHECK(plan[i].sample_id == i);
    CHECK(plan[1].world_index == 0);
    CHECK(plan[2].world_index == 1);
    CHECK(plan_dataset({2, 3}, 9)[4].seed == plan[4].seed);
    CHECK(plan_dataset({2, 3}, 10)[4].seed != plan[4].seed);
  }

  TEST_CASE("off-road tracks and invalid worlds are rejected") {
    const Scene scene(small_world(32), 1);
    VehicleTrack t;
    t.s5 = 1e3;
    CHECK_THROWS_AS(generate_sample(scene, t, 1), ArgumentError);
    auto w = small_world(32);
    w.road.angle_deg = 75.0;
    CHECK_THROWS_AS(w.validate(), ArgumentError);
    w = small_world(32);
    w.radar.r_max = 10.0;
    CHECK_THROWS_AS(w.validate(), ArgumentError);
  }

  TEST_CASE("streamed preparation is independent of generation order") {
    const std::vector<WorldConfig> worlds{small_world(31), small_world(32)};
    const auto prep = mmbeam::test::small_prep();
    const auto a = pipeline::synthesize_prepared(worlds, {3, 4}, 11, prep);
    REQUIRE(a.samples.size() == 7u);
    const auto plan = plan_dataset({3, 4}, 11);
    for (int i : {0, 5}) {
      const Scene scene(worlds[plan[i].world_index], 11);
      auto rec = generate_random_sample(scene, plan[i].seed);
      rec.sample_id = i;
      const auto s = pipeline::prepare_sample(rec, prep, scene.world().calibration(), scene.world().bs);
      for (const auto& [m, t] : s.inputs) CHECK(a.samples[i].inputs.at(m) == t);
      CHECK(a.samples[i].label == s.label);
    }
    CHECK(a.samples[6].inputs.at(model::Modality::Radar).shape() == ad::Shape{5, 1, 16, 24});
    CHECK(a.samples[6].inputs.at(model::Modality::Lidar).shape() == ad::Shape{5, 3, 16, 16});
  }
}
