#pragma once

#include "mmbeam/pipeline.hpp"

// Reduced-resolution worlds and preprocessing shared by the synthetic tests.

namespace mmbeam::test {

inline synth::WorldConfig small_world(int scenario_id, bool mirrored = false, bool noise_free = false) {
  synth::WorldConfig w = synth::scenario_preset(scenario_id);
  w.camera.width = 24;
  w.camera.height = 16;
  w.radar.antennas = 4;
  w.radar.samples = 16;
  w.radar.chirps = 8;
  w.lidar.vehicle_points = 40;
  w.lidar.ground_points = 60;
  w.lidar.object_points = 10;
  w.static_objects = 3;
  w.mirrored = mirrored;
  return noise_free ? w.noise_free() : w;
}

inline pipeline::PrepConfig small_prep() {
  pipeline::PrepConfig p;
  p.bev.cell_size = 4.0;
  p.radar_angle_bins = 16;
  return p;
}

}  // namespace mmbeam::test
