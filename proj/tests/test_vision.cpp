#include <doctest.h>

#include <cmath>
#include <random>

#include "mmbeam/vision.hpp"

using namespace mmbeam;
using namespace mmbeam::vision;

namespace {

ImageFrame random_image(std::uint64_t seed, int h, int w) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageFrame img(h, w);
  for (auto& v : img.pixels.vec()) v = u(rng);
  return img;
}

}  // namespace

TEST_SUITE("vision") {
  TEST_CASE("flip is an involution that reverses columns") {
    const auto img = random_image(1, 6, 9);
    const auto f = flip_image(img);
    CHECK(flip_image(f).pixels == img.pixels);
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 6; ++r) CHECK(f.at(ch, r, 0) == img.at(ch, r, 8));
    SceneMask m{ad::Tensor<double>({2, 3}, {1, 0, 0, 0, 1, 1}), 0};
    CHECK(flip_mask(m).mask.vec() == std::vector<double>{0, 0, 1, 1, 1, 0});
  }

  TEST_CASE("brightness enhancement formula") {
    ImageFrame img(1, 2);
    for (int ch = 0; ch < 3; ++ch) {
      img.at(ch, 0, 0) = 0.04;
      img.at(ch, 0, 1) = 0.81;
    }
    const auto e = enhance_brightness(img, 0.5, 1.0);
    CHECK(e.at(0, 0, 0) == doctest::Approx(0.2));
    CHECK(e.at(2, 0, 1) == doctest::Approx(0.9));
    const auto clipped = enhance_brightness(img, 1.0, 2.0);
    CHECK(clipped.at(1, 0, 1) == 1.0);
    CHECK_THROWS_AS(enhance_brightness(img, 0.0, 1.0), ArgumentError);
  }

  TEST_CASE("photometric augmentation keeps range and geometry") {
    PhotometricParams p;
    p.brightness = 0.4;
    p.contrast = 0.4;
    p.gamma = 0.3;
    p.hue_shift = 20.0;
    p.saturation = 0.3;
    p.sharpness = 1.0;
    p.blur_sigma = 1.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto img = random_image(100 + s, 8, 12);
      const auto a = augment_photometric(img, p, s);
      CHECK(a.pixels.shape() == img.pixels.shape());
      for (double v : a.pixels.vec()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(augment_photometric(img, p, s).pixels == a.pixels);
    }
    // Identity when every factor is zero.
    const auto img = random_image(7, 5, 5);
    CHECK(augment_photometric(img, PhotometricParams{}, 3).pixels == img.pixels);
  }

  TEST_CASE("brightness factor stays inside its bound") {
    PhotometricParams p;
    p.brightness = 0.25;
    ImageFrame img(2, 2);
    for (auto& v : img.pixels.vec()) v = 0.5;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto a = augment_photometric(img, p, s);
      CHECK(a.pixels[0] >= 0.5 * 0.75 - 1e-12);
      CHECK(a.pixels[0] <= 0.5 * 1.25 + 1e-12);
      for (double v : a.pixels.vec()) CHECK(v == a.pixels[0]);
    }
  }

  TEST_CASE("photometric validation") {
    PhotometricParams p;
    p.brightness = 1.5;
    CHECK_THROWS_AS(p.validate(), ArgumentError);
    PhotometricParams q;
    q.blur_sigma = -1.0;
    CHECK_THROWS_AS(q.validate(), ArgumentError);
  }

  TEST_CASE("blur is identity at zero sigma and preserves constants") {
    const auto img = random_image(9, 7, 7);
    CHECK(gaussian_blur(img, 0.0).pixels == img.pixels);
    ImageFrame c(5, 6);
    for (auto& v : c.pixels.vec()) v = 0.3;
    const auto blurred = gaussian_blur(c, 1.5);
    for (double v : blurred.pixels.vec()) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
    // Blur commutes with the mirror (symmetric kernel, clamped borders).
    const auto a = gaussian_blur(flip_image(img), 1.2), b = flip_image(gaussian_blur(img, 1.2));
    for (std::size_t i = 0; i < a.pixels.size(); ++i) CHECK(std::abs(a.pixels[i] - b.pixels[i]) < 1e-12);
  }

  TEST_CASE("scene mask marks moving pixels and dilates") {
    std::vector<ImageFrame> frames;
    for (int f = 0; f < 5; ++f) {
      ImageFrame img(5, 5);
      for (auto& v : img.pixels.vec()) v = 0.5;
      if (f == 2) img.at(1, 2, 2) = 0.9;
      frames.push_back(img);
    }
    const auto m = build_scene_mask(frames, 0.1);
    double on = 0.0;
    for (double v : m.mask.vec()) on += v;
    CHECK(on == 9.0);
    CHECK(m.mask[0] == 0.0);
    CHECK(m.mask[2 * 5 + 2] == 1.0);
    const auto masked = apply_mask(frames[0], m);
    CHECK(masked.at(0, 0, 0) == 0.0);
    CHECK(masked.at(0, 1, 1) == 0.5);
    CHECK_THROWS_AS(build_scene_mask(std::span(frames).first(2), 0.1), ArgumentError);
  }

  TEST_CASE("polygon mask") {
    const std::vector<std::pair<double, double>> square{{1, 1}, {3, 1}, {3, 3}, {1, 3}};
    const auto m = polygon_mask(4, 4, square);
    double on = 0.0;
    for (double v : m.mask.vec()) on += v;
    CHECK(on == 4.0);
    CHECK(m.mask[1 * 4 + 1] == 1.0);
    CHECK(m.mask[0] == 0.0);
  }

  TEST_CASE("tensor conversions") {
    const auto img = random_image(4, 3, 4);
    const auto t = to_tensor(img);
    CHECK(t.shape() == ad::Shape{3, 3, 4});
    const auto back = from_tensor(t);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back.pixels[i] == static_cast<double>(t[i]));
    CHECK_THROWS_AS(from_tensor(ad::Tensor<float>({2, 3, 4})), DataError);
    CHECK_THROWS_AS(from_tensor(ad::Tensor<float>({3, 1, 1}, 2.0f)), DataError);
  }
}
