#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mmbeam/ad/tensor.hpp"
#include "mmbeam/common.hpp"

namespace mmbeam::vision {

/// RGB image, pixels [3, H, W] in [0,1].
struct ImageFrame {
  ad::Tensor<double> pixels;
  int scenario_id = 0;

  ImageFrame() = default;
  ImageFrame(int height, int width, int scenario = 0) : pixels({3, height, width}), scenario_id(scenario) {}
  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }
  double& at(int ch, int r, int c) {
    return pixels[(static_cast<std::size_t>(ch) * height() + r) * width() + c];
  }
  double at(int ch, int r, int c) const {
    return pixels[(static_cast<std::size_t>(ch) * height() + r) * width() + c];
  }
  void validate() const;
};

/// Binary H x W mask.
struct SceneMask {
  ad::Tensor<double> mask;
  int scenario_id = 0;

  int height() const { return mask.dim(0); }
  int width() const { return mask.dim(1); }
  void validate() const;
};

/// p -> clip(gain * p^gamma, 0, 1).
ImageFrame enhance_brightness(const ImageFrame& img, double gamma, double gain);

/// Multiplies every channel by the mask.
ImageFrame apply_mask(const ImageFrame& img, const SceneMask& m);

/// Maximum deviation from identity of each photometric factor. A zero
/// entry disables that transform.
struct PhotometricParams {
  double brightness = 0.0;  // factor 1 + U(-b, b)
  double contrast = 0.0;    // factor 1 + U(-c, c) about the mean grey level
  double gamma = 0.0;       // exponent exp(U(-g, g))
  double hue_shift = 0.0;   // degrees, U(-h, h)
  double saturation = 0.0;  // factor 1 + U(-s, s)
  double sharpness = 0.0;   // unsharp-mask amount U(0, s)
  double blur_sigma = 0.0;  // Gaussian sigma U(0, sigma) in pixels

  /// Throws ArgumentError unless every entry lies in its bounded range.
  void validate() const;
};

/// Applies brightness, contrast, gamma, hue, saturation, sharpness and blur
/// in that order with factors drawn from `seed`. Geometry is untouched.
ImageFrame augment_photometric(const ImageFrame& img, const PhotometricParams& params, std::uint64_t seed);
/// Per-image seeds derive_seed(base_seed, kAugment, i); parallel over images.
std::vector<ImageFrame> augment_photometric_batch(std::span<const ImageFrame> imgs, const PhotometricParams& params,
                                                  std::uint64_t base_seed);

/// Separable Gaussian blur with clamped borders; sigma <= 0 is the identity.
ImageFrame gaussian_blur(const ImageFrame& img, double sigma);

ImageFrame flip_image(const ImageFrame& img);
SceneMask flip_mask(const SceneMask& m);

/// Temporal-median background; a pixel is 1 when some frame differs from the
/// median by more than diff_threshold in any channel, then dilated by one pixel.
SceneMask build_scene_mask(std::span<const ImageFrame> frames, double diff_threshold);

/// Even-odd fill of a polygon given as (column, row) vertices, sampled at pixel centres.
SceneMask polygon_mask(int height, int width, std::span<const std::pair<double, double>> vertices, int scenario_id = 0);

ad::Tensor<float> to_tensor(const ImageFrame& img);
ImageFrame from_tensor(const ad::Tensor<float>& t, int scenario_id = 0);

}  // namespace mmbeam::vision
