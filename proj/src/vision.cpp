#include "mmbeam/vision.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace mmbeam::vision {

void ImageFrame::validate() const {
  if (pixels.rank() != 3 || pixels.dim(0) != 3) throw ArgumentError("image must have shape [3,H,W]");
  for (double v : pixels.vec())
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("image pixels must lie in [0,1]");
}

void SceneMask::validate() const {
  if (mask.rank() != 2) throw ArgumentError("mask must have shape [H,W]");
  for (double v : mask.vec())
    if (v != 0.0 && v != 1.0) throw ArgumentError("mask values must be 0 or 1");
}

ImageFrame enhance_brightness(const ImageFrame& img, double gamma, double gain) {
  if (!(gamma > 0.0) || !(gain > 0.0)) throw ArgumentError("brightness gamma and gain must be positive");
  ImageFrame out = img;
  for (auto& p : out.pixels.vec()) p = std::clamp(gain * std::pow(p, gamma), 0.0, 1.0);
  return out;
}

ImageFrame apply_mask(const ImageFrame& img, const SceneMask& m) {
  if (m.mask.rank() != 2 || m.height() != img.height() || m.width() != img.width())
    throw ArgumentError("mask shape does not match image");
  ImageFrame out = img;
  const std::size_t plane = m.mask.size();
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < plane; ++i) out.pixels[ch * plane + i] *= m.mask[i];
  return out;
}

void PhotometricParams::validate() const {
  auto in = [](double v, double hi) { return v >= 0.0 && v <= hi; };
  if (!in(brightness, 0.9) || !in(contrast, 0.9) || !in(gamma, 1.0) || !in(hue_shift, 180.0) ||
      !in(saturation, 0.9) || !in(sharpness, 2.0) || !in(blur_sigma, 5.0))
    throw ArgumentError(
        "photometric parameters out of range (brightness/contrast/saturation <= 0.9, gamma <= 1, hue <= 180, "
        "sharpness <= 2, blur_sigma <= 5)");
}

namespace {

constexpr std::array<double, 3> kLuma{0.299, 0.587, 0.114};

void clip(ImageFrame& img) {
  for (auto& p : img.pixels.vec()) p = std::clamp(p, 0.0, 1.0);
}

double mean_grey(const ImageFrame& img) {
  const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
  double s = 0.0;
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < plane; ++i) s += kLuma[ch] * img.pixels[ch * plane + i];
  return s / static_cast<double>(plane);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d == 0.0) {
    h = 0.0;
  } else if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0.0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(std::floor(hp)) % 6) {
    case 0: r1 = c, g1 = x; break;
    case 1: r1 = x, g1 = c; break;
    case 2: g1 = c, b1 = x; break;
    case 3: g1 = x, b1 = c; break;
    case 4: r1 = x, b1 = c; break;
    default: r1 = c, b1 = x; break;
  }
  const double m = v - c;
  r = r1 + m, g = g1 + m, b = b1 + m;
}

void shift_hue(ImageFrame& img, double degrees) {
  const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
  double* R = img.pixels.data();
  double* G = R + plane;
  double* B = G + plane;
  for (std::size_t i = 0; i < plane; ++i) {
    double h, s, v;
    rgb_to_hsv(R[i], G[i], B[i], h, s, v);
    h = std::fmod(h + degrees + 360.0, 360.0);
    hsv_to_rgb(h, s, v, R[i], G[i], B[i]);
  }
}

void scale_saturation(ImageFrame& img, double factor) {
  const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
  for (std::size_t i = 0; i < plane; ++i) {
    double grey = 0.0;
    for (int ch = 0; ch < 3; ++ch) grey += kLuma[ch] * img.pixels[ch * plane + i];
    for (int ch = 0; ch < 3; ++ch) {
      double& p = img.pixels[ch * plane + i];
      p = grey + factor * (p - grey);
    }
  }
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) s += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= s;
  return k;
}

}  // namespace

ImageFrame gaussian_blur(const ImageFrame& img, double sigma) {
  if (!(sigma > 0.0)) return img;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int H = img.height(), W = img.width();
  ImageFrame tmp = img, out = img;
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d) acc += k[d + radius] * img.at(ch, r, std::clamp(c + d, 0, W - 1));
        tmp.at(ch, r, c) = acc;
      }
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double acc = 0.0;
        for (int d = -radius; d <= radius; ++d) acc += k[d + radius] * tmp.at(ch, std::clamp(r + d, 0, H - 1), c);
        out.at(ch, r, c) = acc;
      }
  }
  clip(out);
  return out;
}

ImageFrame augment_photometric(const ImageFrame& img, const PhotometricParams& p, std::uint64_t seed) {
  p.validate();
  Rng rng(seed);
  auto sym = [&](double a) { return std::uniform_real_distribution<double>(-a, a)(rng); };
  // Every factor is drawn regardless of which transforms are active so the
  // stream layout does not depend on the parameters.
  const double f_bright = 1.0 + sym(p.brightness);
  const double f_contrast = 1.0 + sym(p.contrast);
  const double f_gamma = std::exp(sym(p.gamma));
  const double f_hue = sym(p.hue_shift);
  const double f_sat = 1.0 + sym(p.saturation);
  const double f_sharp = std::uniform_real_distribution<double>(0.0, p.sharpness)(rng);
  const double f_blur = std::uniform_real_distribution<double>(0.0, p.blur_sigma)(rng);

  ImageFrame out = img;
  if (p.brightness > 0.0) {
    for (auto& v : out.pixels.vec()) v *= f_bright;
    clip(out);
  }
  if (p.contrast > 0.0) {
    const double m = mean_grey(out);
    for (auto& v : out.pixels.vec()) v = m + f_contrast * (v - m);
    clip(out);
  }
  if (p.gamma > 0.0)
    for (auto& v : out.pixels.vec()) v = std::pow(v, f_gamma);
  if (p.hue_shift > 0.0) {
    shift_hue(out, f_hue);
    clip(out);
  }
  if (p.saturation > 0.0) {
    scale_saturation(out, f_sat);
    clip(out);
  }
  if (p.sharpness > 0.0) {
    const ImageFrame smooth = gaussian_blur(out, 1.0);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] += f_sharp * (out.pixels[i] - smooth.pixels[i]);
    clip(out);
  }
  if (p.blur_sigma > 0.0) out = gaussian_blur(out, f_blur);
  return out;
}

std::vector<ImageFrame> augment_photometric_batch(std::span<const ImageFrame> imgs, const PhotometricParams& params,
                                                  std::uint64_t base_seed) {
  params.validate();
  std::vector<ImageFrame> out(imgs.size());
  const long n = static_cast<long>(imgs.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i)
    out[i] = augment_photometric(imgs[i], params, derive_seed(base_seed, seed_tag::kAugment, static_cast<std::uint64_t>(i)));
  return out;
}

ImageFrame flip_image(const ImageFrame& img) {
  ImageFrame out = img;
  const int H = img.height(), W = img.width();
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) out.at(ch, r, c) = img.at(ch, r, W - 1 - c);
  return out;
}

SceneMask flip_mask(const SceneMask& m) {
  SceneMask out = m;
  const int H = m.height(), W = m.width();
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      out.mask[static_cast<std::size_t>(r) * W + c] = m.mask[static_cast<std::size_t>(r) * W + (W - 1 - c)];
  return out;
}

SceneMask build_scene_mask(std::span<const ImageFrame> frames, double diff_threshold) {
  if (frames.size() < 3) throw ArgumentError("build_scene_mask: need at least 3 frames");
  if (!(diff_threshold > 0.0 && diff_threshold < 1.0)) throw ArgumentError("mask threshold must be in (0,1)");
  const int H = frames[0].height(), W = frames[0].width();
  for (const auto& f : frames)
    if (f.height() != H || f.width() != W) throw ArgumentError("build_scene_mask: frame sizes differ");
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<char> moving(plane, 0);
  std::vector<double> vals(frames.size());
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t f = 0; f < frames.size(); ++f) vals[f] = frames[f].pixels[ch * plane + i];
      std::vector<double> sorted = vals;
      std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
      const double median = sorted[sorted.size() / 2];
      for (double v : vals)
        if (std::abs(v - median) > diff_threshold) moving[i] = 1;
    }
  SceneMask out{ad::Tensor<double>({H, W}), frames[0].scenario_id};
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      bool on = false;
      for (int dr = -1; dr <= 1 && !on; ++dr)
        for (int dc = -1; dc <= 1 && !on; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < H && cc >= 0 && cc < W && moving[static_cast<std::size_t>(rr) * W + cc]) on = true;
        }
      out.mask[static_cast<std::size_t>(r) * W + c] = on ? 1.0 : 0.0;
    }
  return out;
}

SceneMask polygon_mask(int height, int width, std::span<const std::pair<double, double>> v, int scenario_id) {
  require(height > 0 && width > 0, "polygon_mask: size must be positive");
  if (v.size() < 3) throw ArgumentError("polygon_mask: need at least 3 vertices");
  SceneMask out{ad::Tensor<double>({height, width}), scenario_id};
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const double px = c + 0.5, py = r + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        const auto [xi, yi] = v[i];
        const auto [xj, yj] = v[j];
        if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
      }
      out.mask[static_cast<std::size_t>(r) * width + c] = inside ? 1.0 : 0.0;
    }
  return out;
}

ad::Tensor<float> to_tensor(const ImageFrame& img) { return img.pixels.cast<float>(); }

ImageFrame from_tensor(const ad::Tensor<float>& t, int scenario_id) {
  if (t.rank() != 3 || t.dim(0) != 3) throw DataError("image tensor must have shape [3,H,W]");
  ImageFrame img;
  img.pixels = t.cast<double>();
  img.scenario_id = scenario_id;
  for (double v : img.pixels.vec())
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("image tensor values must lie in [0,1]");
  return img;
}

}  // namespace mmbeam::vision
