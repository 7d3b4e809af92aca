#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "uwf/errors.hpp"
#include "uwf/image.hpp"
#include "uwf/keyvalue.hpp"
#include "uwf/params.hpp"

namespace uwf {

enum class KernelKind { gaussian, motion };

struct BlurSpec {
  KernelKind kind = KernelKind::gaussian;
  double sigma_min = 0.5, sigma_max = 4.0;
  int ksize_min = 3, ksize_max = 25;
  double motion_min = 3.0, motion_max = 15.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma_min > 0) || sigma_max < sigma_min) throw ConfigError("blur: sigma range must satisfy 0 < min <= max");
    if (ksize_min < 1 || ksize_max < ksize_min || ksize_min % 2 == 0 || ksize_max % 2 == 0)
      throw ConfigError("blur: kernel size range must be odd with min <= max");
    if (!(motion_min > 0) || motion_max < motion_min) throw ConfigError("blur: motion length range must satisfy 0 < min <= max");
  }
};

// Square, odd-sized, nonnegative, unit-sum kernel.
struct BlurKernel {
  int size = 1;
  std::vector<double> weights{1.0};

  double at(int y, int x) const { return weights[static_cast<std::size_t>(y) * size + x]; }
  double& at(int y, int x) { return weights[static_cast<std::size_t>(y) * size + x]; }
  int radius() const { return size / 2; }

  void normalize() {
    double s = 0;
    for (double v : weights) s += v;
    if (!(s > 0)) throw NumericError("blur kernel has zero mass");
    for (double& v : weights) v /= s;
  }
};

inline int clip_odd(int n, int lo, int hi) {
  if (n % 2 == 0) ++n;
  return std::clamp(n, lo, hi);
}

inline BlurKernel gaussian_kernel(double sigma, int size) {
  BlurKernel k;
  k.size = size;
  k.weights.assign(static_cast<std::size_t>(size) * size, 0.0);
  const int r = size / 2;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) k.at(y + r, x + r) = std::exp(-(x * x + y * y) / (2.0 * sigma * sigma));
  k.normalize();
  return k;
}

// Line segment of the given length through the kernel center, rasterized by
// bilinear splatting of dense samples.
inline BlurKernel motion_kernel(double length, double angle, int size) {
  BlurKernel k;
  k.size = size;
  k.weights.assign(static_cast<std::size_t>(size) * size, 0.0);
  const double c = size / 2;
  const int samples = static_cast<int>(std::ceil(length * 8)) + 1;
  for (int i = 0; i < samples; ++i) {
    const double t = samples == 1 ? 0.0 : -length / 2 + length * i / (samples - 1);
    const double px = c + t * std::cos(angle);
    const double py = c - t * std::sin(angle);
    const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
    const double fx = px - x0, fy = py - y0;
    const auto splat = [&](int y, int x, double w) {
      if (y >= 0 && y < size && x >= 0 && x < size) k.at(y, x) += w;
    };
    splat(y0, x0, (1 - fy) * (1 - fx));
    splat(y0, x0 + 1, (1 - fy) * fx);
    splat(y0 + 1, x0, fy * (1 - fx));
    splat(y0 + 1, x0 + 1, fy * fx);
  }
  k.normalize();
  return k;
}

inline BlurKernel sample_blur(const BlurSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.kind == KernelKind::gaussian) {
    const double sigma = std::uniform_real_distribution<double>(spec.sigma_min, spec.sigma_max)(rng);
    const int size = clip_odd(static_cast<int>(std::ceil(6 * sigma + 1)), spec.ksize_min, spec.ksize_max);
    return gaussian_kernel(sigma, size);
  }
  const double length = std::uniform_real_distribution<double>(spec.motion_min, spec.motion_max)(rng);
  const double angle = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
  const int size = clip_odd(static_cast<int>(std::ceil(length)) + 2, spec.ksize_min, spec.ksize_max);
  return motion_kernel(length, angle, size);
}

// Per-channel 2D convolution with whole-sample reflection at the borders.
template <typename T>
ImageTensor<T> degrade(const ImageTensor<T>& img, const BlurKernel& kernel) {
  double mass = 0;
  for (double v : kernel.weights) {
    if (v < 0) throw ConfigError("degrade: kernel has negative weights");
    mass += v;
  }
  if (std::abs(mass - 1.0) > 1e-6) throw ConfigError("degrade: kernel is not normalized");
  if (kernel.size > img.height || kernel.size > img.width) throw ConfigError("degrade: kernel larger than image");

  const int r = kernel.radius();
  ImageTensor<T> out(img.height, img.width, img.channels, img.range);
  std::vector<double> acc(img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int i = 0; i < kernel.size; ++i) {
        const int sy = mirror_index(y - (i - r), img.height);
        for (int j = 0; j < kernel.size; ++j) {
          const double w = kernel.at(i, j);
          if (w == 0) continue;
          const int sx = mirror_index(x - (j - r), img.width);
          for (int c = 0; c < img.channels; ++c) acc[c] += w * img.at(sy, sx, c);
        }
      }
      for (int c = 0; c < img.channels; ++c) {
        T v = static_cast<T>(acc[c]);
        if (img.range == RangeTag::unit) v = std::clamp(v, T(0), T(1));
        out.at(y, x, c) = v;
      }
    }
  return out;
}

}  // namespace uwf
