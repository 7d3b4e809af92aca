#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "uwf/image.hpp"

namespace uwf {

// No-reference proxy metrics computed on gray = channel mean.
struct QualityRecord {
  std::string path;
  double sharpness = 0;         // Tenengrad: mean Sobel gradient energy
  double illum_uniformity = 0;  // std of 16x16 block means
  double entropy = 0;           // bits, 256 bins
};

template <typename T>
std::vector<double> gray_of(const ImageTensor<T>& img) {
  std::vector<double> g(static_cast<std::size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double s = 0;
      for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
      g[static_cast<std::size_t>(y) * img.width + x] = s / img.channels;
    }
  return g;
}

// Mean of gx^2 + gy^2 over pixels whose 3x3 Sobel window lies inside the image.
template <typename T>
double tenengrad(const ImageTensor<T>& img) {
  const auto g = gray_of(img);
  const int h = img.height, w = img.width;
  if (h < 3 || w < 3) return 0.0;
  auto at = [&](int y, int x) { return g[static_cast<std::size_t>(y) * w + x]; };
  double acc = 0;
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      acc += gx * gx + gy * gy;
    }
  return acc / (static_cast<double>(h - 2) * (w - 2));
}

// Block means over complete block x block tiles (the whole image if smaller).
template <typename T>
std::vector<double> block_means(const ImageTensor<T>& img, int block = 16) {
  const auto g = gray_of(img);
  const int bh = std::max(1, img.height / block), bw = std::max(1, img.width / block);
  const int sh = img.height >= block ? block : img.height;
  const int sw = img.width >= block ? block : img.width;
  std::vector<double> means;
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      double s = 0;
      for (int y = by * sh; y < (by + 1) * sh; ++y)
        for (int x = bx * sw; x < (bx + 1) * sw; ++x) s += g[static_cast<std::size_t>(y) * img.width + x];
      means.push_back(s / (sh * sw));
    }
  return means;
}

inline double population_std(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double m = 0;
  for (double v : xs) m += v;
  m /= xs.size();
  double var = 0;
  for (double v : xs) var += (v - m) * (v - m);
  return std::sqrt(var / xs.size());
}

template <typename T>
double illumination_uniformity(const ImageTensor<T>& img, int block = 16) {
  return population_std(block_means(img, block));
}

template <typename T>
double gray_entropy(const ImageTensor<T>& img) {
  const auto g = gray_of(img);
  std::array<double, 256> hist{};
  for (double v : g) {
    const int bin = std::clamp(static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5)), 0, 255);
    hist[bin] += 1;
  }
  double h = 0;
  for (double c : hist)
    if (c > 0) {
      const double p = c / g.size();
      h -= p * std::log2(p);
    }
  return std::max(0.0, h);
}

template <typename T>
QualityRecord assess(const ImageTensor<T>& img, std::string path = {}) {
  return {std::move(path), tenengrad(img), illumination_uniformity(img), gray_entropy(img)};
}

template <typename T>
double mean_gray(const ImageTensor<T>& img) {
  const auto g = gray_of(img);
  double s = 0;
  for (double v : g) s += v;
  return s / g.size();
}

}  // namespace uwf
