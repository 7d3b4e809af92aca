#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "uwf/errors.hpp"
#include "uwf/tensor.hpp"

namespace uwf {

enum class RangeTag { unit, signed_values };

// Interleaved (height, width, channels) image. Every module boundary speaks
// this layout; networks convert to planar Tensor internally.
template <typename T>
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  RangeTag range = RangeTag::unit;
  std::vector<T> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, RangeTag tag = RangeTag::unit, T fill = T(0))
      : height(h), width(w), channels(c), range(tag), data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h < 1 || w < 1 || c < 1) throw ShapeError("image dimensions must be positive");
  }

  T& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  const T& at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  // Throws when a unit-tagged image has left [0, 1].
  void check_range(const char* where) const {
    if (range != RangeTag::unit) return;
    for (T v : data)
      if (!(v >= T(0) && v <= T(1)))
        throw ContractViolation(std::string(where) + ": unit-range image has value outside [0,1]");
  }
};

template <typename T>
Tensor<T> to_planar(const ImageTensor<T>& img) {
  Tensor<T> t(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) t.at(c, y, x) = img.at(y, x, c);
  return t;
}

template <typename T>
ImageTensor<T> to_interleaved(const Tensor<T>& t, RangeTag tag) {
  ImageTensor<T> img(t.height(), t.width(), t.channels(), tag);
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x)
      for (int c = 0; c < t.channels(); ++c) img.at(y, x, c) = t.at(c, y, x);
  return img;
}

template <typename T>
ImageTensor<T> clamp_unit(ImageTensor<T> img) {
  for (T& v : img.data) v = std::clamp(v, T(0), T(1));
  img.range = RangeTag::unit;
  return img;
}

// Whole-sample symmetric reflection ("reflect 101") folded for arbitrary
// offsets, so padding wider than the image still resolves.
inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

struct PaddingRecord {
  int bottom = 0;
  int right = 0;
  bool operator==(const PaddingRecord&) const = default;
};

template <typename T>
std::pair<ImageTensor<T>, PaddingRecord> pad_to_multiple(const ImageTensor<T>& img, int m) {
  if (m < 1) throw ConfigError("pad_to_multiple: multiple must be >= 1");
  const int h = (img.height + m - 1) / m * m;
  const int w = (img.width + m - 1) / m * m;
  PaddingRecord rec{h - img.height, w - img.width};
  if (rec.bottom == 0 && rec.right == 0) return {img, rec};
  ImageTensor<T> out(h, w, img.channels, img.range);
  for (int y = 0; y < h; ++y) {
    const int sy = mirror_index(y, img.height);
    for (int x = 0; x < w; ++x) {
      const int sx = mirror_index(x, img.width);
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return {out, rec};
}

template <typename T>
ImageTensor<T> crop(const ImageTensor<T>& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > img.height || x0 + w > img.width)
    throw ShapeError("crop window outside image");
  ImageTensor<T> out(h, w, img.channels, img.range);
  for (int y = 0; y < h; ++y)
    std::copy_n(&img.at(y0 + y, x0, 0), static_cast<std::size_t>(w) * img.channels, &out.at(y, 0, 0));
  return out;
}

template <typename T>
ImageTensor<T> crop_back(const ImageTensor<T>& img, const PaddingRecord& rec) {
  return crop(img, 0, 0, img.height - rec.bottom, img.width - rec.right);
}

template <typename T>
ImageTensor<T> replicate_gray(const ImageTensor<T>& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1) throw ShapeError("expected 1 or 3 channels");
  ImageTensor<T> out(img.height, img.width, 3, img.range);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    for (int c = 0; c < 3; ++c) out.data[i * 3 + c] = img.data[i];
  return out;
}

template <typename U, typename T>
ImageTensor<U> image_cast(const ImageTensor<T>& img) {
  ImageTensor<U> out(img.height, img.width, img.channels, img.range);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<U>(img.data[i]);
  return out;
}

}  // namespace uwf
