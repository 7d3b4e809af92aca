#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "uwf/errors.hpp"
#include "uwf/image.hpp"

namespace uwf {

// Reads an 8- or 16-bit PNG/JPEG/TIFF into a 3-channel unit-range image.
// OpenCV stores color as BGR; channels come out as RGB.
inline ImageTensor<float> load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("cannot read image: " + path.string());
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw IoError("cannot read image: " + path.string());

  double maxval = 0;
  switch (m.depth()) {
    case CV_8U: maxval = 255.0; break;
    case CV_16U: maxval = 65535.0; break;
    default: throw FormatError("unsupported bit depth in " + path.string());
  }
  const int ch = m.channels();
  if (ch != 1 && ch != 3 && ch != 4) throw FormatError("unsupported channel count in " + path.string());

  ImageTensor<float> img(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src = ch == 1 ? 0 : 2 - c;
        double v = m.depth() == CV_8U ? m.ptr<std::uint8_t>(y)[x * ch + src]
                                      : m.ptr<std::uint16_t>(y)[x * ch + src];
        img.at(y, x, c) = static_cast<float>(v / maxval);
      }
    }
  }
  return img;
}

inline int quantize(double v, int maxval) {
  // round half away from zero; v is non-negative here
  return static_cast<int>(std::floor(v * maxval + 0.5));
}

template <typename T>
void save_image(const ImageTensor<T>& img, const std::filesystem::path& path, int bit_depth = 8) {
  if (img.range != RangeTag::unit) throw ContractViolation("save_image: image must be unit-range");
  img.check_range("save_image");
  if (bit_depth != 8 && bit_depth != 16) throw FormatError("save_image: bit depth must be 8 or 16");
  if (img.channels != 1 && img.channels != 3) throw ShapeError("save_image: expected 1 or 3 channels");
  const auto ext = path.extension().string();
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".JPG" || ext == ".JPEG")
    throw FormatError("save_image: JPEG output is not supported");

  const int maxval = bit_depth == 8 ? 255 : 65535;
  const int type = (bit_depth == 8 ? CV_8UC(img.channels) : CV_16UC(img.channels));
  cv::Mat m(img.height, img.width, type);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const int dst = img.channels == 1 ? 0 : 2 - c;
        const int q = quantize(static_cast<double>(img.at(y, x, c)), maxval);
        if (bit_depth == 8)
          m.ptr<std::uint8_t>(y)[x * img.channels + dst] = static_cast<std::uint8_t>(q);
        else
          m.ptr<std::uint16_t>(y)[x * img.channels + dst] = static_cast<std::uint16_t>(q);
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw IoError("cannot write image: " + path.string());
}

inline bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".tif" || ext == ".tiff";
}

}  // namespace uwf
