#include <gtest/gtest.h>

#include <random>

#include <opencv2/imgcodecs.hpp>

#include "support/synthetic.hpp"
#include "support/tempdir.hpp"
#include "uwf/image.hpp"
#include "uwf/image_io.hpp"

using namespace uwf;
using uwf::testing::TempDir;

TEST(Load, EightBitExtremes) {
  TempDir dir;
  cv::Mat m(2, 2, CV_8UC3, cv::Scalar(0, 0, 0));
  m.at<cv::Vec3b>(0, 0) = {255, 255, 255};
  cv::imwrite((dir / "a.png").string(), m);
  const auto img = load_image(dir / "a.png");
  ASSERT_EQ(img.channels, 3);
  EXPECT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_EQ(img.at(1, 1, 2), 0.0f);
}

TEST(Load, SixteenBitScaling) {
  TempDir dir;
  cv::Mat m(1, 1, CV_16UC1, cv::Scalar(32768));
  cv::imwrite((dir / "a.png").string(), m);
  const auto img = load_image(dir / "a.png");
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(0, 0, c), 32768.0 / 65535.0, 1e-7);
  EXPECT_NEAR(img.at(0, 0, 0), 0.50000763, 1e-7);
}

TEST(Load, ChannelOrderIsRgb) {
  TempDir dir;
  cv::Mat m(1, 1, CV_8UC3, cv::Scalar(10, 20, 30));  // BGR
  cv::imwrite((dir / "a.png").string(), m);
  const auto img = load_image(dir / "a.png");
  EXPECT_NEAR(img.at(0, 0, 0), 30 / 255.0, 1e-7);
  EXPECT_NEAR(img.at(0, 0, 2), 10 / 255.0, 1e-7);
}

TEST(Load, GrayIsReplicated) {
  TempDir dir;
  cv::Mat m(3, 4, CV_8UC1, cv::Scalar(51));
  cv::imwrite((dir / "g.png").string(), m);
  const auto img = load_image(dir / "g.png");
  EXPECT_EQ(img.height, 3);
  EXPECT_EQ(img.width, 4);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(2, 3, c), 0.2, 1e-7);
}

TEST(Load, MissingFileNamesPath) {
  try {
    load_image("/nonexistent/dir/x.png");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/x.png"), std::string::npos);
  }
}

TEST(Load, FloatTiffIsRejected) {
  TempDir dir;
  cv::Mat m(2, 2, CV_32FC1, cv::Scalar(0.5));
  ASSERT_TRUE(cv::imwrite((dir / "f.tiff").string(), m));
  EXPECT_THROW(load_image(dir / "f.tiff"), FormatError);
}

TEST(Save, QuantizationRoundsHalfUp) {
  TempDir dir;
  ImageTensor<float> img(1, 3, 3);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 0.5f;
    img.at(0, 1, c) = 1.0f;
    img.at(0, 2, c) = 0.0f;
  }
  save_image(img, dir / "q.png");
  const cv::Mat m = cv::imread((dir / "q.png").string(), cv::IMREAD_UNCHANGED);
  EXPECT_EQ(m.at<cv::Vec3b>(0, 0)[0], 128);
  EXPECT_EQ(m.at<cv::Vec3b>(0, 1)[1], 255);
  EXPECT_EQ(m.at<cv::Vec3b>(0, 2)[2], 0);
}

TEST(Save, RejectsOutOfRangeAndJpeg) {
  TempDir dir;
  ImageTensor<float> img(2, 2, 3);
  EXPECT_THROW(save_image(img, dir / "x.jpg"), FormatError);
  img.at(0, 0, 0) = 1.5f;
  EXPECT_THROW(save_image(img, dir / "x.png"), ContractViolation);
  ImageTensor<float> sig(2, 2, 3, RangeTag::signed_values);
  EXPECT_THROW(save_image(sig, dir / "x.png"), ContractViolation);
}

class RoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(RoundTrip, ErrorWithinHalfStep) {
  const int depth = GetParam();
  TempDir dir;
  const auto src = uwf::testing::random_unit_image(17, 23, 5);
  save_image(src, dir / "a.png", depth);
  const auto once = load_image(dir / "a.png");
  save_image(once, dir / "b.png", depth);
  const auto twice = load_image(dir / "b.png");
  const double tol = 1.0 / (2.0 * ((1 << depth) - 1)) + 1e-7;
  for (std::size_t i = 0; i < src.data.size(); ++i) {
    ASSERT_LE(std::abs(once.data[i] - src.data[i]), tol);
    ASSERT_LE(std::abs(twice.data[i] - once.data[i]), tol);
  }
}

INSTANTIATE_TEST_SUITE_P(Depths, RoundTrip, ::testing::Values(8, 16));

TEST(Pad, Examples) {
  auto [a, ra] = pad_to_multiple(ImageTensor<float>(250, 250, 3), 8);
  EXPECT_EQ(a.height, 256);
  EXPECT_EQ(a.width, 256);
  EXPECT_EQ(ra, (PaddingRecord{6, 6}));

  auto [b, rb] = pad_to_multiple(ImageTensor<float>(256, 256, 3), 8);
  EXPECT_EQ(b.height, 256);
  EXPECT_EQ(rb, (PaddingRecord{0, 0}));

  ImageTensor<float> one(1, 1, 3, RangeTag::unit, 0.25f);
  auto [c, rc] = pad_to_multiple(one, 4);
  EXPECT_EQ(c.height, 4);
  EXPECT_EQ(c.width, 4);
  EXPECT_EQ(rc, (PaddingRecord{3, 3}));
  for (float v : c.data) EXPECT_EQ(v, 0.25f);

  EXPECT_THROW(pad_to_multiple(one, 0), ConfigError);
}

TEST(Pad, ReflectsWithoutRepeatingTheEdge) {
  ImageTensor<float> img(1, 3, 1);
  img.at(0, 0, 0) = 1;
  img.at(0, 1, 0) = 2;
  img.at(0, 2, 0) = 3;
  auto [p, rec] = pad_to_multiple(img, 5);
  EXPECT_EQ(p.at(0, 3, 0), 2);
  EXPECT_EQ(p.at(0, 4, 0), 1);
  EXPECT_EQ(p.at(4, 4, 0), 1);
}

TEST(Pad, CropBackIsExactForRandomShapes) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 64), mult(1, 16);
  for (int t = 0; t < 200; ++t) {
    const int h = dim(rng), w = dim(rng), m = mult(rng);
    const auto img = uwf::testing::random_unit_image(h, w, rng());
    const auto [p, rec] = pad_to_multiple(img, m);
    ASSERT_EQ(p.height % m, 0);
    ASSERT_EQ(p.width % m, 0);
    ASSERT_LT(rec.bottom, m);
    const auto back = crop_back(p, rec);
    ASSERT_TRUE(back.same_shape(img));
    ASSERT_EQ(back.data, img.data);
  }
}

TEST(MirrorIndex, FoldsLargeOffsets) {
  EXPECT_EQ(mirror_index(-1, 4), 1);
  EXPECT_EQ(mirror_index(4, 4), 2);
  EXPECT_EQ(mirror_index(7, 4), 1);
  EXPECT_EQ(mirror_index(-7, 4), 1);
  EXPECT_EQ(mirror_index(5, 1), 0);
}

TEST(Layout, PlanarInterleavedRoundTrip) {
  const auto img = uwf::testing::random_unit_image(5, 7, 3);
  const auto t = to_planar(img);
  EXPECT_EQ(t.shape(), (Shape{3, 5, 7}));
  EXPECT_EQ(t.at(2, 4, 6), img.at(4, 6, 2));
  EXPECT_EQ(to_interleaved(t, RangeTag::unit).data, img.data);
}

TEST(Range, UnitTagIsEnforced) {
  ImageTensor<float> img(2, 2, 3);
  img.at(1, 1, 1) = -0.1f;
  EXPECT_THROW(img.check_range("test"), ContractViolation);
  const auto c = clamp_unit(img);
  EXPECT_NO_THROW(c.check_range("test"));
  EXPECT_EQ(c.at(1, 1, 1), 0.0f);
}

TEST(Tensor, RejectsMismatchedShapes) {
  Tensor<float> a(1, 2, 2), b(1, 2, 3);
  EXPECT_THROW(a += b, ShapeError);
}
