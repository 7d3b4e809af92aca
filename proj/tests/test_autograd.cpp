#include <gtest/gtest.h>

#include "support/gradcheck.hpp"
#include "uwf/ops.hpp"
#include "uwf/params.hpp"

using namespace uwf;
using uwf::testing::gradcheck;
using uwf::testing::random_tensor;
using V = ag::Var<double>;
using Vs = std::vector<V>;

namespace {

// Projects an arbitrary tensor output onto a fixed random direction.
V project(const V& y, std::uint64_t seed) { return ag::sum_all(ag::mul(y, ag::constant(random_tensor(y.shape(), seed)))); }

V var(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) { return V(random_tensor(s, seed, lo, hi)); }

constexpr double kTol = 1e-6;

}  // namespace

TEST(Grad, Elementwise) {
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::add(v[0], v[1]), 1); }, {var({2, 3, 4}, 1), var({2, 3, 4}, 2)}, 20, 1).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::sub(v[0], v[1]), 1); }, {var({2, 3, 4}, 3), var({2, 3, 4}, 4)}, 20, 2).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::mul(v[0], v[1]), 1); }, {var({2, 3, 4}, 5), var({2, 3, 4}, 6)}, 20, 3).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::divide(v[0], v[1]), 1); }, {var({2, 3, 4}, 7), var({2, 3, 4}, 8, 0.5, 2)}, 20, 4).worst_rel, 1e-5);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::scale(v[0], 2.5), 1); }, {var({2, 3, 4}, 9)}, 20, 5).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::relu(v[0]), 1); }, {var({2, 3, 4}, 10)}, 20, 6).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::sigmoid(v[0]), 1); }, {var({2, 3, 4}, 11, -4, 4)}, 20, 7).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::clamp(v[0], -0.5, 0.5), 1); }, {var({2, 3, 4}, 12)}, 20, 8).worst_rel, kTol);
}

TEST(Grad, ChannelPlumbing) {
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::concat_channels(v), 2); },
                      {var({2, 3, 4}, 1), var({1, 3, 4}, 2), var({3, 3, 4}, 3)}, 10, 1)
                .worst_rel,
            kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::slice_channels(v[0], 1, 2), 2); }, {var({4, 3, 4}, 4)}, 20, 2).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::global_avg_pool(v[0]), 2); }, {var({3, 5, 4}, 5)}, 20, 3).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::global_max_pool(v[0]), 2); }, {var({3, 5, 4}, 6)}, 20, 4).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::scale_channels(v[0], v[1]), 2); },
                      {var({3, 5, 4}, 7), var({3, 1, 1}, 8)}, 20, 5)
                .worst_rel,
            kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return ag::mean_all(ag::mul(v[0], v[0])); }, {var({3, 5, 4}, 9)}, 20, 6).worst_rel, kTol);
}

TEST(Grad, Resampling) {
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::avg_pool(v[0], 2), 3); }, {var({2, 6, 8}, 1)}, 20, 1).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::bilinear_resize(v[0], 9, 14), 3); }, {var({2, 4, 7}, 2)}, 20, 2).worst_rel, kTol);
  EXPECT_LE(gradcheck([](const Vs& v) { return project(ag::bilinear_resize(v[0], 3, 2), 3); }, {var({2, 6, 5}, 3)}, 20, 3).worst_rel, kTol);
}

class ConvGrad : public ::testing::TestWithParam<ag::ConvGeometry> {};

TEST_P(ConvGrad, AllInputs) {
  const auto geo = GetParam();
  const int cin = 3, cout = 4;
  auto f = [geo](const Vs& v) { return project(ag::conv2d(v[0], v[1], v[2], geo), 4); };
  const auto r = gradcheck(f, {var({cin, 7, 6}, 1), var({cout, cin, geo.kernel * geo.kernel}, 2), var({cout, 1, 1}, 3)}, 20, 9);
  EXPECT_EQ(r.checked, 60);
  EXPECT_LE(r.worst_rel, kTol);
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvGrad,
                         ::testing::Values(ag::ConvGeometry{1, 1, 0}, ag::ConvGeometry{3, 1, 1}, ag::ConvGeometry{3, 2, 1},
                                           ag::ConvGeometry{5, 1, 2}));

// Direct 7-loop convolution with zero padding.
TEST(Conv, MatchesDirectSum) {
  for (auto geo : {ag::ConvGeometry{1, 1, 0}, ag::ConvGeometry{3, 1, 1}, ag::ConvGeometry{3, 2, 1}, ag::ConvGeometry{5, 1, 2}}) {
    const auto x = random_tensor({3, 9, 8}, 1), w = random_tensor({5, 3, geo.kernel * geo.kernel}, 2);
    const auto b = random_tensor({5, 1, 1}, 3);
    const auto y = ag::conv2d(ag::constant(x), ag::constant(w), ag::constant(b), geo).value();
    const int ho = (9 + 2 * geo.pad - geo.kernel) / geo.stride + 1, wo = (8 + 2 * geo.pad - geo.kernel) / geo.stride + 1;
    ASSERT_EQ(y.shape(), (Shape{5, ho, wo}));
    for (int o = 0; o < 5; ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double s = b.at(o, 0, 0);
          for (int c = 0; c < 3; ++c)
            for (int ky = 0; ky < geo.kernel; ++ky)
              for (int kx = 0; kx < geo.kernel; ++kx) {
                const int yy = i * geo.stride - geo.pad + ky, xx = j * geo.stride - geo.pad + kx;
                if (yy < 0 || yy >= 9 || xx < 0 || xx >= 8) continue;
                s += w.at(o, c, ky * geo.kernel + kx) * x.at(c, yy, xx);
              }
          ASSERT_NEAR(y.at(o, i, j), s, 1e-12);
        }
  }
}

TEST(Resize, HalvingEqualsAveragePooling) {
  const auto x = random_tensor({2, 8, 10}, 4);
  const auto a = ag::bilinear_resize(x, 4, 5);
  const auto b = ag::avg_pool(ag::constant(x), 2).value();
  EXPECT_LE(max_abs_diff(a, b), 1e-14);
}

TEST(Resize, SameSizeIsIdentity) {
  const auto x = random_tensor({2, 5, 3}, 4);
  EXPECT_EQ(ag::bilinear_resize(x, 5, 3).vec(), x.vec());
}

TEST(Backward, SharedSubgraphAccumulates) {
  V x(Tensor<double>(1, 1, 1, 3.0), true);
  const V y = ag::mul(x, x);
  const V z = ag::add(y, ag::scale(y, 2.0));  // 3x^2
  ag::backward(z);
  EXPECT_DOUBLE_EQ(x.grad()[0], 18.0);
}

TEST(Backward, NoGradModeBuildsNoGraph) {
  V x(Tensor<double>(1, 2, 2, 1.0), true);
  ag::NoGradGuard ng;
  const V y = ag::relu(x);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.raw()->parents.empty());
}

TEST(Backward, FrozenParametersReceiveNothing) {
  ParameterSet<double> ps;
  Rng rng(1);
  auto conv = Conv2d<double>::create(ps, "c", 2, 2, 3, rng);
  ps.set_trainable(false);
  V x(random_tensor({2, 4, 4}, 1), true);
  ag::backward(ag::sum_all(conv(x)));
  EXPECT_TRUE(conv.weight.grad().empty());
  EXPECT_FALSE(x.grad().empty());
}

TEST(Backward, RequiresScalarRoot) {
  V x(Tensor<double>(1, 2, 2), true);
  EXPECT_THROW(ag::backward(ag::relu(x)), ShapeError);
}

TEST(Params, DuplicateNamesRejected) {
  ParameterSet<float> ps;
  ps.add("a", Tensor<float>(1, 1, 1));
  EXPECT_THROW(ps.add("a", Tensor<float>(1, 1, 1)), ConfigError);
  EXPECT_THROW(ps.add("b c", Tensor<float>(1, 1, 1)), ConfigError);
}
