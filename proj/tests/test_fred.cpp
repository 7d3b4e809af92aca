#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"
#include "uwf/fred.hpp"

using namespace uwf;
using uwf::testing::random_tensor;

namespace {

FredConfig small_config() {
  FredConfig c;
  c.base_channels = 8;
  return c;
}

// Direct 2^k x 2^k block means, the half-pixel bilinear downsample.
Tensor<double> block_mean(const Tensor<double>& x, int f) {
  Tensor<double> out(x.channels(), x.height() / f, x.width() / f);
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < x.height(); ++y)
      for (int xx = 0; xx < x.width(); ++xx) out.at(c, y / f, xx / f) += x.at(c, y, xx) / (f * f);
  return out;
}

template <typename T>
void randomize_heads(Fred<T>& f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (auto& [name, v] : f.params().items())
    if (name.rfind("ffm", 0) == 0 && name.find(".out.") != std::string::npos)
      for (auto& x : v.mutable_value().vec()) x = static_cast<T>(nd(rng));
}

}  // namespace

TEST(FredConfig, Defaults) {
  const FredConfig c;
  EXPECT_EQ(c.levels, 3);
  EXPECT_EQ(c.base_channels, 32);
  EXPECT_EQ(c.channel_multipliers, (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(c.size_multiple(), 8);
  EXPECT_NO_THROW(c.validate());
}

TEST(FredConfig, Validation) {
  FredConfig c;
  c.channel_multipliers = {1, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c = FredConfig{};
  c.supervision_scales = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FredConfig{};
  c.mlp_reduction = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FredConfig, KeyValueRoundTrip) {
  FredConfig c = small_config();
  c.use_aci = false;
  c.res_blocks = 2;
  EXPECT_EQ(FredConfig::from_kv(c.to_kv()), c);
  EXPECT_THROW(FredConfig::from_kv({{"bogus", "1"}}), FormatError);
}

TEST(Fred, OutputShapesCoarsestFirst) {
  const Fred<float> f(FredConfig{}, 3);
  const auto out = f.forward(ag::constant(random_tensor({3, 32, 48}, 1, 0, 1).cast<float>()));
  ASSERT_EQ(out.outputs.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    const int d = 1 << (2 - k);
    EXPECT_EQ(out.outputs[k].shape(), (Shape{3, 32 / d, 48 / d}));
  }
  EXPECT_EQ(out.low.shape(), (Shape{3, 32, 48}));
}

TEST(Fred, ZeroHeadsReturnDownsampledInput) {
  Fred<double> f(small_config(), 4);
  randomize_heads(f, 1);
  f.zero_output_heads();
  const auto x = random_tensor({3, 32, 40}, 2, 0, 1);
  const auto out = f.forward(ag::constant(x));
  for (int k = 0; k < 3; ++k) EXPECT_LE(max_abs_diff(out.outputs[k].value(), block_mean(x, 1 << (2 - k))), 1e-12);
}

TEST(Fred, FreshModelIsResidualIdentity) {
  const Fred<float> f(FredConfig{}, 9);
  const auto x = random_tensor({3, 16, 16}, 3, 0, 1).cast<float>();
  EXPECT_EQ(f.forward(ag::constant(x)).outputs.back().value().vec(), x.vec());
}

TEST(Fred, RandomParamsGiveFiniteOutputs) {
  Fred<float> f(FredConfig{}, 5);
  randomize_heads(f, 2);
  const auto out = f.forward(ag::constant(random_tensor({3, 64, 64}, 4, 0, 1).cast<float>()));
  for (const auto& o : out.outputs) EXPECT_TRUE(o.value().all_finite());
  EXPECT_GT(max_abs_diff(out.outputs.back().value(), block_mean(random_tensor({3, 64, 64}, 4, 0, 1), 1).cast<float>()),
            0.0f);
}

TEST(Fred, LowPlusHighIsInput) {
  const Fred<float> f(FredConfig{}, 5);
  const auto x = random_tensor({3, 16, 24}, 7, 0, 1).cast<float>();
  const auto out = f.forward(ag::constant(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out.low[i] + out.high[i], x[i], 1e-6);
}

TEST(Fred, Errors) {
  Fred<float> f(FredConfig{}, 1);
  EXPECT_THROW(f.forward(ag::constant(Tensor<float>(3, 20, 16))), ShapeError);
  EXPECT_THROW(f.forward(ag::constant(Tensor<float>(1, 16, 16))), ShapeError);
  f.params().items()[3].second.mutable_value()[0] = std::nanf("");
  EXPECT_THROW(f.forward(ag::constant(Tensor<float>(3, 16, 16))), NumericError);
}

TEST(Fred, Deterministic) {
  Fred<float> f(FredConfig{}, 6);
  randomize_heads(f, 3);
  const auto x = ag::constant(random_tensor({3, 32, 32}, 8, 0, 1).cast<float>());
  const auto a = f.forward(x), b = f.forward(x);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(a.outputs[k].value().vec(), b.outputs[k].value().vec());
  const Fred<float> g(FredConfig{}, 6);
  EXPECT_EQ(g.params().items()[0].second.value().vec(), f.params().items()[0].second.value().vec());
}

TEST(Fred, WithoutAciKeepsShapes) {
  FredConfig c;
  c.use_aci = false;
  Fred<float> f(c, 1);
  EXPECT_LT(f.params().scalar_count(), Fred<float>(FredConfig{}, 1).params().scalar_count());
  const auto out = f.forward(ag::constant(random_tensor({3, 24, 16}, 1, 0, 1).cast<float>()));
  EXPECT_EQ(out.outputs[0].shape(), (Shape{3, 6, 4}));
  EXPECT_EQ(out.outputs[2].shape(), (Shape{3, 24, 16}));
}

TEST(Fred, EveryParameterGetsAFiniteGradient) {
  Fred<double> f(small_config(), 7);
  randomize_heads(f, 4);
  const auto x = ag::constant(random_tensor({3, 16, 16}, 9, 0, 1));
  const auto out = f.forward(x);
  auto loss = ag::mean_all(out.outputs[0]);
  for (std::size_t k = 1; k < out.outputs.size(); ++k) loss = ag::add(loss, ag::mean_all(out.outputs[k]));
  ag::backward(loss);
  for (const auto& [name, v] : f.params().items()) {
    ASSERT_FALSE(v.grad().empty()) << name;
    ASSERT_TRUE(v.grad().all_finite()) << name;
  }
}

TEST(Fred, GradientSpotCheckDouble) {
  Fred<double> f(small_config(), 8);
  randomize_heads(f, 5);
  const auto x = ag::constant(random_tensor({3, 16, 16}, 10, 0, 1));
  auto& items = f.params().items();
  std::mt19937_64 rng(3);
  std::vector<ag::Var<double>> picked;
  for (int i = 0; i < 10; ++i) picked.push_back(items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)].second);
  auto loss = [&](const std::vector<ag::Var<double>>&) { return ag::mean_all(f.forward(x).outputs.back()); };
  const auto r = uwf::testing::gradcheck(loss, picked, 1, 11, 1e-5);
  EXPECT_EQ(r.checked, 10);
  EXPECT_LE(r.worst_rel, 1e-4);
}

TEST(Fred, FloatGradientsTrackDouble) {
  Fred<float> f(small_config(), 8);
  randomize_heads(f, 5);
  Fred<double> d(small_config(), 8);
  auto& fi = f.params().items();
  auto& di = d.params().items();
  ASSERT_EQ(fi.size(), di.size());
  for (std::size_t k = 0; k < fi.size(); ++k) di[k].second.mutable_value() = fi[k].second.value().cast<double>();
  const auto x = random_tensor({3, 16, 16}, 10, 0, 1);
  ag::backward(ag::mean_all(f.forward(ag::constant(x.cast<float>())).outputs.back()));
  ag::backward(ag::mean_all(d.forward(ag::constant(x)).outputs.back()));
  for (std::size_t k = 0; k < fi.size(); ++k) {
    const auto& gf = fi[k].second.grad();
    const auto& gd = di[k].second.grad();
    ASSERT_EQ(gf.empty(), gd.empty()) << fi[k].first;
    if (gd.empty()) continue;
    double scale = 1e-8;
    for (std::size_t i = 0; i < gd.size(); ++i) scale = std::max(scale, std::abs(gd[i]));
    for (std::size_t i = 0; i < gd.size(); ++i) ASSERT_NEAR(gf[i], gd[i], 1e-3 * scale) << fi[k].first;
  }
}

TEST(Fred, SaveLoadIsBitwise) {
  uwf::testing::TempDir dir;
  Fred<float> f(FredConfig{}, 10);
  randomize_heads(f, 6);
  f.save(dir / "f.ckpt");
  const Fred<float> g = Fred<float>::load(dir / "f.ckpt");
  EXPECT_EQ(g.config(), f.config());
  const auto x = ag::constant(random_tensor({3, 16, 16}, 12, 0, 1).cast<float>());
  EXPECT_EQ(f.forward(x).outputs.back().value().vec(), g.forward(x).outputs.back().value().vec());
}

TEST(Aci, GateStrictlyInsideUnitInterval) {
  ParameterSet<double> ps;
  Rng rng(1);
  const auto unit = AciUnit<double>::create(ps, "aci", {{8, 16, 32}, 8, 8}, rng);
  std::vector<ag::Var<double>> src{ag::constant(random_tensor({8, 16, 16}, 1)), ag::constant(random_tensor({16, 8, 8}, 2)),
                                   ag::constant(random_tensor({32, 4, 4}, 3))};
  for (auto [h, w] : {std::pair{16, 16}, std::pair{8, 8}, std::pair{4, 4}}) {
    AciTrace<double> tr;
    const auto y = aci_fuse(std::span<const ag::Var<double>>(src), h, w, unit, &tr);
    EXPECT_EQ(y.shape(), (Shape{8, h, w}));
    EXPECT_EQ(tr.fused.shape(), (Shape{56, h, w}));
    for (double g : tr.gate.vec()) {
      EXPECT_GT(g, 0.0);
      EXPECT_LT(g, 1.0);
    }
  }
}

TEST(Aci, ZeroMlpGivesHalfGate) {
  ParameterSet<double> ps;
  Rng rng(2);
  auto unit = AciUnit<double>::create(ps, "aci", {{8}, 8, 8}, rng);
  for (auto& [name, v] : ps.items())
    if (name.find(".attn.") != std::string::npos) v.mutable_value().fill(0);
  auto& w = unit.global_proj.weight.mutable_value();
  w.fill(0);
  for (int c = 0; c < 8; ++c) w.at(c, c, 0) = 1;
  unit.global_proj.bias.mutable_value().fill(0);

  const auto x = random_tensor({8, 6, 6}, 4);
  std::vector<ag::Var<double>> src{ag::constant(x)};
  AciTrace<double> tr;
  aci_fuse(std::span<const ag::Var<double>>(src), 6, 6, unit, &tr);
  for (double g : tr.gate.vec()) EXPECT_DOUBLE_EQ(g, 0.5);
  EXPECT_EQ(tr.fused.vec(), x.vec());  // single source at target size: no rescaling
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(tr.global_branch[i], 0.5 * x[i]);
}

TEST(Aci, ChannelMismatchIsConfigError) {
  ParameterSet<double> ps;
  Rng rng(3);
  const auto unit = AciUnit<double>::create(ps, "aci", {{8, 8}, 8, 8}, rng);
  std::vector<ag::Var<double>> src{ag::constant(Tensor<double>(8, 4, 4)), ag::constant(Tensor<double>(16, 2, 2))};
  EXPECT_THROW(aci_fuse(std::span<const ag::Var<double>>(src), 4, 4, unit), ConfigError);
  std::vector<ag::Var<double>> one{ag::constant(Tensor<double>(8, 4, 4))};
  EXPECT_THROW(aci_fuse(std::span<const ag::Var<double>>(one), 4, 4, unit), ConfigError);
  EXPECT_THROW(AciUnit<double>::create(ps, "bad", {{}, 8, 8}, rng), ConfigError);
}

TEST(Aci, RescaleUsesPoolingDownAndBilinearUp) {
  const auto x = random_tensor({2, 8, 8}, 5);
  EXPECT_LE(max_abs_diff(rescale_to(ag::constant(x), 2, 2).value(), block_mean(x, 4)), 1e-14);
  EXPECT_EQ(rescale_to(ag::constant(x), 16, 16).value().vec(), ag::bilinear_resize(x, 16, 16).vec());
}
