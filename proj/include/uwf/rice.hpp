#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uwf/autograd.hpp"
#include "uwf/errors.hpp"
#include "uwf/frequency.hpp"
#include "uwf/image.hpp"
#include "uwf/keyvalue.hpp"
#include "uwf/ops.hpp"
#include "uwf/params.hpp"

namespace uwf {

struct CpuConfig {
  int channels = 32;
  bool share_band_params = true;
};

struct RiceConfig {
  int channels = 32;
  int cpu_blocks = 3;
  double epsilon_r = 0.05;
  bool share_band_params = true;
  bool use_cpu = true;

  void validate() const {
    if (channels < 1) throw ConfigError("rice: channels must be >= 1");
    if (cpu_blocks < 0) throw ConfigError("rice: cpu_blocks must be >= 0");
    if (!(epsilon_r > 0 && epsilon_r < 1)) throw ConfigError("rice: epsilon_r must lie in (0, 1)");
  }

  KeyValues to_kv() const {
    return {{"channels", std::to_string(channels)},
            {"cpu_blocks", std::to_string(cpu_blocks)},
            {"epsilon_r", format_double(epsilon_r)},
            {"share_band_params", share_band_params ? "true" : "false"},
            {"use_cpu", use_cpu ? "true" : "false"}};
  }

  static RiceConfig from_kv(const KeyValues& kv) {
    RiceConfig c;
    for (const auto& [k, v] : kv) {
      if (k == "channels") c.channels = static_cast<int>(parse_int(k, v));
      else if (k == "cpu_blocks") c.cpu_blocks = static_cast<int>(parse_int(k, v));
      else if (k == "epsilon_r") c.epsilon_r = parse_double(k, v);
      else if (k == "share_band_params") c.share_band_params = parse_bool(k, v);
      else if (k == "use_cpu") c.use_cpu = parse_bool(k, v);
      else throw FormatError("unknown RICE config key: " + k);
    }
    c.validate();
    return c;
  }

  bool operator==(const RiceConfig&) const = default;
};

// Two parallel branches applied to one wavelet sub-band: 5x5 -> ReLU -> 5x5
// plus 1x1 -> ReLU -> 1x1, summed.
template <typename T>
struct BandBranches {
  Conv2d<T> wide0, wide1;
  Conv2d<T> point0, point1;

  static BandBranches create(ParameterSet<T>& ps, const std::string& name, int ch, Rng& rng) {
    return {Conv2d<T>::create(ps, name + ".h5a", ch, ch, 5, rng), Conv2d<T>::create(ps, name + ".h5b", ch, ch, 5, rng),
            Conv2d<T>::create(ps, name + ".h1a", ch, ch, 1, rng), Conv2d<T>::create(ps, name + ".h1b", ch, ch, 1, rng)};
  }

  ag::Var<T> operator()(const ag::Var<T>& band) const {
    return ag::add(wide1(ag::relu(wide0(band))), point1(ag::relu(point0(band))));
  }
};

// Color preservation unit: F + W^-1({branches(b) for b in W(F)}).
template <typename T>
struct CpuBlock {
  CpuConfig cfg;
  std::vector<BandBranches<T>> branches;  // 1 when shared, else one per band (LL, LH, HL, HH)

  static CpuBlock create(ParameterSet<T>& ps, const std::string& name, const CpuConfig& cfg, Rng& rng) {
    if (cfg.channels < 1) throw ConfigError("cpu: channels must be >= 1");
    CpuBlock b;
    b.cfg = cfg;
    if (cfg.share_band_params) {
      b.branches.push_back(BandBranches<T>::create(ps, name, cfg.channels, rng));
    } else {
      static constexpr const char* kBand[] = {"ll", "lh", "hl", "hh"};
      for (const char* band : kBand) b.branches.push_back(BandBranches<T>::create(ps, name + "." + band, cfg.channels, rng));
    }
    return b;
  }

  ag::Var<T> operator()(const ag::Var<T>& f) const {
    const Shape s = f.shape();
    if (s.c != cfg.channels) throw ShapeError("cpu: expected " + std::to_string(cfg.channels) + " channels, got " + s.str());
    const ag::Var<T> stacked = dwt_forward(f);
    std::vector<ag::Var<T>> processed;
    for (int b = 0; b < 4; ++b) {
      const auto& br = branches[branches.size() == 1 ? 0 : b];
      processed.push_back(br(ag::slice_channels(stacked, b * s.c, s.c)));
    }
    return ag::add(dwt_inverse(ag::concat_channels(processed)), f);
  }
};

template <typename T>
ag::Var<T> cpu_block(const ag::Var<T>& f, const CpuBlock<T>& block) {
  return block(f);
}

// Stand-in for a CPU when the wavelet path is ablated: F + conv(relu(conv(F))).
template <typename T>
struct PlainBlock {
  Conv2d<T> conv0, conv1;

  static PlainBlock create(ParameterSet<T>& ps, const std::string& name, int ch, Rng& rng) {
    return {Conv2d<T>::create(ps, name + ".conv0", ch, ch, 3, rng), Conv2d<T>::create(ps, name + ".conv1", ch, ch, 3, rng)};
  }
  ag::Var<T> operator()(const ag::Var<T>& f) const { return ag::add(f, conv1(ag::relu(conv0(f)))); }
};

template <typename T>
struct RiceOutput {
  ag::Var<T> ratio;      // r = clamp(L, epsilon_r, 1)
  ag::Var<T> enhanced;   // clamp(I / r, 0, 1)
  ag::Var<T> illum_raw;  // L, the sigmoid output
};

inline constexpr const char* kRiceMagic = "RICE.v1";

// Illumination compensation network. The target illumination is taken as
// uniform full light, so the predicted illumination is the ratio itself.
template <typename T>
class Rice {
 public:
  explicit Rice(RiceConfig cfg, std::uint64_t seed = 2) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    stem_ = Conv2d<T>::create(params_, "stem", 3, cfg_.channels, 3, rng);
    for (int i = 0; i < cfg_.cpu_blocks; ++i) {
      const std::string name = "block" + std::to_string(i);
      if (cfg_.use_cpu)
        cpu_.push_back(CpuBlock<T>::create(params_, name, {cfg_.channels, cfg_.share_band_params}, rng));
      else
        plain_.push_back(PlainBlock<T>::create(params_, name, cfg_.channels, rng));
    }
    head_ = Conv2d<T>::create(params_, "head", cfg_.channels, 3, 3, rng);
  }
  Rice(const Rice&) = delete;
  Rice& operator=(const Rice&) = delete;
  Rice(Rice&&) noexcept = default;
  Rice& operator=(Rice&&) noexcept = default;

  const RiceConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const std::vector<CpuBlock<T>>& cpu_blocks() const { return cpu_; }

  RiceOutput<T> forward(const ag::Var<T>& image) const {
    const Shape s = image.shape();
    if (s.c != 3) throw ShapeError("rice: expected a 3-channel input");
    if (s.h % 2 || s.w % 2) throw ShapeError("rice: input dims " + s.str() + " must be even");
    for (T v : image.value().vec())
      if (!(v >= T(0) && v <= T(1))) throw ContractViolation("rice: input must lie in [0, 1]");
    if (!params_.all_finite()) throw NumericError("rice: parameters contain NaN or Inf");

    ag::Var<T> f = stem_(image);
    for (const auto& b : cpu_) f = b(f);
    for (const auto& b : plain_) f = b(f);
    RiceOutput<T> out;
    out.illum_raw = ag::sigmoid(head_(f));
    out.ratio = ag::clamp(out.illum_raw, static_cast<T>(cfg_.epsilon_r), T(1));
    out.enhanced = ag::clamp(ag::divide(image, out.ratio), T(0), T(1));
    return out;
  }

  std::string config_text() const { return format_key_values(cfg_.to_kv()); }
  void save(const std::filesystem::path& path) const { write_checkpoint(path, kRiceMagic, config_text(), params_); }

  static Rice load(const std::filesystem::path& path) {
    const Checkpoint ck = read_checkpoint(path, kRiceMagic);
    Rice r(RiceConfig::from_kv(parse_key_values(ck.config_text)));
    load_parameters(ck, r.params_);
    return r;
  }

 private:
  RiceConfig cfg_;
  ParameterSet<T> params_;
  Conv2d<T> stem_;
  std::vector<CpuBlock<T>> cpu_;
  std::vector<PlainBlock<T>> plain_;
  Conv2d<T> head_;
};

// Elementwise I / r clamped to [0, 1].
template <typename T>
ImageTensor<T> apply_retinex(const ImageTensor<T>& image, const ImageTensor<T>& ratio, double epsilon_r) {
  if (!image.same_shape(ratio)) throw ShapeError("apply_retinex: image and ratio shapes differ");
  ImageTensor<T> out(image.height, image.width, image.channels, RangeTag::unit);
  for (std::size_t i = 0; i < image.data.size(); ++i) {
    if (!(ratio.data[i] >= static_cast<T>(epsilon_r)))
      throw ContractViolation("apply_retinex: ratio below floor epsilon_r");
    out.data[i] = std::clamp(image.data[i] / ratio.data[i], T(0), T(1));
  }
  return out;
}

}  // namespace uwf
