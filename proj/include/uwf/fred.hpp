#pragma once

#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwf/autograd.hpp"
#include "uwf/errors.hpp"
#include "uwf/frequency.hpp"
#include "uwf/keyvalue.hpp"
#include "uwf/ops.hpp"
#include "uwf/params.hpp"

namespace uwf {

struct AciConfig {
  std::vector<int> in_channels_per_source;
  int out_channels = 1;
  int mlp_reduction = 8;

  int fused_channels() const { return std::accumulate(in_channels_per_source.begin(), in_channels_per_source.end(), 0); }

  void validate() const {
    if (in_channels_per_source.empty()) throw ConfigError("aci: at least one source required");
    if (out_channels < 1) throw ConfigError("aci: out_channels must be >= 1");
    if (mlp_reduction < 1 || fused_channels() % mlp_reduction)
      throw ConfigError("aci: mlp_reduction must divide the fused channel count");
  }
};

struct FredConfig {
  int levels = 3;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2, 4};
  int aps_pool = 2;
  int supervision_scales = 3;
  int res_blocks = 1;
  int mlp_reduction = 8;
  bool use_aci = true;

  int channels(int level) const { return base_channels * channel_multipliers.at(level); }
  int size_multiple() const { return (1 << (levels - 1)) * aps_pool; }

  void validate() const {
    if (levels < 1) throw ConfigError("fred: levels must be >= 1");
    if (base_channels < 1) throw ConfigError("fred: base_channels must be >= 1");
    if (static_cast<int>(channel_multipliers.size()) != levels)
      throw ConfigError("fred: channel_multipliers must have one entry per level");
    if (supervision_scales != levels) throw ConfigError("fred: supervision_scales must equal levels");
    if (aps_pool < 1) throw ConfigError("fred: aps_pool must be >= 1");
    if (res_blocks < 0) throw ConfigError("fred: res_blocks must be >= 0");
    for (int k = 0; k < levels; ++k)
      if (channels(k) % mlp_reduction) throw ConfigError("fred: mlp_reduction must divide every level width");
  }

  KeyValues to_kv() const {
    return {{"levels", std::to_string(levels)},
            {"base_channels", std::to_string(base_channels)},
            {"channel_multipliers", format_int_list(channel_multipliers)},
            {"aps_pool", std::to_string(aps_pool)},
            {"supervision_scales", std::to_string(supervision_scales)},
            {"res_blocks", std::to_string(res_blocks)},
            {"mlp_reduction", std::to_string(mlp_reduction)},
            {"use_aci", use_aci ? "true" : "false"}};
  }

  static FredConfig from_kv(const KeyValues& kv) {
    FredConfig c;
    for (const auto& [k, v] : kv) {
      if (k == "levels") c.levels = static_cast<int>(parse_int(k, v));
      else if (k == "base_channels") c.base_channels = static_cast<int>(parse_int(k, v));
      else if (k == "channel_multipliers") c.channel_multipliers = parse_int_list(k, v);
      else if (k == "aps_pool") c.aps_pool = static_cast<int>(parse_int(k, v));
      else if (k == "supervision_scales") c.supervision_scales = static_cast<int>(parse_int(k, v));
      else if (k == "res_blocks") c.res_blocks = static_cast<int>(parse_int(k, v));
      else if (k == "mlp_reduction") c.mlp_reduction = static_cast<int>(parse_int(k, v));
      else if (k == "use_aci") c.use_aci = parse_bool(k, v);
      else throw FormatError("unknown FRED config key: " + k);
    }
    c.validate();
    return c;
  }

  bool operator==(const FredConfig&) const = default;
};

// Shared two-layer MLP applied to average- and max-pooled channel
// descriptors; the two results are summed and squashed into a gate.
template <typename T>
struct ChannelAttention {
  Conv2d<T> reduce;
  Conv2d<T> expand;

  static ChannelAttention create(ParameterSet<T>& ps, const std::string& name, int channels, int reduction, Rng& rng) {
    const int hidden = std::max(1, channels / reduction);
    return {Conv2d<T>::create(ps, name + ".mlp0", channels, hidden, 1, rng),
            Conv2d<T>::create(ps, name + ".mlp1", hidden, channels, 1, rng)};
  }

  ag::Var<T> mlp(const ag::Var<T>& v) const { return expand(ag::relu(reduce(v))); }

  ag::Var<T> gate(const ag::Var<T>& x) const {
    return ag::sigmoid(ag::add(mlp(ag::global_avg_pool(x)), mlp(ag::global_max_pool(x))));
  }
};

// Brings a feature map to (h, w): 2x2 mean pooling chains going down,
// bilinear interpolation going up.
template <typename T>
ag::Var<T> rescale_to(const ag::Var<T>& x, int h, int w) {
  ag::Var<T> y = x;
  while (y.shape().h > h && y.shape().h % 2 == 0 && y.shape().h / 2 >= h && y.shape().w % 2 == 0)
    y = ag::avg_pool(y, 2);
  if (y.shape().h != h || y.shape().w != w) y = ag::bilinear_resize(y, h, w);
  return y;
}

template <typename T>
struct AciTrace {
  Tensor<T> fused;  // f_s
  Tensor<T> gate;   // channel weights, (C, 1, 1)
  Tensor<T> global_branch;
  Tensor<T> local_branch;
};

// Asymmetric channel integration: fuses several encoder features at one
// decoder resolution through a gated global branch and a pointwise local
// branch.
template <typename T>
struct AciUnit {
  AciConfig cfg;
  ChannelAttention<T> attention;
  Conv2d<T> global_proj;
  Conv2d<T> local0;
  Conv2d<T> local1;
  Conv2d<T> out;

  static AciUnit create(ParameterSet<T>& ps, const std::string& name, const AciConfig& cfg, Rng& rng) {
    cfg.validate();
    const int cs = cfg.fused_channels();
    AciUnit u;
    u.cfg = cfg;
    u.attention = ChannelAttention<T>::create(ps, name + ".attn", cs, cfg.mlp_reduction, rng);
    u.global_proj = Conv2d<T>::create(ps, name + ".global", cs, cfg.out_channels, 1, rng);
    u.local0 = Conv2d<T>::create(ps, name + ".local0", cs, cfg.out_channels, 1, rng);
    u.local1 = Conv2d<T>::create(ps, name + ".local1", cfg.out_channels, cfg.out_channels, 1, rng);
    u.out = Conv2d<T>::create(ps, name + ".out", cfg.out_channels, cfg.out_channels, 1, rng);
    return u;
  }

  ag::Var<T> operator()(std::span<const ag::Var<T>> sources, int h, int w, AciTrace<T>* trace = nullptr) const {
    if (sources.size() != cfg.in_channels_per_source.size())
      throw ConfigError("aci: expected " + std::to_string(cfg.in_channels_per_source.size()) + " sources");
    std::vector<ag::Var<T>> scaled;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (sources[i].shape().c != cfg.in_channels_per_source[i])
        throw ConfigError("aci: source " + std::to_string(i) + " has " + std::to_string(sources[i].shape().c) +
                          " channels, config says " + std::to_string(cfg.in_channels_per_source[i]));
      scaled.push_back(rescale_to(sources[i], h, w));
    }
    const ag::Var<T> fs = ag::concat_channels(scaled);
    const ag::Var<T> gate = attention.gate(fs);
    const ag::Var<T> fg = global_proj(ag::scale_channels(fs, gate));
    const ag::Var<T> fl = local1(ag::relu(local0(fs)));
    if (trace) *trace = {fs.value(), gate.value(), fg.value(), fl.value()};
    return out(ag::add(fg, fl));
  }
};

template <typename T>
ag::Var<T> aci_fuse(std::span<const ag::Var<T>> sources, int h, int w, const AciUnit<T>& unit,
                    AciTrace<T>* trace = nullptr) {
  return unit(sources, h, w, trace);
}

template <typename T>
struct ResBlock {
  Conv2d<T> conv0;
  Conv2d<T> conv1;

  static ResBlock create(ParameterSet<T>& ps, const std::string& name, int ch, Rng& rng) {
    return {Conv2d<T>::create(ps, name + ".conv0", ch, ch, 3, rng), Conv2d<T>::create(ps, name + ".conv1", ch, ch, 3, rng)};
  }

  ag::Var<T> operator()(const ag::Var<T>& x) const { return ag::add(x, conv1(ag::relu(conv0(x)))); }
};

// One frequency stream: encoder with per-level input injection, decoder with
// ACI (or plain) skip fusion.
template <typename T>
struct FredStream {
  std::vector<Conv2d<T>> enc_entry;   // level 0: head conv; level k>0: stride-2 downsample
  std::vector<Conv2d<T>> enc_inject;  // level k>0: merges downsampled features with the scale-k input
  std::vector<std::vector<ResBlock<T>>> enc_blocks;
  std::vector<AciUnit<T>> aci;
  std::vector<Conv2d<T>> dec_up;  // level k < levels-1
  std::vector<Conv2d<T>> dec_merge;
  std::vector<std::vector<ResBlock<T>>> dec_blocks;

  static FredStream create(ParameterSet<T>& ps, const std::string& name, const FredConfig& cfg, Rng& rng) {
    FredStream s;
    const int L = cfg.levels;
    std::vector<int> widths;
    for (int k = 0; k < L; ++k) widths.push_back(cfg.channels(k));
    for (int k = 0; k < L; ++k) {
      const std::string p = name + ".enc" + std::to_string(k);
      if (k == 0) {
        s.enc_entry.push_back(Conv2d<T>::create(ps, p + ".head", 3, widths[0], 3, rng));
      } else {
        s.enc_entry.push_back(Conv2d<T>::create(ps, p + ".down", widths[k - 1], widths[k], 3, rng, Init::he, 2));
        s.enc_inject.push_back(Conv2d<T>::create(ps, p + ".inject", widths[k] + 3, widths[k], 3, rng));
      }
      std::vector<ResBlock<T>> blocks;
      for (int b = 0; b < cfg.res_blocks; ++b)
        blocks.push_back(ResBlock<T>::create(ps, p + ".res" + std::to_string(b), widths[k], rng));
      s.enc_blocks.push_back(std::move(blocks));
    }
    for (int k = 0; k < L; ++k) {
      const std::string p = name + ".dec" + std::to_string(k);
      if (cfg.use_aci) s.aci.push_back(AciUnit<T>::create(ps, p + ".aci", {widths, widths[k], cfg.mlp_reduction}, rng));
      if (k < L - 1) s.dec_up.push_back(Conv2d<T>::create(ps, p + ".up", widths[k + 1], widths[k], 1, rng));
      s.dec_merge.push_back(Conv2d<T>::create(ps, p + ".merge", 2 * widths[k], widths[k], 1, rng));
      std::vector<ResBlock<T>> blocks;
      for (int b = 0; b < cfg.res_blocks; ++b)
        blocks.push_back(ResBlock<T>::create(ps, p + ".res" + std::to_string(b), widths[k], rng));
      s.dec_blocks.push_back(std::move(blocks));
    }
    return s;
  }

  // inputs[k] is the stream's component at scale k; returns decoder features
  // indexed by level (finest first).
  std::vector<ag::Var<T>> operator()(const std::vector<ag::Var<T>>& inputs) const {
    const int L = static_cast<int>(enc_blocks.size());
    std::vector<ag::Var<T>> enc(L);
    for (int k = 0; k < L; ++k) {
      ag::Var<T> f;
      if (k == 0) {
        f = ag::relu(enc_entry[0](inputs[0]));
      } else {
        f = ag::relu(enc_entry[k](enc[k - 1]));
        f = ag::relu(enc_inject[k - 1](ag::concat_channels<T>({f, inputs[k]})));
      }
      for (const auto& b : enc_blocks[k]) f = b(f);
      enc[k] = f;
    }
    std::vector<ag::Var<T>> dec(L);
    for (int k = L - 1; k >= 0; --k) {
      const int h = enc[k].shape().h, w = enc[k].shape().w;
      ag::Var<T> u = k == L - 1 ? enc[k] : ag::relu(dec_up[k](ag::bilinear_resize(dec[k + 1], h, w)));
      ag::Var<T> skip = aci.empty() ? enc[k] : aci[k](std::span<const ag::Var<T>>(enc), h, w);
      ag::Var<T> f = ag::relu(dec_merge[k](ag::concat_channels<T>({u, skip})));
      for (const auto& b : dec_blocks[k]) f = b(f);
      dec[k] = f;
    }
    return dec;
  }
};

// Frequency fusion head: merges the two streams at one decoder level and
// predicts a 3-channel residual.
template <typename T>
struct FusionHead {
  Conv2d<T> conv0;
  Conv2d<T> conv1;
  ChannelAttention<T> attention;
  Conv2d<T> out;

  static FusionHead create(ParameterSet<T>& ps, const std::string& name, int ch, int reduction, Rng& rng) {
    return {Conv2d<T>::create(ps, name + ".conv0", 2 * ch, ch, 3, rng), Conv2d<T>::create(ps, name + ".conv1", ch, ch, 3, rng),
            ChannelAttention<T>::create(ps, name + ".attn", ch, reduction, rng),
            Conv2d<T>::create(ps, name + ".out", ch, 3, 3, rng, Init::zero)};
  }

  ag::Var<T> operator()(const ag::Var<T>& high, const ag::Var<T>& low) const {
    ag::Var<T> f = ag::relu(conv0(ag::concat_channels<T>({high, low})));
    f = ag::relu(conv1(f));
    f = ag::scale_channels(f, attention.gate(f));
    return out(f);
  }
};

template <typename T>
struct FredOutput {
  std::vector<ag::Var<T>> outputs;  // coarsest first; back() is the deblurred image
  Tensor<T> low;
  Tensor<T> high;
};

inline constexpr const char* kFredMagic = "FRED.v1";

// Dual-stream frequency-decoupled deblurring network.
template <typename T>
class Fred {
 public:
  explicit Fred(FredConfig cfg, std::uint64_t seed = 1) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    high_ = FredStream<T>::create(params_, "high", cfg_, rng);
    low_ = FredStream<T>::create(params_, "low", cfg_, rng);
    for (int k = 0; k < cfg_.levels; ++k)
      heads_.push_back(FusionHead<T>::create(params_, "ffm" + std::to_string(k), cfg_.channels(k), cfg_.mlp_reduction, rng));
  }
  Fred(const Fred&) = delete;
  Fred& operator=(const Fred&) = delete;
  Fred(Fred&&) noexcept = default;
  Fred& operator=(Fred&&) noexcept = default;

  const FredConfig& config() const { return cfg_; }
  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }

  void zero_output_heads() {
    for (auto& h : heads_) {
      h.out.weight.mutable_value().fill(T(0));
      h.out.bias.mutable_value().fill(T(0));
    }
  }

  FredOutput<T> forward(const ag::Var<T>& blurry) const {
    const Shape s = blurry.shape();
    if (s.c != 3) throw ShapeError("fred: expected a 3-channel input");
    const int m = cfg_.size_multiple();
    if (s.h % m || s.w % m) throw ShapeError("fred: input " + s.str() + " must be divisible by " + std::to_string(m));
    if (!params_.all_finite()) throw NumericError("fred: parameters contain NaN or Inf");

    const ag::Var<T> low = aps_low(blurry, cfg_.aps_pool);
    const ag::Var<T> high = ag::sub(blurry, low);
    std::vector<ag::Var<T>> low_in{low}, high_in{high}, image_in{blurry};
    for (int k = 1; k < cfg_.levels; ++k) {
      low_in.push_back(ag::avg_pool(low_in.back(), 2));
      high_in.push_back(ag::avg_pool(high_in.back(), 2));
      image_in.push_back(ag::avg_pool(image_in.back(), 2));
    }
    const auto dh = high_(high_in);
    const auto dl = low_(low_in);

    FredOutput<T> res;
    for (int k = cfg_.levels - 1; k >= 0; --k) res.outputs.push_back(ag::add(heads_[k](dh[k], dl[k]), image_in[k]));
    res.low = low.value();
    res.high = high.value();
    return res;
  }

  std::string config_text() const { return format_key_values(cfg_.to_kv()); }

  void save(const std::filesystem::path& path) const { write_checkpoint(path, kFredMagic, config_text(), params_); }

  static Fred load(const std::filesystem::path& path) {
    const Checkpoint ck = read_checkpoint(path, kFredMagic);
    Fred f(FredConfig::from_kv(parse_key_values(ck.config_text)));
    load_parameters(ck, f.params_);
    return f;
  }

 private:
  FredConfig cfg_;
  ParameterSet<T> params_;
  FredStream<T> high_;
  FredStream<T> low_;
  std::vector<FusionHead<T>> heads_;
};

}  // namespace uwf
