#pragma once

#include <cstdint>
#include <string>

#include "uwf/degradation.hpp"
#include "uwf/errors.hpp"
#include "uwf/fred.hpp"
#include "uwf/keyvalue.hpp"
#include "uwf/losses.hpp"
#include "uwf/rice.hpp"

namespace uwf {

struct Ablation {
  bool use_fred = true;
  bool use_rice = true;
  bool use_aci = true;
  bool use_cpu = true;
  bool operator==(const Ablation&) const = default;
};

// Every training hyperparameter in one record; serialized as flat key = value text.
struct TrainConfig {
  int crop = 256;
  int batch = 4;
  double lr_fred = 1e-4;
  double lr_rice = 3e-4;
  int iters_fred = 2000;
  int iters_rice = 1000;
  DeblurLossWeights weights_deblur;
  IllumLossWeights weights_illum;
  BlurSpec blur;
  Ablation ablation;
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string out_dir;
  FredConfig fred;
  RiceConfig rice;

  FredConfig fred_config() const {
    FredConfig c = fred;
    c.use_aci = ablation.use_aci;
    return c;
  }
  RiceConfig rice_config() const {
    RiceConfig c = rice;
    c.use_cpu = ablation.use_cpu;
    return c;
  }

  void validate() const {
    if (crop < 1 || batch < 1) throw ConfigError("crop and batch must be >= 1");
    if (!(lr_fred > 0) || !(lr_rice > 0)) throw ConfigError("learning rates must be > 0");
    if (iters_fred < 0 || iters_rice < 0) throw ConfigError("iteration counts must be >= 0");
    if (weights_deblur.beta < 0 || weights_deblur.gamma < 0) throw ConfigError("beta and gamma must be >= 0");
    weights_illum.validate();
    blur.validate();
    fred_config().validate();
    rice_config().validate();
    if (crop % fred.size_multiple())
      throw ConfigError("crop must be divisible by " + std::to_string(fred.size_multiple()));
    if (crop % weights_illum.patch) throw ConfigError("crop must be divisible by the exposure patch");
  }

  void set(const std::string& key, const std::string& v) {
    auto as_int = [&] { return static_cast<int>(parse_int(key, v)); };
    if (key == "crop") crop = as_int();
    else if (key == "batch") batch = as_int();
    else if (key == "lr_fred") lr_fred = parse_double(key, v);
    else if (key == "lr_rice") lr_rice = parse_double(key, v);
    else if (key == "iters_fred") iters_fred = as_int();
    else if (key == "iters_rice") iters_rice = as_int();
    else if (key == "beta") weights_deblur.beta = parse_double(key, v);
    else if (key == "gamma") weights_deblur.gamma = parse_double(key, v);
    else if (key == "alpha") weights_illum.alpha = parse_double(key, v);
    else if (key == "exposure_target") weights_illum.exposure_target = parse_double(key, v);
    else if (key == "patch") weights_illum.patch = as_int();
    else if (key == "sigma_w") weights_illum.sigma_w = parse_double(key, v);
    else if (key == "blur.kind") {
      if (v == "gaussian") blur.kind = KernelKind::gaussian;
      else if (v == "motion") blur.kind = KernelKind::motion;
      else throw ConfigError("key 'blur.kind': expected gaussian or motion");
    } else if (key == "blur.sigma_min") blur.sigma_min = parse_double(key, v);
    else if (key == "blur.sigma_max") blur.sigma_max = parse_double(key, v);
    else if (key == "blur.ksize_min") blur.ksize_min = as_int();
    else if (key == "blur.ksize_max") blur.ksize_max = as_int();
    else if (key == "blur.motion_min") blur.motion_min = parse_double(key, v);
    else if (key == "blur.motion_max") blur.motion_max = parse_double(key, v);
    else if (key == "blur.seed") blur.seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "use_fred") ablation.use_fred = parse_bool(key, v);
    else if (key == "use_rice") ablation.use_rice = parse_bool(key, v);
    else if (key == "use_aci") ablation.use_aci = parse_bool(key, v);
    else if (key == "use_cpu") ablation.use_cpu = parse_bool(key, v);
    else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "data_dir") data_dir = v;
    else if (key == "out_dir") out_dir = v;
    else if (key == "fred.levels") fred.levels = fred.supervision_scales = as_int();
    else if (key == "fred.base_channels") fred.base_channels = as_int();
    else if (key == "fred.channel_multipliers") fred.channel_multipliers = parse_int_list(key, v);
    else if (key == "fred.aps_pool") fred.aps_pool = as_int();
    else if (key == "fred.res_blocks") fred.res_blocks = as_int();
    else if (key == "fred.mlp_reduction") fred.mlp_reduction = as_int();
    else if (key == "rice.channels") rice.channels = as_int();
    else if (key == "rice.cpu_blocks") rice.cpu_blocks = as_int();
    else if (key == "rice.epsilon_r") rice.epsilon_r = parse_double(key, v);
    else if (key == "rice.share_band_params") rice.share_band_params = parse_bool(key, v);
    else throw ConfigError("unknown config key: " + key);
  }

  KeyValues to_kv() const {
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    return {{"crop", std::to_string(crop)},
            {"batch", std::to_string(batch)},
            {"lr_fred", format_double(lr_fred)},
            {"lr_rice", format_double(lr_rice)},
            {"iters_fred", std::to_string(iters_fred)},
            {"iters_rice", std::to_string(iters_rice)},
            {"beta", format_double(weights_deblur.beta)},
            {"gamma", format_double(weights_deblur.gamma)},
            {"alpha", format_double(weights_illum.alpha)},
            {"exposure_target", format_double(weights_illum.exposure_target)},
            {"patch", std::to_string(weights_illum.patch)},
            {"sigma_w", format_double(weights_illum.sigma_w)},
            {"blur.kind", blur.kind == KernelKind::gaussian ? "gaussian" : "motion"},
            {"blur.sigma_min", format_double(blur.sigma_min)},
            {"blur.sigma_max", format_double(blur.sigma_max)},
            {"blur.ksize_min", std::to_string(blur.ksize_min)},
            {"blur.ksize_max", std::to_string(blur.ksize_max)},
            {"blur.motion_min", format_double(blur.motion_min)},
            {"blur.motion_max", format_double(blur.motion_max)},
            {"blur.seed", std::to_string(blur.seed)},
            {"use_fred", b(ablation.use_fred)},
            {"use_rice", b(ablation.use_rice)},
            {"use_aci", b(ablation.use_aci)},
            {"use_cpu", b(ablation.use_cpu)},
            {"seed", std::to_string(seed)},
            {"data_dir", data_dir},
            {"out_dir", out_dir},
            {"fred.levels", std::to_string(fred.levels)},
            {"fred.base_channels", std::to_string(fred.base_channels)},
            {"fred.channel_multipliers", format_int_list(fred.channel_multipliers)},
            {"fred.aps_pool", std::to_string(fred.aps_pool)},
            {"fred.res_blocks", std::to_string(fred.res_blocks)},
            {"fred.mlp_reduction", std::to_string(fred.mlp_reduction)},
            {"rice.channels", std::to_string(rice.channels)},
            {"rice.cpu_blocks", std::to_string(rice.cpu_blocks)},
            {"rice.epsilon_r", format_double(rice.epsilon_r)},
            {"rice.share_band_params", b(rice.share_band_params)}};
  }

  static TrainConfig from_kv(const KeyValues& kv) {
    TrainConfig c;
    for (const auto& [k, v] : kv) c.set(k, v);
    return c;
  }
};

}  // namespace uwf
