#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "uwf/config.hpp"
#include "uwf/degradation.hpp"
#include "uwf/errors.hpp"
#include "uwf/fred.hpp"
#include "uwf/image.hpp"
#include "uwf/image_io.hpp"
#include "uwf/losses.hpp"
#include "uwf/optim.hpp"
#include "uwf/rice.hpp"

namespace uwf {

struct TrainingAborted : NumericError {
  using NumericError::NumericError;
};

struct LossRecord {
  int iteration = 0;
  std::vector<double> terms;
  double total = 0;
};

struct LossHistory {
  std::vector<std::string> term_names;
  std::vector<LossRecord> records;

  bool all_finite() const {
    for (const auto& r : records) {
      if (!std::isfinite(r.total)) return false;
      for (double t : r.terms)
        if (!std::isfinite(t)) return false;
    }
    return true;
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write loss log: " + path.string());
    os.precision(9);
    os << "iteration";
    for (const auto& n : term_names) os << "," << n;
    os << ",total\n";
    for (const auto& r : records) {
      os << r.iteration;
      for (double t : r.terms) os << "," << t;
      os << "," << r.total << "\n";
    }
  }
};

inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<ImageTensor<float>> load_corpus(const std::string& dir) {
  std::vector<ImageTensor<float>> images;
  for (const auto& p : list_images(dir)) images.push_back(load_image(p));
  if (images.empty()) throw ConfigError("no readable images in data_dir '" + dir + "'");
  return images;
}

template <typename T>
ImageTensor<T> random_crop(const ImageTensor<T>& img, int size, Rng& rng) {
  const ImageTensor<T>* src = &img;
  ImageTensor<T> padded;
  if (img.height < size || img.width < size) {
    padded = pad_to_multiple(img, size).first;
    src = &padded;
  }
  const int y0 = std::uniform_int_distribution<int>(0, src->height - size)(rng);
  const int x0 = std::uniform_int_distribution<int>(0, src->width - size)(rng);
  return crop(*src, y0, x0, size, size);
}

// Ground truth at every supervision scale, coarsest first.
template <typename T>
std::vector<ag::Var<T>> multiscale_targets(const Tensor<T>& clean, int levels) {
  std::vector<ag::Var<T>> fine_first{ag::constant(clean)};
  ag::NoGradGuard ng;
  for (int k = 1; k < levels; ++k) fine_first.push_back(ag::avg_pool(fine_first.back(), 2));
  return {fine_first.rbegin(), fine_first.rend()};
}

inline Fred<float> make_fred(const TrainConfig& cfg) { return Fred<float>(cfg.fred_config(), cfg.seed * 7919 + 11); }
inline Rice<float> make_rice(const TrainConfig& cfg) { return Rice<float>(cfg.rice_config(), cfg.seed * 7919 + 13); }

struct BlurPair {
  ImageTensor<float> blurry;
  ImageTensor<float> clean;
};

// Draws a random crop and a fresh kernel for it.
inline BlurPair synthesize_pair(const std::vector<ImageTensor<float>>& corpus, const TrainConfig& cfg, Rng& rng) {
  const auto& src = corpus[std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng)];
  ImageTensor<float> clean = random_crop(src, cfg.crop, rng);
  const BlurKernel k = sample_blur(cfg.blur, rng);
  return {degrade(clean, k), std::move(clean)};
}

template <typename T>
void write_abort_snapshot(const TrainConfig& cfg, const std::string& stage, const LossRecord& rec) {
  if (cfg.out_dir.empty()) return;
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream os(std::filesystem::path(cfg.out_dir) / (stage + "_abort.txt"));
  os << "stage = " << stage << "\niteration = " << rec.iteration << "\ntotal = " << rec.total << "\n";
  for (std::size_t i = 0; i < rec.terms.size(); ++i) os << "term" << i << " = " << rec.terms[i] << "\n";
  os << format_key_values(cfg.to_kv());
}

struct FredTrainResult {
  Fred<float> model;
  std::filesystem::path checkpoint;
  LossHistory history;
};

using FredObserver = std::function<void(int iteration, const Fred<float>&)>;
using PairSampler = std::function<BlurPair(Rng&)>;

// Training loop over pairs drawn from `sample`; observer sees the model before
// the first step (iteration 0) and after every step.
inline FredTrainResult train_fred(const TrainConfig& cfg, const PairSampler& sample, const FredObserver& observer = {}) {
  cfg.validate();
  Fred<float> model = make_fred(cfg);
  Adam<float> opt(model.params(), cfg.lr_fred);
  const RandomConvExtractor<float> extractor;
  Rng rng(cfg.seed ^ (cfg.blur.seed * 0x9E3779B97F4A7C15ULL));
  LossHistory hist{{"content", "msfr", "perceptual"}, {}};
  if (observer) observer(0, model);

  for (int it = 1; it <= cfg.iters_fred; ++it) {
    model.params().zero_grad();
    LossRecord rec{it, {0, 0, 0}, 0};
    for (int b = 0; b < cfg.batch; ++b) {
      const BlurPair pair = sample(rng);
      const auto out = model.forward(ag::constant(to_planar(pair.blurry)));
      const auto targets = multiscale_targets(to_planar(pair.clean), cfg.fred.levels);
      const auto loss = loss_deblur_total(out.outputs, targets, cfg.weights_deblur, extractor);
      ag::backward(ag::scale(loss.total, 1.0f / cfg.batch));
      rec.terms[0] += loss.content / cfg.batch;
      rec.terms[1] += loss.msfr / cfg.batch;
      rec.terms[2] += loss.perceptual / cfg.batch;
      rec.total += loss.total.item() / cfg.batch;
    }
    hist.records.push_back(rec);
    if (!std::isfinite(rec.total)) {
      write_abort_snapshot<float>(cfg, "fred", rec);
      throw TrainingAborted("train_fred: non-finite loss at iteration " + std::to_string(it));
    }
    opt.step();
    if (observer) observer(it, model);
  }

  FredTrainResult res{std::move(model), {}, std::move(hist)};
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    res.checkpoint = std::filesystem::path(cfg.out_dir) / "fred.ckpt";
    res.model.save(res.checkpoint);
    res.history.write_csv(std::filesystem::path(cfg.out_dir) / "fred_loss.csv");
  }
  return res;
}

inline FredTrainResult train_fred(const TrainConfig& cfg, const std::vector<ImageTensor<float>>& corpus,
                                  const FredObserver& observer = {}) {
  if (corpus.empty()) throw ConfigError("train_fred: empty corpus");
  return train_fred(cfg, [&](Rng& rng) { return synthesize_pair(corpus, cfg, rng); }, observer);
}

inline FredTrainResult train_fred(const TrainConfig& cfg) { return train_fred(cfg, load_corpus(cfg.data_dir)); }

// Finest FRED output clamped to the unit range.
template <typename T>
Tensor<T> fred_deblur(const Fred<T>& fred, const Tensor<T>& image) {
  ag::NoGradGuard ng;
  Tensor<T> out = fred.forward(ag::constant(image)).outputs.back().value();
  for (auto& v : out.vec()) v = std::clamp(v, T(0), T(1));
  return out;
}

struct RiceTrainResult {
  Rice<float> model;
  std::filesystem::path checkpoint;
  LossHistory history;
};

inline RiceTrainResult train_rice(const TrainConfig& cfg, const std::vector<ImageTensor<float>>& corpus,
                                  const Fred<float>* fred) {
  cfg.validate();
  if (corpus.empty()) throw ConfigError("train_rice: empty corpus");
  if (cfg.ablation.use_fred && !fred) throw ConfigError("train_rice: use_fred is set but no FRED checkpoint was given");
  Rice<float> model = make_rice(cfg);
  Adam<float> opt(model.params(), cfg.lr_rice);
  Rng rng(cfg.seed ^ 0xA5A5A5A5ULL);
  LossHistory hist{{"fidelity", "smooth", "exposure"}, {}};

  for (int it = 1; it <= cfg.iters_rice; ++it) {
    model.params().zero_grad();
    LossRecord rec{it, {0, 0, 0}, 0};
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& src = corpus[std::uniform_int_distribution<std::size_t>(0, corpus.size() - 1)(rng)];
      Tensor<float> x = to_planar(random_crop(src, cfg.crop, rng));
      if (cfg.ablation.use_fred) x = fred_deblur(*fred, x);
      const ag::Var<float> input = ag::constant(std::move(x));
      const auto out = model.forward(input);
      const auto loss = loss_illum_total(out.illum_raw, out.enhanced, input, cfg.weights_illum);
      ag::backward(ag::scale(loss.total, 1.0f / cfg.batch));
      rec.terms[0] += loss.fidelity / cfg.batch;
      rec.terms[1] += loss.smooth / cfg.batch;
      rec.terms[2] += loss.exposure / cfg.batch;
      rec.total += loss.total.item() / cfg.batch;
    }
    hist.records.push_back(rec);
    if (!std::isfinite(rec.total)) {
      write_abort_snapshot<float>(cfg, "rice", rec);
      throw TrainingAborted("train_rice: non-finite loss at iteration " + std::to_string(it));
    }
    opt.step();
  }

  RiceTrainResult res{std::move(model), {}, std::move(hist)};
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    res.checkpoint = std::filesystem::path(cfg.out_dir) / "rice.ckpt";
    res.model.save(res.checkpoint);
    res.history.write_csv(std::filesystem::path(cfg.out_dir) / "rice_loss.csv");
  }
  return res;
}

inline RiceTrainResult train_rice(const TrainConfig& cfg, const std::optional<std::filesystem::path>& fred_ckpt) {
  std::optional<Fred<float>> fred;
  if (cfg.ablation.use_fred) {
    if (!fred_ckpt) throw ConfigError("train_rice: use_fred is set but no FRED checkpoint was given");
    fred.emplace(Fred<float>::load(*fred_ckpt));
    fred->params().set_trainable(false);
  }
  return train_rice(cfg, load_corpus(cfg.data_dir), fred ? &*fred : nullptr);
}

template <typename T>
struct EnhancementResult {
  ImageTensor<T> deblurred;
  ImageTensor<T> ratio;
  ImageTensor<T> enhanced;
  std::vector<ImageTensor<T>> scale_outputs;  // coarsest first
};

// Full pipeline: pad, deblur, compensate illumination, crop back. Disabled
// stages pass their input through (ratio is 1 when RICE is off).
template <typename T>
EnhancementResult<T> enhance(const ImageTensor<T>& image, const Fred<T>* fred, const Rice<T>* rice,
                             const Ablation& ablation) {
  if (image.channels != 3) throw ShapeError("enhance: expected a 3-channel image");
  image.check_range("enhance");
  const bool run_fred = ablation.use_fred;
  const bool run_rice = ablation.use_rice;
  if (run_fred && !fred) throw ConfigError("enhance: FRED enabled without a model");
  if (run_rice && !rice) throw ConfigError("enhance: RICE enabled without a model");

  const int m = std::lcm(run_fred ? fred->config().size_multiple() : 1, run_rice ? 2 : 1);
  const auto [padded, rec] = pad_to_multiple(image, m);
  ag::NoGradGuard ng;

  EnhancementResult<T> res;
  Tensor<T> x = to_planar(padded);
  if (run_fred) {
    const auto out = fred->forward(ag::constant(x));
    const int levels = static_cast<int>(out.outputs.size());
    for (int i = 0; i < levels; ++i) {
      const int f = 1 << (levels - 1 - i);
      auto img = clamp_unit(to_interleaved(out.outputs[i].value(), RangeTag::signed_values));
      res.scale_outputs.push_back(crop(img, 0, 0, (image.height + f - 1) / f, (image.width + f - 1) / f));
    }
    x = out.outputs.back().value();
    for (auto& v : x.vec()) v = std::clamp(v, T(0), T(1));
  }
  Tensor<T> ratio(3, x.height(), x.width(), T(1));
  Tensor<T> enhanced = x;
  if (run_rice) {
    const auto out = rice->forward(ag::constant(x));
    ratio = out.ratio.value();
    enhanced = out.enhanced.value();
  }
  res.deblurred = crop_back(to_interleaved(x, RangeTag::unit), rec);
  res.ratio = crop_back(to_interleaved(ratio, RangeTag::unit), rec);
  res.enhanced = crop_back(to_interleaved(enhanced, RangeTag::unit), rec);
  return res;
}

}  // namespace uwf
