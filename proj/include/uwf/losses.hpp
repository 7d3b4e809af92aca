#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "uwf/autograd.hpp"
#include "uwf/errors.hpp"
#include "uwf/ops.hpp"
#include "uwf/params.hpp"
#include "uwf/tensor.hpp"

namespace uwf {

struct DeblurLossWeights {
  double beta = 0.1;
  double gamma = 0.01;
};

struct IllumLossWeights {
  double alpha = 1.5;
  double exposure_target = 0.6;
  int patch = 16;
  double sigma_w = 0.1;

  void validate() const {
    if (alpha < 0) throw ConfigError("alpha must be >= 0");
    if (!(exposure_target > 0 && exposure_target < 1)) throw ConfigError("exposure_target must lie in (0, 1)");
    if (patch < 1) throw ConfigError("patch must be >= 1");
    if (!(sigma_w > 0)) throw ConfigError("sigma_w must be > 0");
  }
};

namespace detail {

template <typename T>
T sgn(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

// In-place unnormalized forward 2D DFT of an h x w row-major complex array.
template <typename T>
void fft2(std::vector<std::complex<T>>& a, int h, int w) {
  Eigen::FFT<T> fft;
  std::vector<std::complex<T>> in, out;
  in.resize(w);
  for (int y = 0; y < h; ++y) {
    std::copy_n(a.begin() + static_cast<std::ptrdiff_t>(y) * w, w, in.begin());
    fft.fwd(out, in);
    std::copy_n(out.begin(), w, a.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  in.resize(h);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) in[y] = a[static_cast<std::size_t>(y) * w + x];
    fft.fwd(out, in);
    for (int y = 0; y < h; ++y) a[static_cast<std::size_t>(y) * w + x] = out[y];
  }
}

template <typename T>
void require_same_shape(const ag::Var<T>& a, const ag::Var<T>& b, const char* what) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

// mean |a - b|
template <typename T>
ag::Var<T> mean_abs_diff(const ag::Var<T>& a, const ag::Var<T>& b) {
  detail::require_same_shape(a, b, "mean_abs_diff");
  const std::size_t n = a.value().size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  return ag::make_result<T>(Tensor<T>(1, 1, 1, acc / T(n)), {a, b},
                            [n](const Tensor<T>& g, const std::vector<ag::Node<T>*>& p) {
                              const T s = g[0] / T(n);
                              for (std::size_t i = 0; i < n; ++i) {
                                const T d = s * detail::sgn(p[0]->value[i] - p[1]->value[i]);
                                if (ag::wants(p[0])) p[0]->grad_buffer()[i] += d;
                                if (ag::wants(p[1])) p[1]->grad_buffer()[i] -= d;
                              }
                            });
}

// mean (a - b)^2
template <typename T>
ag::Var<T> mean_sq_diff(const ag::Var<T>& a, const ag::Var<T>& b) {
  detail::require_same_shape(a, b, "mean_sq_diff");
  const std::size_t n = a.value().size();
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return ag::make_result<T>(Tensor<T>(1, 1, 1, acc / T(n)), {a, b},
                            [n](const Tensor<T>& g, const std::vector<ag::Node<T>*>& p) {
                              const T s = T(2) * g[0] / T(n);
                              for (std::size_t i = 0; i < n; ++i) {
                                const T d = s * (p[0]->value[i] - p[1]->value[i]);
                                if (ag::wants(p[0])) p[0]->grad_buffer()[i] += d;
                                if (ag::wants(p[1])) p[1]->grad_buffer()[i] -= d;
                              }
                            });
}

// (1/N) sum over channels of |Re| + |Im| of FFT2(a - b).
template <typename T>
ag::Var<T> fft_l1(const ag::Var<T>& a, const ag::Var<T>& b) {
  detail::require_same_shape(a, b, "fft_l1");
  const Shape s = a.shape();
  const std::size_t plane = s.plane();
  const T inv_n = T(1) / T(s.size());
  std::vector<std::complex<T>> spec(s.size());
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = {a.value()[i] - b.value()[i], T(0)};
  T acc = 0;
  for (int c = 0; c < s.c; ++c) {
    std::vector<std::complex<T>> ch(spec.begin() + c * plane, spec.begin() + (c + 1) * plane);
    detail::fft2(ch, s.h, s.w);
    for (std::size_t i = 0; i < plane; ++i) {
      spec[c * plane + i] = ch[i];
      acc += std::abs(ch[i].real()) + std::abs(ch[i].imag());
    }
  }
  return ag::make_result<T>(
      Tensor<T>(1, 1, 1, acc * inv_n), {a, b},
      [s, plane, inv_n, spec = std::move(spec)](const Tensor<T>& g, const std::vector<ag::Node<T>*>& p) {
        // d/dx of sum |Re D| + |Im D| is Re(FFT2(sgn Re D - i sgn Im D)).
        for (int c = 0; c < s.c; ++c) {
          std::vector<std::complex<T>> sg(plane);
          for (std::size_t i = 0; i < plane; ++i) {
            const auto& d = spec[c * plane + i];
            sg[i] = {detail::sgn(d.real()), -detail::sgn(d.imag())};
          }
          detail::fft2(sg, s.h, s.w);
          for (std::size_t i = 0; i < plane; ++i) {
            const T v = g[0] * inv_n * sg[i].real();
            if (ag::wants(p[0])) p[0]->grad_buffer()[c * plane + i] += v;
            if (ag::wants(p[1])) p[1]->grad_buffer()[c * plane + i] -= v;
          }
        }
      });
}

template <typename T>
void check_scales(const std::vector<ag::Var<T>>& preds, const std::vector<ag::Var<T>>& targets, const char* what) {
  if (preds.size() != targets.size() || preds.empty())
    throw ShapeError(std::string(what) + ": prediction/target scale counts differ");
  for (std::size_t k = 0; k < preds.size(); ++k) detail::require_same_shape(preds[k], targets[k], what);
}

template <typename T>
ag::Var<T> loss_content(const std::vector<ag::Var<T>>& preds, const std::vector<ag::Var<T>>& targets) {
  check_scales(preds, targets, "loss_content");
  ag::Var<T> total = mean_abs_diff(preds[0], targets[0]);
  for (std::size_t k = 1; k < preds.size(); ++k) total = ag::add(total, mean_abs_diff(preds[k], targets[k]));
  return total;
}

template <typename T>
ag::Var<T> loss_msfr(const std::vector<ag::Var<T>>& preds, const std::vector<ag::Var<T>>& targets) {
  check_scales(preds, targets, "loss_msfr");
  ag::Var<T> total = fft_l1(preds[0], targets[0]);
  for (std::size_t k = 1; k < preds.size(); ++k) total = ag::add(total, fft_l1(preds[k], targets[k]));
  return total;
}

// Maps an image to a list of feature maps, deterministically.
template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<ag::Var<T>> extract(const ag::Var<T>& image) const = 0;
};

// Frozen, seeded 3-layer conv stack. Stands in for a pretrained network.
template <typename T>
class RandomConvExtractor final : public FeatureExtractor<T> {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 7) {
    Rng rng(seed);
    layers_.push_back(Conv2d<T>::create(params_, "feat0", 3, 8, 3, rng));
    layers_.push_back(Conv2d<T>::create(params_, "feat1", 8, 16, 3, rng, Init::he, 2));
    layers_.push_back(Conv2d<T>::create(params_, "feat2", 16, 16, 3, rng, Init::he, 2));
    params_.set_trainable(false);
  }

  std::vector<ag::Var<T>> extract(const ag::Var<T>& image) const override {
    std::vector<ag::Var<T>> feats;
    ag::Var<T> f = image;
    for (const auto& l : layers_) {
      f = ag::relu(l(f));
      feats.push_back(f);
    }
    return feats;
  }

 private:
  ParameterSet<T> params_;
  std::vector<Conv2d<T>> layers_;
};

template <typename T>
ag::Var<T> loss_perceptual(const ag::Var<T>& pred, const ag::Var<T>& target, const FeatureExtractor<T>& extractor) {
  detail::require_same_shape(pred, target, "loss_perceptual");
  const auto fp = extractor.extract(pred);
  const auto ft = extractor.extract(target);
  if (fp.size() != ft.size() || fp.empty()) throw ShapeError("loss_perceptual: extractor returned mismatched feature lists");
  ag::Var<T> total = mean_sq_diff(fp[0], ft[0]);
  for (std::size_t i = 1; i < fp.size(); ++i) total = ag::add(total, mean_sq_diff(fp[i], ft[i]));
  return total;
}

template <typename T>
ag::Var<T> loss_fidelity(const ag::Var<T>& illum, const ag::Var<T>& input) {
  detail::require_same_shape(illum, input, "loss_fidelity");
  return mean_sq_diff(illum, input);
}

// Edge-aware total variation of the illumination. Neighbour weights come from
// the guide image, exp(-sum_c dguide^2 / (2 sigma^2)), shared by all channels.
// Result is mean over horizontal pairs plus mean over vertical pairs.
template <typename T>
ag::Var<T> loss_smooth(const ag::Var<T>& illum, const Tensor<T>& guide, double sigma_w) {
  const Shape s = illum.shape();
  if (!(guide.shape().h == s.h && guide.shape().w == s.w)) throw ShapeError("loss_smooth: guide shape mismatch");
  if (!(sigma_w > 0)) throw ConfigError("loss_smooth: sigma_w must be > 0");
  const double denom = 2.0 * sigma_w * sigma_w;
  const int gc = guide.channels();

  Tensor<T> wh(1, s.h, std::max(s.w - 1, 0)), wv(1, std::max(s.h - 1, 0), s.w);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x + 1 < s.w; ++x) {
      double e = 0;
      for (int c = 0; c < gc; ++c) {
        const double d = guide.at(c, y, x) - guide.at(c, y, x + 1);
        e += d * d;
      }
      wh.at(0, y, x) = static_cast<T>(std::exp(-e / denom));
    }
  for (int y = 0; y + 1 < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      double e = 0;
      for (int c = 0; c < gc; ++c) {
        const double d = guide.at(c, y, x) - guide.at(c, y + 1, x);
        e += d * d;
      }
      wv.at(0, y, x) = static_cast<T>(std::exp(-e / denom));
    }
  const T nh = s.w > 1 ? T(1) / T(static_cast<std::size_t>(s.c) * s.h * (s.w - 1)) : T(0);
  const T nv = s.h > 1 ? T(1) / T(static_cast<std::size_t>(s.c) * (s.h - 1) * s.w) : T(0);

  const Tensor<T>& L = illum.value();
  T acc_h = 0, acc_v = 0;
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x + 1 < s.w; ++x) acc_h += wh.at(0, y, x) * std::abs(L.at(c, y, x) - L.at(c, y, x + 1));
    for (int y = 0; y + 1 < s.h; ++y)
      for (int x = 0; x < s.w; ++x) acc_v += wv.at(0, y, x) * std::abs(L.at(c, y, x) - L.at(c, y + 1, x));
  }
  return ag::make_result<T>(
      Tensor<T>(1, 1, 1, acc_h * nh + acc_v * nv), {illum},
      [s, nh, nv, wh = std::move(wh), wv = std::move(wv)](const Tensor<T>& g, const std::vector<ag::Node<T>*>& p) {
        const Tensor<T>& L = p[0]->value;
        Tensor<T>& d = p[0]->grad_buffer();
        for (int c = 0; c < s.c; ++c) {
          for (int y = 0; y < s.h; ++y)
            for (int x = 0; x + 1 < s.w; ++x) {
              const T v = g[0] * nh * wh.at(0, y, x) * detail::sgn(L.at(c, y, x) - L.at(c, y, x + 1));
              d.at(c, y, x) += v;
              d.at(c, y, x + 1) -= v;
            }
          for (int y = 0; y + 1 < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
              const T v = g[0] * nv * wv.at(0, y, x) * detail::sgn(L.at(c, y, x) - L.at(c, y + 1, x));
              d.at(c, y, x) += v;
              d.at(c, y + 1, x) -= v;
            }
        }
      });
}

// Mean over non-overlapping patches of |mean gray - E|; gray is the channel mean.
template <typename T>
ag::Var<T> loss_exposure(const ag::Var<T>& enhanced, double level, int patch) {
  const Shape s = enhanced.shape();
  if (patch < 1 || s.h % patch || s.w % patch)
    throw ShapeError("loss_exposure: dims " + s.str() + " not divisible by patch " + std::to_string(patch));
  const int ph = s.h / patch, pw = s.w / patch;
  const T inv_area = T(1) / T(static_cast<std::size_t>(patch) * patch * s.c);
  std::vector<T> dev(static_cast<std::size_t>(ph) * pw, T(0));
  const Tensor<T>& x = enhanced.value();
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx) dev[(y / patch) * pw + xx / patch] += x.at(c, y, xx);
  T acc = 0;
  for (auto& v : dev) {
    v = v * inv_area - static_cast<T>(level);
    acc += std::abs(v);
  }
  const T inv_m = T(1) / T(dev.size());
  return ag::make_result<T>(Tensor<T>(1, 1, 1, acc * inv_m), {enhanced},
                            [s, patch, pw, inv_area, inv_m, dev = std::move(dev)](const Tensor<T>& g,
                                                                                  const std::vector<ag::Node<T>*>& p) {
                              Tensor<T>& d = p[0]->grad_buffer();
                              for (int c = 0; c < s.c; ++c)
                                for (int y = 0; y < s.h; ++y)
                                  for (int xx = 0; xx < s.w; ++xx)
                                    d.at(c, y, xx) +=
                                        g[0] * inv_m * inv_area * detail::sgn(dev[(y / patch) * pw + xx / patch]);
                            });
}

template <typename T>
struct DeblurLoss {
  ag::Var<T> total;
  T content = 0, msfr = 0, perceptual = 0;
};

template <typename T>
DeblurLoss<T> loss_deblur_total(const std::vector<ag::Var<T>>& preds, const std::vector<ag::Var<T>>& targets,
                                const DeblurLossWeights& w, const FeatureExtractor<T>& extractor) {
  DeblurLoss<T> out;
  const ag::Var<T> cont = loss_content(preds, targets);
  ag::Var<T> total = cont;
  out.content = cont.item();
  if (w.beta != 0) {
    const ag::Var<T> msfr = loss_msfr(preds, targets);
    out.msfr = msfr.item();
    total = ag::add(total, ag::scale(msfr, static_cast<T>(w.beta)));
  }
  if (w.gamma != 0) {
    const ag::Var<T> per = loss_perceptual(preds.back(), targets.back(), extractor);
    out.perceptual = per.item();
    total = ag::add(total, ag::scale(per, static_cast<T>(w.gamma)));
  }
  out.total = total;
  return out;
}

template <typename T>
struct IllumLoss {
  ag::Var<T> total;
  T fidelity = 0, smooth = 0, exposure = 0;
};

template <typename T>
IllumLoss<T> loss_illum_total(const ag::Var<T>& illum, const ag::Var<T>& enhanced, const ag::Var<T>& input,
                              const IllumLossWeights& w) {
  IllumLoss<T> out;
  const ag::Var<T> lf = loss_fidelity(illum, input);
  const ag::Var<T> ls = loss_smooth(illum, input.value(), w.sigma_w);
  const ag::Var<T> le = loss_exposure(enhanced, w.exposure_target, w.patch);
  out.fidelity = lf.item();
  out.smooth = ls.item();
  out.exposure = le.item();
  out.total = ag::add(ag::add(ag::scale(lf, static_cast<T>(w.alpha)), ls), le);
  return out;
}

}  // namespace uwf
