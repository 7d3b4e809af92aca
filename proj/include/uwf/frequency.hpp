#pragma once

#include <string>

#include "uwf/autograd.hpp"
#include "uwf/errors.hpp"
#include "uwf/ops.hpp"
#include "uwf/tensor.hpp"

namespace uwf {

template <typename T>
struct FrequencyPair {
  Tensor<T> low;
  Tensor<T> high;
};

// Four orthonormal Haar sub-bands, each (C, H/2, W/2).
template <typename T>
struct WaveletBands {
  Tensor<T> ll, lh, hl, hh;
};

// Average-pooling separation: low = upsample(avgpool(x)), high = x - low.
template <typename T>
ag::Var<T> aps_low(const ag::Var<T>& x, int pool) {
  if (pool < 1) throw ShapeError("aps: pool must be >= 1");
  const Shape s = x.shape();
  if (s.h % pool || s.w % pool) throw ShapeError("aps: dims " + s.str() + " not divisible by pool");
  return ag::bilinear_resize(ag::avg_pool(x, pool), s.h, s.w);
}

template <typename T>
FrequencyPair<T> aps_decompose(const Tensor<T>& x, int pool) {
  ag::NoGradGuard ng;
  auto low = aps_low(ag::constant(x), pool);
  Tensor<T> high = x;
  for (std::size_t i = 0; i < high.size(); ++i) high[i] -= low.value()[i];
  return {low.value(), std::move(high)};
}

namespace detail {

template <typename T>
void check_even(const Shape& s, const char* what) {
  if (s.h % 2 || s.w % 2 || s.h < 2 || s.w < 2)
    throw ShapeError(std::string(what) + ": dims " + s.str() + " must be even");
}

// Forward Haar on stacked layout: output channels [ll | lh | hl | hh].
template <typename T>
Tensor<T> haar_forward_stacked(const Tensor<T>& x) {
  const Shape s = x.shape();
  check_even<T>(s, "dwt_forward");
  const int h2 = s.h / 2, w2 = s.w / 2;
  Tensor<T> out(4 * s.c, h2, w2);
  const T half = T(0.5);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < h2; ++y)
      for (int xx = 0; xx < w2; ++xx) {
        const T a = x.at(c, 2 * y, 2 * xx), b = x.at(c, 2 * y, 2 * xx + 1);
        const T cc = x.at(c, 2 * y + 1, 2 * xx), d = x.at(c, 2 * y + 1, 2 * xx + 1);
        out.at(c, y, xx) = half * (a + b + cc + d);
        out.at(s.c + c, y, xx) = half * (cc + d - a - b);
        out.at(2 * s.c + c, y, xx) = half * (b + d - a - cc);
        out.at(3 * s.c + c, y, xx) = half * (a + d - b - cc);
      }
  return out;
}

template <typename T>
Tensor<T> haar_inverse_stacked(const Tensor<T>& bands) {
  const Shape s = bands.shape();
  if (s.c % 4) throw ShapeError("dwt_inverse: stacked channel count must be a multiple of 4");
  const int c4 = s.c / 4;
  Tensor<T> out(c4, 2 * s.h, 2 * s.w);
  const T half = T(0.5);
  for (int c = 0; c < c4; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx) {
        const T ll = bands.at(c, y, xx), lh = bands.at(c4 + c, y, xx);
        const T hl = bands.at(2 * c4 + c, y, xx), hh = bands.at(3 * c4 + c, y, xx);
        out.at(c, 2 * y, 2 * xx) = half * (ll - lh - hl + hh);
        out.at(c, 2 * y, 2 * xx + 1) = half * (ll - lh + hl - hh);
        out.at(c, 2 * y + 1, 2 * xx) = half * (ll + lh - hl - hh);
        out.at(c, 2 * y + 1, 2 * xx + 1) = half * (ll + lh + hl + hh);
      }
  return out;
}

}  // namespace detail

template <typename T>
WaveletBands<T> dwt_forward(const Tensor<T>& x) {
  const Tensor<T> st = detail::haar_forward_stacked(x);
  const int c = x.channels();
  WaveletBands<T> b{Tensor<T>(c, st.height(), st.width()), Tensor<T>(c, st.height(), st.width()),
                    Tensor<T>(c, st.height(), st.width()), Tensor<T>(c, st.height(), st.width())};
  const std::size_t n = b.ll.size();
  std::copy_n(st.data(), n, b.ll.data());
  std::copy_n(st.data() + n, n, b.lh.data());
  std::copy_n(st.data() + 2 * n, n, b.hl.data());
  std::copy_n(st.data() + 3 * n, n, b.hh.data());
  return b;
}

template <typename T>
Tensor<T> dwt_inverse(const WaveletBands<T>& b) {
  const Shape s = b.ll.shape();
  if (!(b.lh.shape() == s && b.hl.shape() == s && b.hh.shape() == s))
    throw ShapeError("dwt_inverse: sub-band shapes differ");
  Tensor<T> st(4 * s.c, s.h, s.w);
  const std::size_t n = b.ll.size();
  std::copy_n(b.ll.data(), n, st.data());
  std::copy_n(b.lh.data(), n, st.data() + n);
  std::copy_n(b.hl.data(), n, st.data() + 2 * n);
  std::copy_n(b.hh.data(), n, st.data() + 3 * n);
  return detail::haar_inverse_stacked(st);
}

// Differentiable versions on the stacked layout. The transform is orthonormal,
// so each direction's adjoint is the other direction.
template <typename T>
ag::Var<T> dwt_forward(const ag::Var<T>& x) {
  return ag::make_result<T>(detail::haar_forward_stacked(x.value()), {x},
                            [](const Tensor<T>& g, const std::vector<ag::Node<T>*>& p) {
                              p[0]->grad_buffer() += detail::haar_inverse_stacked(g);
                            });
}

template <typename T>
ag::Var<T> dwt_inverse(const ag::Var<T>& stacked) {
  return ag::make_result<T>(detail::haar_inverse_stacked(stacked.value()), {stacked},
                            [](const Tensor<T>& g, const std::vector<ag::Node<T>*>& p) {
                              p[0]->grad_buffer() += detail::haar_forward_stacked(g);
                            });
}

// Repeated 2x2 mean pooling; equals half-pixel bilinear downsampling by 2^levels.
template <typename T>
ag::Var<T> downsample_pow2(const ag::Var<T>& x, int levels) {
  ag::Var<T> y = x;
  for (int i = 0; i < levels; ++i) y = ag::avg_pool(y, 2);
  return y;
}

}  // namespace uwf
