#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uwf/autograd.hpp"
#include "uwf/errors.hpp"
#include "uwf/tensor.hpp"

// Differentiable primitives over planar tensors.
namespace uwf::ag {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src, T scale = T(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  a.value().require_same(b.value(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    for (auto* n : p)
      if (wants(n)) detail::add_into(n->grad_buffer(), g);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  a.value().require_same(b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    if (wants(p[0])) detail::add_into(p[0]->grad_buffer(), g);
    if (wants(p[1])) detail::add_into(p[1]->grad_buffer(), g, T(-1));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  a.value().require_same(b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    if (wants(p[0])) {
      auto& d = p[0]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * p[1]->value[i];
    }
    if (wants(p[1])) {
      auto& d = p[1]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * p[0]->value[i];
    }
  });
}

template <typename T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  a.value().require_same(b.value(), "divide");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    const auto& av = p[0]->value;
    const auto& bv = p[1]->value;
    if (wants(p[0])) {
      auto& d = p[0]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] / bv[i];
    }
    if (wants(p[1])) {
      auto& d = p[1]->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= s;
  return make_result<T>(std::move(out), {a}, [s](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    detail::add_into(p[0]->grad_buffer(), g, s);
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(out), {a}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    auto& d = p[0]->grad_buffer();
    const auto& x = p[0]->value;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x[i] > T(0)) d[i] += g[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = T(1) / (T(1) + std::exp(-v));
  auto res = make_result<T>(std::move(out), {a}, nullptr);
  if (res.requires_grad()) {
    Node<T>* self = res.raw();
    self->backward = [self](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
      auto& d = p[0]->grad_buffer();
      const auto& y = self->value;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * y[i] * (T(1) - y[i]);
    };
  }
  return res;
}

// Gradient passes where lo <= x <= hi.
template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v = std::clamp(v, lo, hi);
  return make_result<T>(std::move(out), {a}, [lo, hi](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    auto& d = p[0]->grad_buffer();
    const auto& x = p[0]->value;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (x[i] >= lo && x[i] <= hi) d[i] += g[i];
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const int h = xs[0].shape().h, w = xs[0].shape().w;
  int c = 0;
  for (const auto& x : xs) {
    if (x.shape().h != h || x.shape().w != w) throw ShapeError("concat_channels: spatial mismatch");
    c += x.shape().c;
  }
  if (xs.size() == 1) return xs[0];
  Tensor<T> out(c, h, w);
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.value().vec().begin(), x.value().vec().end(), out.vec().begin() + off);
    off += x.value().size();
  }
  return make_result<T>(std::move(out), xs, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    std::size_t o = 0;
    for (auto* n : p) {
      const std::size_t len = n->value.size();
      if (wants(n)) {
        auto& d = n->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) d[i] += g[o + i];
      }
      o += len;
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count < 1 || begin + count > s.c) throw ShapeError("slice_channels: range out of bounds");
  Tensor<T> out(count, s.h, s.w);
  const std::size_t off = static_cast<std::size_t>(begin) * s.plane();
  std::copy_n(x.value().data() + off, out.size(), out.data());
  return make_result<T>(std::move(out), {x}, [off](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    auto& d = p[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) d[off + i] += g[i];
  });
}

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, int k, int stride, int pad, int ho, int wo, T* cols) {
  const int cin = x.channels(), h = x.height(), w = x.width();
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    const T* src = x.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* line = src + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int x0 = kx - pad;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox + x0;
              dst[ox] = (ix >= 0 && ix < w) ? line[ix] : T(0);
            }
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              dst[ox] = (ix >= 0 && ix < w) ? line[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, int k, int stride, int pad, int ho, int wo, Tensor<T>& dx) {
  const int cin = dx.channels(), h = dx.height(), w = dx.width();
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    T* dst = dx.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* line = dst + static_cast<std::size_t>(iy) * w;
          const T* srow = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) line[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Zero-padded 2D cross-correlation. weight shape (cout, cin, k*k), bias
// shape (cout, 1, 1).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvGeometry geo) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int k = geo.kernel;
  if (ws.h != xs.c || ws.w != k * k)
    throw ShapeError("conv2d: weight " + ws.str() + " does not match input " + xs.str());
  if (bias.shape().c != ws.c) throw ShapeError("conv2d: bias size mismatch");
  const int ho = (xs.h + 2 * geo.pad - k) / geo.stride + 1;
  const int wo = (xs.w + 2 * geo.pad - k) / geo.stride + 1;
  if (ho < 1 || wo < 1) throw ShapeError("conv2d: input smaller than kernel");
  const int cout = ws.c;
  const int kk = xs.c * k * k;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  const bool pointwise = (k == 1 && geo.stride == 1 && geo.pad == 0);

  std::vector<T> cols;
  if (!pointwise) {
    cols.resize(static_cast<std::size_t>(kk) * n);
    detail::im2col(x.value(), k, geo.stride, geo.pad, ho, wo, cols.data());
  }
  const T* colp = pointwise ? x.value().data() : cols.data();

  Tensor<T> out(cout, ho, wo);
  {
    detail::CMapMat<T> wm(weight.value().data(), cout, kk);
    detail::CMapMat<T> cm(colp, kk, static_cast<Eigen::Index>(n));
    detail::MapMat<T> om(out.data(), cout, static_cast<Eigen::Index>(n));
    om.noalias() = wm * cm;
    for (int o = 0; o < cout; ++o) om.row(o).array() += bias.value()[o];
  }

  return make_result<T>(
      std::move(out), {x, weight, bias},
      [geo, ho, wo, kk, cout, n, pointwise, cols = std::move(cols)](const Tensor<T>& g,
                                                                    const std::vector<Node<T>*>& p) {
        detail::CMapMat<T> gm(g.data(), cout, static_cast<Eigen::Index>(n));
        const T* colp = pointwise ? p[0]->value.data() : cols.data();
        detail::CMapMat<T> cm(colp, kk, static_cast<Eigen::Index>(n));
        if (wants(p[1])) {
          detail::MapMat<T> dw(p[1]->grad_buffer().data(), cout, kk);
          dw.noalias() += gm * cm.transpose();
        }
        if (wants(p[2])) {
          auto& db = p[2]->grad_buffer();
          // Plain loop: Eigen's vectorized sum peels by address, which breaks run-to-run reproducibility.
          for (int o = 0; o < cout; ++o) {
            T acc = 0;
            for (Eigen::Index j = 0; j < gm.cols(); ++j) acc += gm(o, j);
            db[o] += acc;
          }
        }
        if (wants(p[0])) {
          detail::CMapMat<T> wm(p[1]->value.data(), cout, kk);
          auto& dx = p[0]->grad_buffer();
          if (pointwise) {
            detail::MapMat<T> dxm(dx.data(), kk, static_cast<Eigen::Index>(n));
            dxm.noalias() += wm.transpose() * gm;
          } else {
            detail::RowMat<T> dcols = wm.transpose() * gm;
            detail::col2im(dcols.data(), geo.kernel, geo.stride, geo.pad, ho, wo, dx);
          }
        }
      });
}

// Non-overlapping k x k mean pooling; dims must be divisible by k.
template <typename T>
Var<T> avg_pool(const Var<T>& x, int k) {
  const Shape s = x.shape();
  if (k < 1) throw ShapeError("avg_pool: pool must be >= 1");
  if (s.h % k || s.w % k) throw ShapeError("avg_pool: dims " + s.str() + " not divisible by pool");
  if (k == 1) return x;
  const int ho = s.h / k, wo = s.w / k;
  const T inv = T(1) / T(k * k);
  Tensor<T> out(s.c, ho, wo);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx) out.at(c, y / k, xx / k) += x.value().at(c, y, xx);
  for (auto& v : out.vec()) v *= inv;
  return make_result<T>(std::move(out), {x}, [k, inv](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    auto& d = p[0]->grad_buffer();
    for (int c = 0; c < d.channels(); ++c)
      for (int y = 0; y < d.height(); ++y)
        for (int xx = 0; xx < d.width(); ++xx) d.at(c, y, xx) += inv * g.at(c, y / k, xx / k);
  });
}

namespace detail {

struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

// Half-pixel-center source coordinates (align_corners = false).
inline std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace detail

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int oh, int ow) {
  const auto ty = detail::bilinear_taps(x.height(), oh);
  const auto tx = detail::bilinear_taps(x.width(), ow);
  Tensor<T> out(x.channels(), oh, ow);
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < oh; ++y) {
      const T wy = static_cast<T>(ty[y].w1);
      for (int xx = 0; xx < ow; ++xx) {
        const T wx = static_cast<T>(tx[xx].w1);
        const T top = x.at(c, ty[y].i0, tx[xx].i0) * (T(1) - wx) + x.at(c, ty[y].i0, tx[xx].i1) * wx;
        const T bot = x.at(c, ty[y].i1, tx[xx].i0) * (T(1) - wx) + x.at(c, ty[y].i1, tx[xx].i1) * wx;
        out.at(c, y, xx) = top * (T(1) - wy) + bot * wy;
      }
    }
  return out;
}

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int oh, int ow) {
  if (x.shape().h == oh && x.shape().w == ow) return x;
  Tensor<T> out = bilinear_resize(x.value(), oh, ow);
  return make_result<T>(std::move(out), {x}, [oh, ow](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    auto& d = p[0]->grad_buffer();
    const auto ty = detail::bilinear_taps(d.height(), oh);
    const auto tx = detail::bilinear_taps(d.width(), ow);
    for (int c = 0; c < d.channels(); ++c)
      for (int y = 0; y < oh; ++y) {
        const T wy = static_cast<T>(ty[y].w1);
        for (int xx = 0; xx < ow; ++xx) {
          const T wx = static_cast<T>(tx[xx].w1);
          const T gv = g.at(c, y, xx);
          d.at(c, ty[y].i0, tx[xx].i0) += gv * (T(1) - wy) * (T(1) - wx);
          d.at(c, ty[y].i0, tx[xx].i1) += gv * (T(1) - wy) * wx;
          d.at(c, ty[y].i1, tx[xx].i0) += gv * wy * (T(1) - wx);
          d.at(c, ty[y].i1, tx[xx].i1) += gv * wy * wx;
        }
      }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(s.c, 1, 1);
  for (int c = 0; c < s.c; ++c) {
    T acc = 0;
    const T* p = x.value().channel(c);
    for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
    out[c] = acc / T(s.plane());
  }
  return make_result<T>(std::move(out), {x}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    auto& d = p[0]->grad_buffer();
    const std::size_t plane = d.shape().plane();
    for (int c = 0; c < d.channels(); ++c) {
      const T v = g[c] / T(plane);
      T* dp = d.channel(c);
      for (std::size_t i = 0; i < plane; ++i) dp[i] += v;
    }
  });
}

template <typename T>
Var<T> global_max_pool(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(s.c, 1, 1);
  std::vector<std::size_t> arg(s.c);
  for (int c = 0; c < s.c; ++c) {
    const T* p = x.value().channel(c);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.plane(); ++i)
      if (p[i] > p[best]) best = i;
    arg[c] = best;
    out[c] = p[best];
  }
  return make_result<T>(std::move(out), {x},
                        [arg = std::move(arg)](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
                          auto& d = p[0]->grad_buffer();
                          for (int c = 0; c < d.channels(); ++c) d.channel(c)[arg[c]] += g[c];
                        });
}

// x (C, H, W) times per-channel gate (C, 1, 1).
template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& gate) {
  const Shape s = x.shape();
  if (gate.shape() != Shape{s.c, 1, 1}) throw ShapeError("scale_channels: gate shape mismatch");
  Tensor<T> out = x.value();
  for (int c = 0; c < s.c; ++c) {
    T* p = out.channel(c);
    for (std::size_t i = 0; i < s.plane(); ++i) p[i] *= gate.value()[c];
  }
  return make_result<T>(std::move(out), {x, gate}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    const auto& xv = p[0]->value;
    const auto& gv = p[1]->value;
    const std::size_t plane = xv.shape().plane();
    if (wants(p[0])) {
      auto& d = p[0]->grad_buffer();
      for (int c = 0; c < xv.channels(); ++c)
        for (std::size_t i = 0; i < plane; ++i) d.channel(c)[i] += g.channel(c)[i] * gv[c];
    }
    if (wants(p[1])) {
      auto& d = p[1]->grad_buffer();
      for (int c = 0; c < xv.channels(); ++c) {
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += g.channel(c)[i] * xv.channel(c)[i];
        d[c] += acc;
      }
    }
  });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().vec()) acc += v;
  return make_result<T>(Tensor<T>(1, 1, 1, acc), {x}, [](const Tensor<T>& g, const std::vector<Node<T>*>& p) {
    auto& d = p[0]->grad_buffer();
    for (auto& v : d.vec()) v += g[0];
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  return scale(sum_all(x), T(1) / T(x.value().size()));
}

}  // namespace uwf::ag
