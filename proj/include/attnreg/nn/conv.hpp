#pragma once

// Spatial ops on {C,H,W} tensors: convolution (im2col + GEMM), max pooling,
// group normalization, bilinear resize.

#include "attnreg/nn/ops.hpp"

#include <limits>

namespace attnreg::nn {

enum class Pad { zero, replicate };

inline int conv_out_size(int in, int k, int stride, int pad, int dilation) {
  const int eff = dilation * (k - 1) + 1;
  const int span = in + 2 * pad - eff;
  if (span < 0) throw std::invalid_argument("conv_out_size: kernel exceeds padded input");
  return span / stride + 1;
}

struct Conv2dSpec {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int dilation = 1;
  Pad pad_mode = Pad::zero;
};

namespace detail {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unfold {Cin,H,W} into a (Cin*K*K) x (Ho*Wo) matrix. Out-of-range taps are
// zero (Pad::zero) or clamped to the nearest edge pixel (Pad::replicate).
template <typename S>
Mat<S> im2col(const ArrayX<S>& x, int cin, int h, int w, const Conv2dSpec& sp, int ho, int wo) {
  const int kk = sp.kernel * sp.kernel;
  Mat<S> col(std::int64_t(cin) * kk, std::int64_t(ho) * wo);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const std::int64_t p = std::int64_t(oy) * wo + ox;
      for (int ky = 0; ky < sp.kernel; ++ky) {
        int iy = oy * sp.stride - sp.pad + ky * sp.dilation;
        for (int kx = 0; kx < sp.kernel; ++kx) {
          int ix = ox * sp.stride - sp.pad + kx * sp.dilation;
          int cy = iy, cx = ix;
          bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
          if (!inside && sp.pad_mode == Pad::replicate) {
            cy = std::min(std::max(iy, 0), h - 1);
            cx = std::min(std::max(ix, 0), w - 1);
            inside = true;
          }
          const std::int64_t krow = std::int64_t(ky) * sp.kernel + kx;
          for (int ci = 0; ci < cin; ++ci) {
            col(ci * kk + krow, p) =
                inside ? x[std::int64_t(ci) * h * w + std::int64_t(cy) * w + cx] : S(0);
          }
        }
      }
    }
  }
  return col;
}

// Scatter-add the unfolded gradient back onto the input grid (adjoint of
// im2col; replicate taps accumulate at the edge pixel they read).
template <typename S>
void col2im(const Mat<S>& dcol, ArrayX<S>& dx, int cin, int h, int w, const Conv2dSpec& sp,
            int ho, int wo) {
  const int kk = sp.kernel * sp.kernel;
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const std::int64_t p = std::int64_t(oy) * wo + ox;
      for (int ky = 0; ky < sp.kernel; ++ky) {
        int iy = oy * sp.stride - sp.pad + ky * sp.dilation;
        for (int kx = 0; kx < sp.kernel; ++kx) {
          int ix = ox * sp.stride - sp.pad + kx * sp.dilation;
          int cy = iy, cx = ix;
          bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
          if (!inside && sp.pad_mode == Pad::replicate) {
            cy = std::min(std::max(iy, 0), h - 1);
            cx = std::min(std::max(ix, 0), w - 1);
            inside = true;
          }
          if (!inside) continue;
          const std::int64_t krow = std::int64_t(ky) * sp.kernel + kx;
          for (int ci = 0; ci < cin; ++ci) {
            dx[std::int64_t(ci) * h * w + std::int64_t(cy) * w + cx] += dcol(ci * kk + krow, p);
          }
        }
      }
    }
  }
}

}  // namespace detail

// weight shape {Cout, Cin, K, K}; bias shape {Cout} or an empty tensor for none.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 const Conv2dSpec& sp) {
  using detail::Mat;
  using detail::RowMat;
  if (x.ndim() != 3 || w.ndim() != 4) throw std::invalid_argument("conv2d: bad ranks");
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0);
  if (w.dim(1) != cin || w.dim(2) != sp.kernel || w.dim(3) != sp.kernel)
    throw std::invalid_argument("conv2d: weight shape mismatch");
  const bool has_bias = b.ndim() == 1 && b.dim(0) == cout;
  if (!has_bias && b.size() != 0) throw std::invalid_argument("conv2d: bad bias");
  const int ho = conv_out_size(h, sp.kernel, sp.stride, sp.pad, sp.dilation);
  const int wo = conv_out_size(wd, sp.kernel, sp.stride, sp.pad, sp.dilation);
  const std::int64_t k = std::int64_t(cin) * sp.kernel * sp.kernel;
  const std::int64_t p = std::int64_t(ho) * wo;

  Mat<S> col = detail::im2col<S>(x.value(), cin, h, wd, sp, ho, wo);
  ArrayX<S> y(cout * p);
  {
    Eigen::Map<const RowMat<S>> wm(w.value().data(), cout, k);
    Eigen::Map<RowMat<S>> ym(y.data(), cout, p);
    ym.noalias() = wm * col;
    if (has_bias)
      for (int c = 0; c < cout; ++c) ym.row(c).array() += b.value()[c];
  }
  Tensor<S> out = Tensor<S>::from({cout, ho, wo}, std::move(y));

  auto px = x.ptr();
  auto pw = w.ptr();
  auto pb = b.ptr();
  attach<S>(out, {x, w, b},
            [px, pw, pb, sp, cin, h, wd, cout, ho, wo, k, p, has_bias](const ArrayX<S>& g,
                                                                       GradStore<S>& gs) {
    Eigen::Map<const RowMat<S>> gm(g.data(), cout, p);
    if (pw->requires_grad || px->requires_grad) {
      if (pw->requires_grad) {
        Mat<S> col = detail::im2col<S>(px->value, cin, h, wd, sp, ho, wo);
        Eigen::Map<RowMat<S>> dw(gs.of(pw.get()).data(), cout, k);
        dw.noalias() += gm * col.transpose();
      }
      if (px->requires_grad) {
        Eigen::Map<const RowMat<S>> wm(pw->value.data(), cout, k);
        Mat<S> dcol(k, p);
        dcol.noalias() = wm.transpose() * gm;
        detail::col2im<S>(dcol, gs.of(px.get()), cin, h, wd, sp, ho, wo);
      }
    }
    if (has_bias && pb->requires_grad) {
      ArrayX<S>& db = gs.of(pb.get());
      for (int c = 0; c < cout; ++c) db[c] += gm.row(c).sum();
    }
  });
  return out;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Conv2dSpec& sp) {
  return conv2d(x, w, Tensor<S>::zeros({0}), sp);
}

// Max pooling; out-of-range cells never win (treated as -inf).
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x, int kernel, int stride, int pad) {
  if (x.ndim() != 3) throw std::invalid_argument("maxpool2d: need {C,H,W}");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int ho = conv_out_size(h, kernel, stride, pad, 1);
  const int wo = conv_out_size(w, kernel, stride, pad, 1);
  ArrayX<S> y(std::int64_t(c) * ho * wo);
  std::vector<std::int64_t> arg(std::size_t(c) * ho * wo);
  for (int ci = 0; ci < c; ++ci) {
    const std::int64_t base_in = std::int64_t(ci) * h * w;
    const std::int64_t base_out = std::int64_t(ci) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        S best = -std::numeric_limits<S>::infinity();
        std::int64_t best_i = -1;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const std::int64_t i = base_in + std::int64_t(iy) * w + ix;
            if (x.value()[i] > best) {
              best = x.value()[i];
              best_i = i;
            }
          }
        }
        if (best_i < 0) throw std::invalid_argument("maxpool2d: empty window");
        y[base_out + std::int64_t(oy) * wo + ox] = best;
        arg[std::size_t(base_out + std::int64_t(oy) * wo + ox)] = best_i;
      }
    }
  }
  Tensor<S> out = Tensor<S>::from({c, ho, wo}, std::move(y));
  auto* px = x.impl();
  attach<S>(out, {x}, [px, arg = std::move(arg)](const ArrayX<S>& g, GradStore<S>& gs) {
    ArrayX<S>& dx = gs.of(px);
    for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += g[Eigen::Index(i)];
  });
  return out;
}

// Group normalization over {C,H,W}: statistics per group of C/groups channels,
// then per-channel affine. Deterministic and batch-free.
template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     int groups, S eps = S(1e-5)) {
  if (x.ndim() != 3) throw std::invalid_argument("group_norm: need {C,H,W}");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (c % groups != 0) throw std::invalid_argument("group_norm: channels % groups != 0");
  if (gamma.size() != c || beta.size() != c) throw std::invalid_argument("group_norm: affine size");
  const int cpg = c / groups;
  const std::int64_t hw = std::int64_t(h) * w;
  const std::int64_t gn = std::int64_t(cpg) * hw;

  ArrayX<S> xhat(x.size());
  ArrayX<S> inv_sd(groups);
  for (int g = 0; g < groups; ++g) {
    auto seg = x.value().segment(std::int64_t(g) * gn, gn);
    const S mu = seg.sum() / static_cast<S>(gn);
    const S var = (seg - mu).square().sum() / static_cast<S>(gn);
    inv_sd[g] = S(1) / std::sqrt(var + eps);
    xhat.segment(std::int64_t(g) * gn, gn) = (seg - mu) * inv_sd[g];
  }
  ArrayX<S> y(x.size());
  for (int ci = 0; ci < c; ++ci)
    y.segment(std::int64_t(ci) * hw, hw) =
        xhat.segment(std::int64_t(ci) * hw, hw) * gamma.value()[ci] + beta.value()[ci];

  Tensor<S> out = Tensor<S>::from(x.shape(), std::move(y));
  auto px = x.ptr();
  auto pg = gamma.ptr();
  auto pb = beta.ptr();
  attach<S>(out, {x, gamma, beta},
            [px, pg, pb, groups, cpg, hw, gn, xhat = std::move(xhat),
             inv_sd = std::move(inv_sd)](const ArrayX<S>& g, GradStore<S>& gs) {
    const int c = groups * cpg;
    if (pg->requires_grad) {
      ArrayX<S>& dgamma = gs.of(pg.get());
      for (int ci = 0; ci < c; ++ci)
        dgamma[ci] += (g.segment(std::int64_t(ci) * hw, hw) *
                       xhat.segment(std::int64_t(ci) * hw, hw)).sum();
    }
    if (pb->requires_grad) {
      ArrayX<S>& dbeta = gs.of(pb.get());
      for (int ci = 0; ci < c; ++ci) dbeta[ci] += g.segment(std::int64_t(ci) * hw, hw).sum();
    }
    if (px->requires_grad) {
      // dxhat = g * gamma (per channel); dx = s*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
      ArrayX<S> dxhat(g.size());
      for (int ci = 0; ci < c; ++ci)
        dxhat.segment(std::int64_t(ci) * hw, hw) =
            g.segment(std::int64_t(ci) * hw, hw) * pg->value[ci];
      ArrayX<S>& dx = gs.of(px.get());
      for (int gi = 0; gi < groups; ++gi) {
        auto dh = dxhat.segment(std::int64_t(gi) * gn, gn);
        auto xh = xhat.segment(std::int64_t(gi) * gn, gn);
        const S m1 = dh.sum() / static_cast<S>(gn);
        const S m2 = (dh * xh).sum() / static_cast<S>(gn);
        dx.segment(std::int64_t(gi) * gn, gn) += inv_sd[gi] * (dh - m1 - xh * m2);
      }
    }
  });
  return out;
}

namespace detail {

struct LerpTap {
  int lo, hi;   // source indices along one axis
  double t;     // weight of hi; lo gets (1-t)
};

inline std::vector<LerpTap> resize_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  const double r = double(in) / double(out);
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * r - 0.5;
    if (src < 0) src = 0;
    if (src > in - 1) src = in - 1;
    int lo = int(std::floor(src));
    int hi = std::min(lo + 1, in - 1);
    taps[d] = {lo, hi, src - lo};
  }
  return taps;
}

}  // namespace detail

// Bilinear resize with half-pixel sampling; same-size resize is the identity.
template <typename S>
Tensor<S> bilinear_resize(const Tensor<S>& x, int ho, int wo) {
  if (x.ndim() != 3) throw std::invalid_argument("bilinear_resize: need {C,H,W}");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto ty = detail::resize_taps(h, ho);
  const auto tx = detail::resize_taps(w, wo);
  ArrayX<S> y(std::int64_t(c) * ho * wo);
  for (int ci = 0; ci < c; ++ci) {
    const std::int64_t bi = std::int64_t(ci) * h * w;
    const std::int64_t bo = std::int64_t(ci) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const auto& ay = ty[oy];
      for (int ox = 0; ox < wo; ++ox) {
        const auto& ax = tx[ox];
        const S v00 = x.value()[bi + std::int64_t(ay.lo) * w + ax.lo];
        const S v01 = x.value()[bi + std::int64_t(ay.lo) * w + ax.hi];
        const S v10 = x.value()[bi + std::int64_t(ay.hi) * w + ax.lo];
        const S v11 = x.value()[bi + std::int64_t(ay.hi) * w + ax.hi];
        const S fy = S(ay.t), fx = S(ax.t);
        y[bo + std::int64_t(oy) * wo + ox] = (S(1) - fy) * ((S(1) - fx) * v00 + fx * v01) +
                                             fy * ((S(1) - fx) * v10 + fx * v11);
      }
    }
  }
  Tensor<S> out = Tensor<S>::from({c, ho, wo}, std::move(y));
  auto* px = x.impl();
  attach<S>(out, {x}, [px, c, h, w, ho, wo, ty, tx](const ArrayX<S>& g, GradStore<S>& gs) {
    ArrayX<S>& dx = gs.of(px);
    for (int ci = 0; ci < c; ++ci) {
      const std::int64_t bi = std::int64_t(ci) * h * w;
      const std::int64_t bo = std::int64_t(ci) * ho * wo;
      for (int oy = 0; oy < ho; ++oy) {
        const auto& ay = ty[oy];
        for (int ox = 0; ox < wo; ++ox) {
          const auto& ax = tx[ox];
          const S gv = g[bo + std::int64_t(oy) * wo + ox];
          const S fy = S(ay.t), fx = S(ax.t);
          dx[bi + std::int64_t(ay.lo) * w + ax.lo] += (S(1) - fy) * (S(1) - fx) * gv;
          dx[bi + std::int64_t(ay.lo) * w + ax.hi] += (S(1) - fy) * fx * gv;
          dx[bi + std::int64_t(ay.hi) * w + ax.lo] += fy * (S(1) - fx) * gv;
          dx[bi + std::int64_t(ay.hi) * w + ax.hi] += fy * fx * gv;
        }
      }
    }
  });
  return out;
}

}  // namespace attnreg::nn
