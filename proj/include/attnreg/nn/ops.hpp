#pragma once

// Elementwise / reduction / affine primitives on Tensor<S>.
// Free functions; every op wires its own backward closure.

#include "attnreg/nn/tensor.hpp"

#include <cmath>

namespace attnreg::nn {

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "add");
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value() + b.value());
  auto* pa = a.impl();
  auto* pb = b.impl();
  attach<S>(out, {a, b}, [pa, pb](const ArrayX<S>& g, GradStore<S>& gs) {
    if (pa->requires_grad) gs.of(pa) += g;
    if (pb->requires_grad) gs.of(pb) += g;
  });
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "sub");
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value() - b.value());
  auto* pa = a.impl();
  auto* pb = b.impl();
  attach<S>(out, {a, b}, [pa, pb](const ArrayX<S>& g, GradStore<S>& gs) {
    if (pa->requires_grad) gs.of(pa) += g;
    if (pb->requires_grad) gs.of(pb) -= g;
  });
  return out;
}

// element-count-preserving shape change; data and gradients pass through
template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: element count must be preserved");
  Tensor<S> out = Tensor<S>::from(std::move(shape), a.value());
  auto* pa = a.impl();
  attach<S>(out, {a}, [pa](const ArrayX<S>& g, GradStore<S>& gs) {
    if (pa->requires_grad) gs.of(pa) += g;
  });
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "mul");
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value() * b.value());
  auto pa = a.ptr();
  auto pb = b.ptr();
  attach<S>(out, {a, b}, [pa, pb](const ArrayX<S>& g, GradStore<S>& gs) {
    if (pa->requires_grad) gs.of(pa.get()) += g * pb->value;
    if (pb->requires_grad) gs.of(pb.get()) += g * pa->value;
  });
  return out;
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "div");
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value() / b.value());
  auto pa = a.ptr();
  auto pb = b.ptr();
  attach<S>(out, {a, b}, [pa, pb](const ArrayX<S>& g, GradStore<S>& gs) {
    if (pa->requires_grad) gs.of(pa.get()) += g / pb->value;
    if (pb->requires_grad) gs.of(pb.get()) -= g * pa->value / (pb->value * pb->value);
  });
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value() * c);
  auto* pa = a.impl();
  attach<S>(out, {a}, [pa, c](const ArrayX<S>& g, GradStore<S>& gs) { gs.of(pa) += g * c; });
  return out;
}

template <typename S>
Tensor<S> add_const(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value() + c);
  auto* pa = a.impl();
  attach<S>(out, {a}, [pa](const ArrayX<S>& g, GradStore<S>& gs) { gs.of(pa) += g; });
  return out;
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return scale(a, S(-1));
}

// Elementwise product with constant (non-differentiated) data, e.g. masks.
template <typename S>
Tensor<S> mul_array(const Tensor<S>& a, const ArrayX<S>& k) {
  if (a.size() != k.size()) throw std::invalid_argument("mul_array: size mismatch");
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value() * k);
  auto* pa = a.impl();
  attach<S>(out, {a}, [pa, k](const ArrayX<S>& g, GradStore<S>& gs) { gs.of(pa) += g * k; });
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value().max(S(0)));
  auto pa = a.ptr();
  attach<S>(out, {a}, [pa](const ArrayX<S>& g, GradStore<S>& gs) {
    gs.of(pa.get()) += (pa->value > S(0)).select(g, ArrayX<S>::Zero(g.size()));
  });
  return out;
}

template <typename S>
inline ArrayX<S> sigmoid_values(const ArrayX<S>& x) {
  // Stable in both tails.
  return (x >= S(0)).select(S(1) / (S(1) + (-x).exp()), x.exp() / (S(1) + x.exp()));
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  ArrayX<S> y = sigmoid_values<S>(a.value());
  Tensor<S> out = Tensor<S>::from(a.shape(), std::move(y));
  auto* pa = a.impl();
  // raw pointer on purpose: capturing out's shared_ptr in out's own backward
  // fn would be a reference cycle, immortalizing the whole upstream graph
  auto* po = out.impl();
  attach<S>(out, {a}, [pa, po](const ArrayX<S>& g, GradStore<S>& gs) {
    gs.of(pa) += g * po->value * (S(1) - po->value);
  });
  return out;
}

// softplus(x) = log(1 + e^x), evaluated without overflow; d/dx = sigmoid(x).
template <typename S>
Tensor<S> softplus(const Tensor<S>& a) {
  ArrayX<S> y = a.value().max(S(0)) + (S(1) + (-a.value().abs()).exp()).log();
  Tensor<S> out = Tensor<S>::from(a.shape(), std::move(y));
  auto pa = a.ptr();
  attach<S>(out, {a}, [pa](const ArrayX<S>& g, GradStore<S>& gs) {
    gs.of(pa.get()) += g * sigmoid_values<S>(pa->value);
  });
  return out;
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value().log());
  auto pa = a.ptr();
  attach<S>(out, {a}, [pa](const ArrayX<S>& g, GradStore<S>& gs) {
    gs.of(pa.get()) += g / pa->value;
  });
  return out;
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value().exp());
  auto* pa = a.impl();
  auto* po = out.impl();  // raw: out's backward must not own out (cycle)
  attach<S>(out, {a}, [pa, po](const ArrayX<S>& g, GradStore<S>& gs) {
    gs.of(pa) += g * po->value;
  });
  return out;
}

template <typename S>
Tensor<S> pow_const(const Tensor<S>& a, S p) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value().pow(p));
  auto pa = a.ptr();
  attach<S>(out, {a}, [pa, p](const ArrayX<S>& g, GradStore<S>& gs) {
    gs.of(pa.get()) += g * p * pa->value.pow(p - S(1));
  });
  return out;
}

// |x|; the subgradient at 0 is taken as 0.
template <typename S>
Tensor<S> abs(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value().abs());
  auto pa = a.ptr();
  attach<S>(out, {a}, [pa](const ArrayX<S>& g, GradStore<S>& gs) {
    gs.of(pa.get()) += g * pa->value.sign();
  });
  return out;
}

// clamp to [lo, hi]; gradient passes through the closed interval only.
template <typename S>
Tensor<S> clamp(const Tensor<S>& a, S lo, S hi) {
  Tensor<S> out = Tensor<S>::from(a.shape(), a.value().max(lo).min(hi));
  auto pa = a.ptr();
  attach<S>(out, {a}, [pa, lo, hi](const ArrayX<S>& g, GradStore<S>& gs) {
    auto pass = (pa->value >= lo) && (pa->value <= hi);
    gs.of(pa.get()) += pass.select(g, ArrayX<S>::Zero(g.size()));
  });
  return out;
}

template <typename S>
Tensor<S> vsum(const Tensor<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().sum());
  auto* pa = a.impl();
  attach<S>(out, {a}, [pa](const ArrayX<S>& g, GradStore<S>& gs) { gs.of(pa) += g[0]; });
  return out;
}

template <typename S>
Tensor<S> vmean(const Tensor<S>& a) {
  const S n = static_cast<S>(a.size());
  Tensor<S> out = Tensor<S>::scalar(a.value().sum() / n);
  auto* pa = a.impl();
  attach<S>(out, {a}, [pa, n](const ArrayX<S>& g, GradStore<S>& gs) { gs.of(pa) += g[0] / n; });
  return out;
}

// y = W x + b with W of shape {M, N} (row-major), x {N}, b {M}.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  if (w.ndim() != 2 || x.ndim() != 1 || b.ndim() != 1)
    throw std::invalid_argument("linear: bad ranks");
  const int m = w.dim(0), n = w.dim(1);
  if (x.dim(0) != n || b.dim(0) != m) throw std::invalid_argument("linear: size mismatch");
  Eigen::Map<const RowMat> wm(w.value().data(), m, n);
  Eigen::Map<const Vec> xv(x.value().data(), n);
  ArrayX<S> y(m);
  Eigen::Map<Vec>(y.data(), m) = wm * xv + Eigen::Map<const Vec>(b.value().data(), m);
  Tensor<S> out = Tensor<S>::from({m}, std::move(y));
  auto px = x.ptr();
  auto pw = w.ptr();
  auto pb = b.ptr();
  attach<S>(out, {x, w, b}, [px, pw, pb, m, n](const ArrayX<S>& g, GradStore<S>& gs) {
    Eigen::Map<const Vec> gv(g.data(), m);
    Eigen::Map<const RowMat> wm(pw->value.data(), m, n);
    if (pw->requires_grad) {
      Eigen::Map<RowMat> dw(gs.of(pw.get()).data(), m, n);
      dw.noalias() += gv * Eigen::Map<const Vec>(px->value.data(), n).transpose();
    }
    if (px->requires_grad) {
      Eigen::Map<Vec> dx(gs.of(px.get()).data(), n);
      dx.noalias() += wm.transpose() * gv;
    }
    if (pb->requires_grad) {
      Eigen::Map<Vec>(gs.of(pb.get()).data(), m) += gv;
    }
  });
  return out;
}

// Concatenate along the channel axis: {Ca,H,W}+{Cb,H,W} or {Na}+{Nb}.
template <typename S>
Tensor<S> concat(const Tensor<S>& a, const Tensor<S>& b) {
  Shape out_shape;
  if (a.ndim() == 3 && b.ndim() == 3) {
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
      throw std::invalid_argument("concat: spatial mismatch");
    out_shape = {a.dim(0) + b.dim(0), a.dim(1), a.dim(2)};
  } else if (a.ndim() == 1 && b.ndim() == 1) {
    out_shape = {a.dim(0) + b.dim(0)};
  } else {
    throw std::invalid_argument("concat: unsupported ranks");
  }
  ArrayX<S> v(a.size() + b.size());
  v.head(a.size()) = a.value();
  v.tail(b.size()) = b.value();
  Tensor<S> out = Tensor<S>::from(std::move(out_shape), std::move(v));
  auto* pa = a.impl();
  auto* pb = b.impl();
  const auto na = a.size();
  const auto nb = b.size();
  attach<S>(out, {a, b}, [pa, pb, na, nb](const ArrayX<S>& g, GradStore<S>& gs) {
    if (pa->requires_grad) gs.of(pa) += g.head(na);
    if (pb->requires_grad) gs.of(pb) += g.tail(nb);
  });
  return out;
}

// Spatial mean of a {C,H,W} map -> {C}.
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.ndim() != 3) throw std::invalid_argument("global_avg_pool: need {C,H,W}");
  const int c = x.dim(0);
  const std::int64_t hw = std::int64_t(x.dim(1)) * x.dim(2);
  ArrayX<S> y(c);
  for (int i = 0; i < c; ++i) y[i] = x.value().segment(i * hw, hw).sum() / static_cast<S>(hw);
  Tensor<S> out = Tensor<S>::from({c}, std::move(y));
  auto* px = x.impl();
  attach<S>(out, {x}, [px, c, hw](const ArrayX<S>& g, GradStore<S>& gs) {
    ArrayX<S>& dx = gs.of(px);
    for (int i = 0; i < c; ++i) dx.segment(i * hw, hw) += g[i] / static_cast<S>(hw);
  });
  return out;
}

// Tile a vector {C} over a spatial grid -> {C,H,W}; every position gets the
// identical vector.
template <typename S>
Tensor<S> broadcast_spatial(const Tensor<S>& v, int h, int w) {
  if (v.ndim() != 1) throw std::invalid_argument("broadcast_spatial: need {C}");
  const int c = v.dim(0);
  const std::int64_t hw = std::int64_t(h) * w;
  ArrayX<S> y(c * hw);
  for (int i = 0; i < c; ++i) y.segment(i * hw, hw) = v.value()[i];
  Tensor<S> out = Tensor<S>::from({c, h, w}, std::move(y));
  auto* pv = v.impl();
  attach<S>(out, {v}, [pv, c, hw](const ArrayX<S>& g, GradStore<S>& gs) {
    ArrayX<S>& dv = gs.of(pv);
    for (int i = 0; i < c; ++i) dv[i] += g.segment(i * hw, hw).sum();
  });
  return out;
}

// Gate a {C,H,W} map by a single-channel {1,H,W} map, broadcast over C.
template <typename S>
Tensor<S> channel_broadcast_mul(const Tensor<S>& gate, const Tensor<S>& x) {
  if (gate.ndim() != 3 || gate.dim(0) != 1 || x.ndim() != 3)
    throw std::invalid_argument("channel_broadcast_mul: need {1,H,W} x {C,H,W}");
  if (gate.dim(1) != x.dim(1) || gate.dim(2) != x.dim(2))
    throw std::invalid_argument("channel_broadcast_mul: spatial mismatch");
  const int c = x.dim(0);
  const std::int64_t hw = std::int64_t(x.dim(1)) * x.dim(2);
  ArrayX<S> y(x.size());
  for (int i = 0; i < c; ++i)
    y.segment(i * hw, hw) = x.value().segment(i * hw, hw) * gate.value();
  Tensor<S> out = Tensor<S>::from(x.shape(), std::move(y));
  auto pg = gate.ptr();
  auto px = x.ptr();
  attach<S>(out, {gate, x}, [pg, px, c, hw](const ArrayX<S>& g, GradStore<S>& gs) {
    if (pg->requires_grad) {
      ArrayX<S>& dg = gs.of(pg.get());
      for (int i = 0; i < c; ++i) dg += g.segment(i * hw, hw) * px->value.segment(i * hw, hw);
    }
    if (px->requires_grad) {
      ArrayX<S>& dx = gs.of(px.get());
      for (int i = 0; i < c; ++i) dx.segment(i * hw, hw) += g.segment(i * hw, hw) * pg->value;
    }
  });
  return out;
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator*(S c, const Tensor<S>& a) { return scale(a, c); }

}  // namespace attnreg::nn
