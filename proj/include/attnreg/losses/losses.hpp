#pragma once

// Training objectives: pixel losses for the mask head, L1 / interval-hinge
// losses for the ratio head, the cross-task consistency penalty, and the
// weighted composite that ties them together. Everything is autodiff-aware
// and numerically stable in logit space.

#include "attnreg/grading/grading.hpp"
#include "attnreg/nn/ops.hpp"

#include <functional>
#include <optional>

namespace attnreg::losses {

struct LossWeights {
  double alpha = 1.0;  // segmentation term
  double beta = 1.0;   // regression term
  double gamma = 0.1;  // consistency term
  double w_bce = 1.0;
  double w_dice = 1.0;
  double w_focal = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double dice_smooth = 1.0;

  void validate() const {
    for (double v : {alpha, beta, gamma, w_bce, w_dice, w_focal, focal_gamma})
      if (!(v >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
    if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0))
      throw std::invalid_argument("focal_alpha must lie in [0, 1]");
    if (!(dice_smooth > 0.0)) throw std::invalid_argument("dice_smooth must be > 0");
  }

  bool operator==(const LossWeights&) const = default;
};

namespace detail {

template <typename S>
void check_mask_pair(const nn::Tensor<S>& logits, const nn::Tensor<S>& gt) {
  if (logits.shape() != gt.shape())
    throw std::invalid_argument("seg loss: logits and mask shapes differ");
  if (!((gt.value() == S(0)) || (gt.value() == S(1))).all())
    throw std::invalid_argument("seg loss: ground-truth mask must be binary");
}

}  // namespace detail

// mean over pixels of softplus(z) - z*t, the stable form of binary cross
// entropy on logits
template <typename S>
nn::Tensor<S> bce_loss(const nn::Tensor<S>& logits, const nn::Tensor<S>& gt) {
  detail::check_mask_pair(logits, gt);
  return nn::vmean(nn::sub(nn::softplus(logits), nn::mul(logits, gt)));
}

// 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth) with p = sigmoid(z)
template <typename S>
nn::Tensor<S> dice_loss(const nn::Tensor<S>& logits, const nn::Tensor<S>& gt, double smooth) {
  detail::check_mask_pair(logits, gt);
  if (!(smooth > 0.0)) throw std::invalid_argument("dice loss: smooth must be > 0");
  auto p = nn::sigmoid(logits);
  auto inter = nn::vsum(nn::mul(p, gt));
  auto denom = nn::add_const(nn::add(nn::vsum(p), nn::vsum(gt)), S(smooth));
  auto dice = nn::div(nn::add_const(nn::scale(inter, S(2)), S(smooth)), denom);
  return nn::add_const(nn::neg(dice), S(1));
}

// mean over pixels of alpha_t * (1 - p_t)^gamma * (-log p_t), written in
// logit space: with z_t = z*(2t-1), p_t = sigmoid(z_t) and
// -log p_t = softplus(-z_t).
template <typename S>
nn::Tensor<S> focal_loss(const nn::Tensor<S>& logits, const nn::Tensor<S>& gt, double gamma,
                         double alpha) {
  detail::check_mask_pair(logits, gt);
  nn::ArrayX<S> sign = S(2) * gt.value() - S(1);
  nn::ArrayX<S> alpha_t = gt.value() * S(alpha) + (S(1) - gt.value()) * S(1 - alpha);
  auto neg_zt = nn::mul_array(logits, (-sign).eval());
  auto mod = nn::pow_const(nn::sigmoid(neg_zt), S(gamma));
  return nn::vmean(nn::mul_array(nn::mul(mod, nn::softplus(neg_zt)), alpha_t));
}

// weighted BCE + (1 - soft Dice) + focal; sub-terms with zero weight are
// skipped entirely
template <typename S>
nn::Tensor<S> seg_loss(const nn::Tensor<S>& logits, const nn::Tensor<S>& gt,
                       const LossWeights& w) {
  w.validate();
  detail::check_mask_pair(logits, gt);
  auto total = nn::Tensor<S>::scalar(S(0));
  if (w.w_bce != 0.0) total = nn::add(total, nn::scale(bce_loss(logits, gt), S(w.w_bce)));
  if (w.w_dice != 0.0)
    total = nn::add(total, nn::scale(dice_loss(logits, gt, w.dice_smooth), S(w.w_dice)));
  if (w.w_focal != 0.0)
    total = nn::add(total,
                    nn::scale(focal_loss(logits, gt, w.focal_gamma, w.focal_alpha), S(w.w_focal)));
  return total;
}

// hinge outside the closed grade interval: relu(lo - y) + relu(y - hi)
template <typename S>
nn::Tensor<S> range_loss(const nn::Tensor<S>& y_hat, grading::Grade grade) {
  if (y_hat.size() != 1) throw std::invalid_argument("range loss: y_hat must be scalar");
  const double v = double(y_hat.value()[0]);
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument("range loss: y_hat must lie in [0, 1]");
  const auto iv = grading::grade_to_interval(grade);
  auto below = nn::relu(nn::add_const(nn::neg(y_hat), S(iv.y_min)));
  auto above = nn::relu(nn::add_const(y_hat, S(-iv.y_max)));
  return nn::add(below, above);
}

// Per-sample regression target: exact ratio when pixel supervision exists,
// otherwise just the grade interval.
struct RegTarget {
  std::optional<double> ratio;
  std::optional<grading::Grade> grade;

  static RegTarget paired(double r) { return {r, std::nullopt}; }
  static RegTarget weak(grading::Grade g) { return {std::nullopt, g}; }
};

// paired -> |y_hat - ratio|; weak -> interval hinge
template <typename S>
nn::Tensor<S> reg_loss(const nn::Tensor<S>& y_hat, const RegTarget& target) {
  if (target.ratio) {
    if (y_hat.size() != 1) throw std::invalid_argument("reg loss: y_hat must be scalar");
    return nn::abs(nn::add_const(y_hat, S(-*target.ratio)));
  }
  if (target.grade) return range_loss(y_hat, *target.grade);
  throw std::invalid_argument("reg loss: sample carries neither ratio nor grade");
}

// |y_hat - clamp(soft_area / embryo_area, 0, 1)|, gradients into both heads
template <typename S>
nn::Tensor<S> consistency_loss(const nn::Tensor<S>& y_hat, const nn::Tensor<S>& mask_logits,
                               double embryo_area) {
  if (y_hat.size() != 1) throw std::invalid_argument("consistency loss: y_hat must be scalar");
  if (!(embryo_area > 0.0))
    throw std::invalid_argument("consistency loss: embryo area must be positive");
  auto soft_area = nn::vsum(nn::sigmoid(mask_logits));
  auto ratio = nn::clamp(nn::scale(soft_area, S(1.0 / embryo_area)), S(0), S(1));
  return nn::abs(nn::sub(y_hat, ratio));
}

// Lazy provider of one loss term; only invoked when its weight is nonzero.
template <typename S>
using LossTerm = std::function<nn::Tensor<S>()>;

// Composite objective plus the per-term values actually computed this step.
// A term skipped by a zero weight is recorded as absent, not as zero.
template <typename S>
struct TotalLoss {
  nn::Tensor<S> total;
  std::optional<double> seg;
  std::optional<double> reg;
  std::optional<double> cons;
};

template <typename S>
TotalLoss<S> total_loss(const LossTerm<S>& seg_term, const LossTerm<S>& reg_term,
                        const LossTerm<S>& cons_term, const LossWeights& w) {
  w.validate();
  TotalLoss<S> out;
  out.total = nn::Tensor<S>::scalar(S(0));
  auto accumulate = [&](double weight, const LossTerm<S>& term,
                        std::optional<double>& record, const char* label) {
    if (weight == 0.0) return;
    if (!term)
      throw std::invalid_argument(std::string("total loss: missing ") + label +
                                  " term with nonzero weight");
    auto value = term();
    record = double(value.value()[0]);
    out.total = nn::add(out.total, nn::scale(value, S(weight)));
  };
  accumulate(w.alpha, seg_term, out.seg, "segmentation");
  accumulate(w.beta, reg_term, out.reg, "regression");
  accumulate(w.gamma, cons_term, out.cons, "consistency");
  return out;
}

}  // namespace attnreg::losses
