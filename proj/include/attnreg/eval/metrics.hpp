#pragma once

// Evaluation: overlap and error metrics, grading through either head of the
// network, and the gradient-conflict diagnostic between the two task losses.

#include "attnreg/data/bridge.hpp"
#include "attnreg/data/foreground.hpp"
#include "attnreg/data/preprocess.hpp"
#include "attnreg/data/types.hpp"
#include "attnreg/losses/losses.hpp"
#include "attnreg/model/model.hpp"

#include <optional>

namespace attnreg::eval {

// 2|P∩G| / (|P|+|G|) over exact pixel counts; two empty masks overlap fully.
inline double dice(const util::Mask& pred, const util::Mask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw std::invalid_argument("dice: mask shapes differ");
  std::int64_t inter = 0, p = 0, g = 0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const bool a = pred.pix[std::size_t(i)] != 0;
    const bool b = gt.pix[std::size_t(i)] != 0;
    inter += a && b;
    p += a;
    g += b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * double(inter) / double(p + g);
}

inline double mae(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("mae: empty pair list");
  double sum = 0;
  for (const auto& [y_hat, y] : pairs) sum += std::abs(y_hat - y);
  return sum / double(pairs.size());
}

// logits {1,H,W} -> binary mask at probability 0.5 (logit 0)
template <typename S>
util::Mask threshold_logits(const nn::Tensor<S>& logits) {
  if (logits.ndim() != 3 || logits.dim(0) != 1)
    throw std::invalid_argument("threshold: expected {1,H,W} logits");
  util::Mask m(logits.dim(1), logits.dim(2), 0);
  for (std::int64_t i = 0; i < m.size(); ++i)
    m.pix[std::size_t(i)] = logits.value()[i] > S(0) ? 1 : 0;
  return m;
}

struct GradeEstimate {
  std::optional<double> y_direct;
  std::optional<double> y_from_mask;
  std::optional<grading::Grade> grade_direct;
  std::optional<grading::Grade> grade_from_mask;
  util::Mask pred_mask;    // thresholded fragment prediction (empty if no mask head)
  util::Mask embryo_used;  // denominator region: ground truth if given, else estimated
  util::Image alpha;       // attention map as an image (empty if no gate)
};

// Run the network on one preprocessed image and grade it through both heads.
// `embryo` supplies the exact denominator when a ground-truth mask exists;
// otherwise the region is estimated from image intensity.
template <typename S>
GradeEstimate grade_sample(const model::Model<S>& m, const util::Image& img,
                           const std::optional<util::Mask>& embryo = std::nullopt) {
  nn::NoGradGuard ng;
  const auto out = m.forward(data::image_tensor<S>(img));
  GradeEstimate est;
  if (out.y_hat) {
    est.y_direct = double(out.y_hat->value()[0]);
    est.grade_direct = grading::ratio_to_grade(*est.y_direct);
  }
  if (out.logits) {
    est.pred_mask = threshold_logits(*out.logits);
    est.embryo_used = embryo ? *embryo : data::estimate_embryo_mask(img);
    if (est.embryo_used.count() > 0) {
      est.y_from_mask = grading::mask_to_ratio(est.pred_mask, est.embryo_used);
      est.grade_from_mask = grading::ratio_to_grade(*est.y_from_mask);
    }
  }
  if (out.alpha) {
    est.alpha = util::Image(out.alpha->dim(1), out.alpha->dim(2));
    for (std::int64_t i = 0; i < est.alpha.size(); ++i)
      est.alpha.pix[std::size_t(i)] = float(out.alpha->value()[i]);
  }
  return est;
}

// Cosine similarity of d(loss_a)/dθ and d(loss_b)/dθ over one parameter
// group. Absent when either gradient is identically zero. The denominator is
// sqrt(dot_aa * dot_bb), so identical (or negated) losses give exactly ±1.
template <typename S>
std::optional<double> gradient_cosine(const nn::ParamRegistry<S>& reg, const std::string& group,
                                      const nn::Tensor<S>& loss_a, const nn::Tensor<S>& loss_b) {
  nn::GradStore<S> ga, gb;
  nn::backward(loss_a, ga);
  nn::backward(loss_b, gb);
  double ab = 0, aa = 0, bb = 0;
  for (const auto& p : reg.items()) {
    if (p.group != group) continue;
    const auto* a = ga.find(p.tensor.impl());
    const auto* b = gb.find(p.tensor.impl());
    if (a) aa += double(((*a) * (*a)).sum());
    if (b) bb += double(((*b) * (*b)).sum());
    if (a && b) ab += double(((*a) * (*b)).sum());
  }
  if (aa == 0.0 || bb == 0.0) return std::nullopt;
  return ab / std::sqrt(aa * bb);
}

template <typename S>
struct ConflictSample {
  nn::Tensor<S> image;
  nn::Tensor<S> frag_mask;
  losses::RegTarget target;
};

// Diagnostic for negative transfer: cosine between the segmentation-loss and
// regression-loss gradients over the shared backbone.
template <typename S>
std::optional<double> gradient_conflict(const model::Model<S>& m,
                                        const std::vector<ConflictSample<S>>& batch,
                                        const losses::LossWeights& w = {}) {
  if (batch.empty()) throw std::invalid_argument("gradient conflict: empty batch");
  if (!m.has_seg_branch() || !m.has_reg_branch())
    throw std::invalid_argument("gradient conflict: model needs both branches");
  const S inv = S(1.0 / double(batch.size()));
  nn::Tensor<S> seg_total = nn::Tensor<S>::scalar(S(0));
  nn::Tensor<S> reg_total = nn::Tensor<S>::scalar(S(0));
  for (const auto& s : batch) {
    const auto out = m.forward(s.image);
    seg_total = nn::add(seg_total, nn::scale(losses::seg_loss(*out.logits, s.frag_mask, w), inv));
    reg_total = nn::add(reg_total, nn::scale(losses::reg_loss(*out.y_hat, s.target), inv));
  }
  return gradient_cosine(m.params(), "backbone", seg_total, reg_total);
}

// Aggregate metrics of one model over a validation list. Presence mirrors the
// model's heads; `with_reg_outputs=false` drops regression-head numbers (used
// when evaluating a checkpoint whose regression head was never trained).
struct SplitMetrics {
  std::optional<double> dice;
  std::optional<double> mae_direct;
  std::optional<double> mae_from_mask;
  int n = 0;
};

template <typename S>
SplitMetrics evaluate_split(const model::Model<S>& m, const std::vector<data::ImageSample>& val,
                            int input_size, bool with_reg_outputs = true) {
  if (val.empty()) throw std::invalid_argument("evaluate: empty validation list");
  double dice_sum = 0;
  std::int64_t dice_n = 0;
  std::vector<std::pair<double, double>> direct, from_mask;
  for (const auto& s : val) {
    util::Image img = s.image;
    std::optional<util::Mask> frag = s.fragment_mask;
    std::optional<util::Mask> embryo = s.embryo_mask;
    if (img.h != input_size || img.w != input_size) {
      auto [scaled, pad] = data::preprocess_image(s.image, input_size);
      img = std::move(scaled);
      if (frag) frag = data::preprocess_mask(*frag, pad);
      if (embryo) embryo = data::preprocess_mask(*embryo, pad);
    }
    const auto est = grade_sample(m, img, embryo);
    if (m.has_seg_branch() && frag) {
      dice_sum += dice(est.pred_mask, *frag);
      ++dice_n;
    }
    if (s.ratio) {
      if (with_reg_outputs && est.y_direct) direct.push_back({*est.y_direct, *s.ratio});
      if (est.y_from_mask) from_mask.push_back({*est.y_from_mask, *s.ratio});
    }
  }
  SplitMetrics out;
  out.n = int(val.size());
  if (dice_n > 0) out.dice = dice_sum / double(dice_n);
  if (!direct.empty()) out.mae_direct = mae(direct);
  if (!from_mask.empty()) out.mae_from_mask = mae(from_mask);
  return out;
}

}  // namespace attnreg::eval
