#include <doctest.h>

#include "attnreg/losses/losses.hpp"
#include "helpers.hpp"

using namespace attnreg;
using grading::Grade;
using losses::LossWeights;
using losses::RegTarget;
using nn::ArrayX;
using nn::GradStore;
using nn::Rng;
using nn::Tensor;
using testutil::check_grads;
using testutil::rand_leaf;

namespace {

// plain-double per-pixel references, written independently of the graph ops
double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double bce_ref(double z, double t) {
  const double p = sigmoid_ref(z);
  return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}
double focal_ref(double z, double t, double gamma, double alpha) {
  const double p = sigmoid_ref(z);
  const double pt = t > 0.5 ? p : 1.0 - p;
  const double at = t > 0.5 ? alpha : 1.0 - alpha;
  return at * std::pow(1.0 - pt, gamma) * -std::log(pt);
}

Tensor<double> binary_mask(Rng& rng, const nn::Shape& shape, double p_fg) {
  ArrayX<double> v(nn::numel(shape));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform() < p_fg ? 1.0 : 0.0;
  auto t = Tensor<double>::from(shape, std::move(v));
  return t;  // constant: requires_grad defaults to false
}

}  // namespace

TEST_CASE("loss weights: validation") {
  CHECK_NOTHROW(LossWeights{}.validate());
  LossWeights w;
  w.alpha = -0.1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = {};
  w.dice_smooth = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w = {};
  w.focal_alpha = 1.5;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("segmentation loss: 4x4 fixture matches hand-computed per-pixel references") {
  // 4 positive pixels, fixed moderate logits
  const std::vector<double> t = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0};
  const std::vector<double> z = {2.1, -1.3, 0.4,  -3.0, -0.7, 4.2,  -2.2, 1.1,
                                 0.0, -0.5, -1.9, 2.8,  -4.0, -0.2, 3.3,  -1.6};
  auto gt = Tensor<double>::from({1, 4, 4}, Eigen::Map<const ArrayX<double>>(t.data(), 16));
  auto zt = Tensor<double>::from({1, 4, 4}, Eigen::Map<const ArrayX<double>>(z.data(), 16));

  LossWeights w;
  double bce = 0, focal = 0, inter = 0, psum = 0, tsum = 0;
  for (int i = 0; i < 16; ++i) {
    bce += bce_ref(z[std::size_t(i)], t[std::size_t(i)]) / 16.0;
    focal += focal_ref(z[std::size_t(i)], t[std::size_t(i)], w.focal_gamma, w.focal_alpha) / 16.0;
    inter += sigmoid_ref(z[std::size_t(i)]) * t[std::size_t(i)];
    psum += sigmoid_ref(z[std::size_t(i)]);
    tsum += t[std::size_t(i)];
  }
  const double dice = 1.0 - (2.0 * inter + w.dice_smooth) / (psum + tsum + w.dice_smooth);

  CHECK(losses::bce_loss(zt, gt).item() == doctest::Approx(bce).epsilon(1e-9));
  CHECK(losses::dice_loss(zt, gt, w.dice_smooth).item() == doctest::Approx(dice).epsilon(1e-9));
  CHECK(losses::focal_loss(zt, gt, w.focal_gamma, w.focal_alpha).item() ==
        doctest::Approx(focal).epsilon(1e-9));
  const double total = w.w_bce * bce + w.w_dice * dice + w.w_focal * focal;
  CHECK(losses::seg_loss(zt, gt, w).item() == doctest::Approx(total).epsilon(1e-9));
}

TEST_CASE("segmentation loss: analytic anchor points and limits") {
  // all-background truth under p = 0.5 everywhere: BCE is ln 2 per pixel
  auto gt0 = Tensor<double>::zeros({1, 3, 3});
  auto z0 = Tensor<double>::zeros({1, 3, 3});
  CHECK(losses::bce_loss(z0, gt0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  // saturated correct predictions drive the whole loss to zero
  Rng rng(42);
  auto gt = binary_mask(rng, {1, 6, 6}, 0.3);
  auto zsat = Tensor<double>::from({1, 6, 6}, ((2.0 * gt.value() - 1.0) * 40.0).eval());
  CHECK(losses::seg_loss(zsat, gt, LossWeights{}).item() < 1e-6);

  // rejects non-binary truth and mismatched shapes
  auto bad = Tensor<double>::full({1, 3, 3}, 0.5);
  CHECK_THROWS_AS((void)losses::bce_loss(z0, bad), std::invalid_argument);
  CHECK_THROWS_AS((void)losses::seg_loss(z0, Tensor<double>::zeros({1, 2, 2}), LossWeights{}),
                  std::invalid_argument);
}

TEST_CASE("soft dice approaches the hard-overlap value as logits saturate") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto gt = binary_mask(rng, {1, 8, 8}, 0.4);
    auto pred = binary_mask(rng, {1, 8, 8}, 0.4);
    for (double mag : {12.0, 20.0}) {
      auto z = Tensor<double>::from({1, 8, 8}, ((2.0 * pred.value() - 1.0) * mag).eval());
      double inter = (pred.value() * gt.value()).sum();
      double hard =
          1.0 - (2.0 * inter + 1.0) / (pred.value().sum() + gt.value().sum() + 1.0);
      CHECK(losses::dice_loss(z, gt, 1.0).item() == doctest::Approx(hard).epsilon(1e-3));
    }
  }
}

TEST_CASE("range loss: hinge values over a dense sweep of every grade") {
  for (Grade g : grading::kAllGrades) {
    const auto iv = grading::grade_to_interval(g);
    for (int i = 0; i <= 100; ++i) {
      const double y = i / 100.0;
      const double expect = std::max(0.0, iv.y_min - y) + std::max(0.0, y - iv.y_max);
      CHECK(losses::range_loss(Tensor<double>::scalar(y), g).item() == expect);
    }
    // the zero set is exactly the closed interval
    CHECK(losses::range_loss(Tensor<double>::scalar(iv.y_min), g).item() == 0.0);
    CHECK(losses::range_loss(Tensor<double>::scalar(iv.y_max), g).item() == 0.0);
    if (iv.y_min > 0.0)
      CHECK(losses::range_loss(Tensor<double>::scalar(iv.y_min - 1e-9), g).item() > 0.0);
    if (iv.y_max < 1.0)
      CHECK(losses::range_loss(Tensor<double>::scalar(iv.y_max + 1e-9), g).item() > 0.0);
  }
  CHECK(losses::range_loss(Tensor<double>::scalar(0.05), Grade::B).item() ==
        doctest::Approx(0.05).epsilon(1e-12));
  CHECK(losses::range_loss(Tensor<double>::scalar(0.30), Grade::B).item() ==
        doctest::Approx(0.05).epsilon(1e-12));
  CHECK_THROWS_AS((void)losses::range_loss(Tensor<double>::scalar(1.2), Grade::B),
                  std::invalid_argument);
}

TEST_CASE("range loss: gradient is -1 / 0 / +1 by region and matches finite differences") {
  struct Point {
    double y;
    double expect;
  };
  // non-kink probes for grade B = [0.10, 0.25]
  for (const Point pt : {Point{0.04, -1.0}, Point{0.17, 0.0}, Point{0.60, 1.0}}) {
    auto y = Tensor<double>::leaf({}, ArrayX<double>::Constant(1, pt.y));
    GradStore<double> gs;
    nn::backward(losses::range_loss(y, Grade::B), gs);
    const auto* g = gs.find(y.impl());
    REQUIRE(g != nullptr);
    CHECK((*g)[0] == pt.expect);

    double fd;
    {
      nn::NoGradGuard ng;
      const double h = 1e-6;
      fd = (losses::range_loss(Tensor<double>::scalar(pt.y + h), Grade::B).item() -
            losses::range_loss(Tensor<double>::scalar(pt.y - h), Grade::B).item()) /
           (2 * h);
    }
    CHECK(std::abs(fd - (*g)[0]) <= 1e-6);
  }
}

TEST_CASE("regression loss: dispatch between exact ratio and grade interval") {
  CHECK(losses::reg_loss(Tensor<double>::scalar(0.30), RegTarget::paired(0.25)).item() ==
        doctest::Approx(0.05).epsilon(1e-12));
  CHECK(losses::reg_loss(Tensor<double>::scalar(0.25), RegTarget::paired(0.25)).item() == 0.0);
  CHECK(losses::reg_loss(Tensor<double>::scalar(0.18), RegTarget::weak(Grade::B)).item() == 0.0);
  CHECK_THROWS_AS((void)losses::reg_loss(Tensor<double>::scalar(0.2), RegTarget{}),
                  std::invalid_argument);
}

TEST_CASE("consistency loss: soft-area ratio against hand-summed oracles") {
  // 100 logits at ln(1/3): each sigmoid is exactly 1/4, soft area 25
  auto z = Tensor<double>::full({1, 10, 10}, std::log(1.0 / 3.0));
  CHECK(losses::consistency_loss(Tensor<double>::scalar(0.30), z, 100.0).item() ==
        doctest::Approx(0.05).epsilon(1e-9));

  // both heads silent -> zero
  auto zneg = Tensor<double>::full({1, 10, 10}, -40.0);
  CHECK(losses::consistency_loss(Tensor<double>::scalar(0.0), zneg, 100.0).item() < 1e-12);

  // saturated agreement: 30 hot pixels vs y_hat = 0.30
  ArrayX<double> v = ArrayX<double>::Constant(100, -40.0);
  v.head(30) = 40.0;
  auto zagree = Tensor<double>::from({1, 10, 10}, std::move(v));
  CHECK(losses::consistency_loss(Tensor<double>::scalar(0.30), zagree, 100.0).item() < 1e-6);

  // ratio clamps at 1 when the soft area overshoots the embryo area
  auto zhot = Tensor<double>::full({1, 10, 10}, 40.0);
  CHECK(losses::consistency_loss(Tensor<double>::scalar(0.80), zhot, 50.0).item() ==
        doctest::Approx(0.20).epsilon(1e-9));

  CHECK_THROWS_AS((void)losses::consistency_loss(Tensor<double>::scalar(0.5), z, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)losses::consistency_loss(Tensor<double>::scalar(0.5), z, -3.0),
                  std::invalid_argument);
}

TEST_CASE("gradient checks: every component passes central finite differences") {
  Rng rng(11);
  auto logits = rand_leaf(rng, {1, 5, 5}, -2.0, 2.0);
  auto gt = binary_mask(rng, {1, 5, 5}, 0.4);

  SUBCASE("segmentation composite") {
    check_grads({logits}, [&] { return losses::seg_loss(logits, gt, LossWeights{}); });
  }
  SUBCASE("consistency through both heads") {
    auto y = rand_leaf(rng, {}, 0.1, 0.9);
    check_grads({y, logits}, [&] { return losses::consistency_loss(y, logits, 25.0); });
  }
  SUBCASE("paired regression away from the zero kink") {
    auto y = Tensor<double>::leaf({}, ArrayX<double>::Constant(1, 0.62));
    check_grads({y}, [&] { return losses::reg_loss(y, RegTarget::paired(0.25)); });
  }
}

TEST_CASE("total loss: lazy terms, weighting, and logging records") {
  auto seg = [] { return Tensor<double>::scalar(0.5); };
  auto reg = [] { return Tensor<double>::scalar(0.3); };
  auto cons = [] { return Tensor<double>::scalar(0.2); };
  auto never = []() -> Tensor<double> { throw std::logic_error("term must stay unevaluated"); };

  LossWeights w;
  w.alpha = 1.0;
  w.beta = 0.0;
  w.gamma = 0.1;

  // a zero-weight term is never invoked, so missing targets cannot hurt
  const auto out = losses::total_loss<double>(seg, never, cons, w);
  CHECK(out.total.item() == doctest::Approx(0.5 + 0.1 * 0.2).epsilon(1e-15));
  CHECK(out.seg.has_value());
  CHECK_FALSE(out.reg.has_value());  // skipped, recorded absent rather than zero
  CHECK(*out.cons == doctest::Approx(0.2));

  LossWeights zero;
  zero.alpha = zero.beta = zero.gamma = 0.0;
  const auto none = losses::total_loss<double>(never, never, never, zero);
  CHECK(none.total.item() == 0.0);
  CHECK_FALSE(bool(none.seg || none.reg || none.cons));

  // doubling every weight exactly doubles the objective
  LossWeights one;
  one.gamma = 0.3;
  LossWeights two = one;
  two.alpha *= 2;
  two.beta *= 2;
  two.gamma *= 2;
  const auto a = losses::total_loss<double>(seg, reg, cons, one);
  const auto b = losses::total_loss<double>(seg, reg, cons, two);
  CHECK(b.total.item() == doctest::Approx(2.0 * a.total.item()).epsilon(1e-15));

  // a nonzero weight without a provider is a configuration error
  CHECK_THROWS_AS((void)losses::total_loss<double>(nullptr, reg, cons, one),
                  std::invalid_argument);
}

TEST_CASE("total loss: gradients flow through every active term") {
  Rng rng(13);
  auto logits = rand_leaf(rng, {1, 4, 4}, -1.5, 1.5);
  auto gt = binary_mask(rng, {1, 4, 4}, 0.5);
  auto y = rand_leaf(rng, {}, 0.2, 0.8);

  LossWeights w;  // alpha 1, beta 1, gamma 0.1
  auto build = [&] {
    return losses::total_loss<double>(
               [&] { return losses::seg_loss(logits, gt, w); },
               [&] { return losses::reg_loss(y, RegTarget::paired(0.4)); },
               [&] { return losses::consistency_loss(y, logits, 16.0); }, w)
        .total;
  };
  check_grads({logits, y}, build);

  GradStore<double> gs;
  nn::backward(build(), gs);
  REQUIRE(gs.find(logits.impl()) != nullptr);
  REQUIRE(gs.find(y.impl()) != nullptr);
  CHECK(gs.find(logits.impl())->abs().maxCoeff() > 0.0);
  CHECK(gs.find(y.impl())->abs().maxCoeff() > 0.0);
}

TEST_CASE("every loss component is non-negative on random inputs") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    nn::NoGradGuard ng;
    auto z = rand_leaf(rng, {1, 6, 6}, -5.0, 5.0);
    auto gt = binary_mask(rng, {1, 6, 6}, rng.uniform(0.1, 0.9));
    CHECK(losses::bce_loss(z, gt).item() >= 0.0);
    CHECK(losses::dice_loss(z, gt, 1.0).item() >= -1e-12);
    CHECK(losses::focal_loss(z, gt, 2.0, 0.25).item() >= 0.0);
    const auto g = grading::kAllGrades[std::size_t(rng.uniform_int(0, 3))];
    CHECK(losses::range_loss(Tensor<double>::scalar(rng.uniform()), g).item() >= 0.0);
    auto y = Tensor<double>::scalar(rng.uniform());
    CHECK(losses::consistency_loss(y, z, 36.0).item() >= 0.0);
  }
}
