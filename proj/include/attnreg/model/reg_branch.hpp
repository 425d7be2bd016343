#pragma once

// Regression head: project F3 and F4 to a common width, concatenate, pool to
// a vector, and run a two-layer MLP. The post-ReLU hidden activation is the
// latent vector v_reg handed to the decoder; y_hat squashes the final scalar
// through a logistic.

#include "attnreg/model/backbone.hpp"

namespace attnreg::model {

struct RegConfig {
  int proj_channels = 64;   // per-scale width after the 1x1 projections
  int hidden_dim = 256;     // v_reg dimensionality

  static RegConfig toy_profile() { return {}; }

  static RegConfig full_profile() {
    RegConfig c;
    c.proj_channels = 512;
    c.hidden_dim = 2048;
    return c;
  }

  void validate() const {
    if (proj_channels < 1 || hidden_dim < 1)
      throw std::invalid_argument("reg branch: channel counts must be >= 1");
  }
};

template <typename S>
struct RegOutput {
  nn::Tensor<S> y_hat;  // scalar in (0, 1)
  nn::Tensor<S> v_reg;  // {hidden_dim}
};

template <typename S>
class RegBranch {
 public:
  RegBranch() = default;
  RegBranch(nn::ParamRegistry<S>& reg, const std::string& prefix, nn::Rng& rng, int c3, int c4,
            RegConfig cfg, NormKind norm)
      : cfg_(cfg) {
    cfg_.validate();
    const bool bias = norm == NormKind::none;
    proj3_ = nn::Conv2d<S>(reg, prefix + ".proj3.conv", "reg_branch", rng, c3, cfg_.proj_channels,
                           {1, 1, 0, 1, nn::Pad::zero}, bias);
    norm3_ = detail::MaybeNorm<S>(reg, prefix + ".proj3.norm", "reg_branch", cfg_.proj_channels,
                                  norm);
    proj4_ = nn::Conv2d<S>(reg, prefix + ".proj4.conv", "reg_branch", rng, c4, cfg_.proj_channels,
                           {1, 1, 0, 1, nn::Pad::zero}, bias);
    norm4_ = detail::MaybeNorm<S>(reg, prefix + ".proj4.norm", "reg_branch", cfg_.proj_channels,
                                  norm);
    fc1_ = nn::Linear<S>(reg, prefix + ".fc1", "reg_branch", rng, 2 * cfg_.proj_channels,
                         cfg_.hidden_dim);
    fc2_ = nn::Linear<S>(reg, prefix + ".fc2", "reg_branch", rng, cfg_.hidden_dim, 1);
  }

  RegOutput<S> operator()(const nn::Tensor<S>& f3, const nn::Tensor<S>& f4) const {
    if (f3.dim(1) != f4.dim(1) || f3.dim(2) != f4.dim(2))
      throw std::invalid_argument("reg branch: F3 and F4 disagree spatially");
    auto p3 = nn::relu(norm3_(proj3_(f3)));
    auto p4 = nn::relu(norm4_(proj4_(f4)));
    auto pooled = nn::global_avg_pool(nn::concat(p3, p4));
    auto v = nn::relu(fc1_(pooled));
    auto y = nn::sigmoid(nn::reshape(fc2_(v), {}));
    return {y, v};
  }

  int v_dim() const { return cfg_.hidden_dim; }

 private:
  RegConfig cfg_;
  nn::Conv2d<S> proj3_, proj4_;
  detail::MaybeNorm<S> norm3_, norm4_;
  nn::Linear<S> fc1_, fc2_;
};

}  // namespace attnreg::model
