#pragma once

// Segmentation decoder: ASPP context head on the deepest features, an
// attention gate on the stride-4 skip, and a mask head that can fuse a
// broadcast regression vector into its final convolution block.

#include "attnreg/model/backbone.hpp"

#include <optional>

namespace attnreg::model {

struct DecoderConfig {
  std::vector<int> aspp_rates = {12, 24, 36};
  int aspp_out_channels = 32;
  int f_int = 16;           // gate bottleneck width
  int c_inj = 8;            // channels of the projected injection vector
  int decoder_channels = 32;

  static DecoderConfig toy_profile() { return {}; }

  static DecoderConfig full_profile() {
    DecoderConfig c;
    c.aspp_out_channels = 256;
    c.f_int = 128;
    c.c_inj = 64;
    c.decoder_channels = 256;
    return c;
  }

  void validate() const {
    std::vector<int> rates = aspp_rates;
    std::sort(rates.begin(), rates.end());
    if (rates.size() < 3 || std::adjacent_find(rates.begin(), rates.end()) != rates.end())
      throw std::invalid_argument("decoder: need >= 3 distinct ASPP dilation rates");
    for (int r : rates)
      if (r < 1) throw std::invalid_argument("decoder: ASPP rates must be >= 1");
    if (c_inj < 1) throw std::invalid_argument("decoder: c_inj must be >= 1");
    if (aspp_out_channels < 1 || f_int < 1 || decoder_channels < 1)
      throw std::invalid_argument("decoder: channel counts must be >= 1");
  }
};

// Context head: 1x1 branch, one 3x3 branch per dilation rate, and a pooled
// image-level branch, fused by a 1x1 convolution. Dilated branches pad by
// replication so border behaviour matches the interior on flat inputs.
template <typename S>
class Aspp {
 public:
  Aspp() = default;
  Aspp(nn::ParamRegistry<S>& reg, const std::string& prefix, const std::string& group,
       nn::Rng& rng, int in_c, const DecoderConfig& cfg, NormKind norm) {
    const bool bias = norm == NormKind::none;
    const int out_c = cfg.aspp_out_channels;
    point_ = nn::Conv2d<S>(reg, prefix + ".point.conv", group, rng, in_c, out_c,
                           {1, 1, 0, 1, nn::Pad::zero}, bias);
    point_norm_ = detail::MaybeNorm<S>(reg, prefix + ".point.norm", group, out_c, norm);
    for (std::size_t i = 0; i < cfg.aspp_rates.size(); ++i) {
      const int r = cfg.aspp_rates[i];
      const std::string name = prefix + ".rate" + std::to_string(r);
      dilated_.emplace_back(reg, name + ".conv", group, rng, in_c, out_c,
                            nn::Conv2dSpec{3, 1, r, r, nn::Pad::replicate}, bias);
      dilated_norm_.emplace_back(reg, name + ".norm", group, out_c, norm);
    }
    pool_proj_ = nn::Linear<S>(reg, prefix + ".pool.proj", group, rng, in_c, out_c);
    fuse_ = nn::Conv2d<S>(reg, prefix + ".fuse.conv", group, rng,
                          out_c * int(2 + cfg.aspp_rates.size()), out_c,
                          {1, 1, 0, 1, nn::Pad::zero}, bias);
    fuse_norm_ = detail::MaybeNorm<S>(reg, prefix + ".fuse.norm", group, out_c, norm);
  }

  // Individual branch outputs, exposed for inspection: [point, rates..., pooled].
  std::vector<nn::Tensor<S>> branches(const nn::Tensor<S>& x) const {
    std::vector<nn::Tensor<S>> out;
    out.push_back(nn::relu(point_norm_(point_(x))));
    for (std::size_t i = 0; i < dilated_.size(); ++i)
      out.push_back(nn::relu(dilated_norm_[i](dilated_[i](x))));
    auto pooled = nn::relu(pool_proj_(nn::global_avg_pool(x)));
    out.push_back(nn::broadcast_spatial(pooled, x.dim(1), x.dim(2)));
    return out;
  }

  nn::Tensor<S> operator()(const nn::Tensor<S>& x) const {
    auto outs = branches(x);
    nn::Tensor<S> cat = outs[0];
    for (std::size_t i = 1; i < outs.size(); ++i) cat = nn::concat(cat, outs[i]);
    return nn::relu(fuse_norm_(fuse_(cat)));
  }

 private:
  nn::Conv2d<S> point_;
  detail::MaybeNorm<S> point_norm_;
  std::vector<nn::Conv2d<S>> dilated_;
  std::vector<detail::MaybeNorm<S>> dilated_norm_;
  nn::Linear<S> pool_proj_;
  nn::Conv2d<S> fuse_;
  detail::MaybeNorm<S> fuse_norm_;
};

// alpha = sigmoid(psi(relu(Wx F1 + Wg g + b))); the gated skip is alpha ⊙ F1
// with the single-channel map broadcast across channels.
template <typename S>
class AttentionGate {
 public:
  AttentionGate() = default;
  AttentionGate(nn::ParamRegistry<S>& reg, const std::string& prefix, const std::string& group,
                nn::Rng& rng, int c1, int gate_c, int f_int) {
    wx_ = nn::Conv2d<S>(reg, prefix + ".wx.conv", group, rng, c1, f_int,
                        {1, 1, 0, 1, nn::Pad::zero}, false);
    wg_ = nn::Conv2d<S>(reg, prefix + ".wg.conv", group, rng, gate_c, f_int,
                        {1, 1, 0, 1, nn::Pad::zero}, false);
    b_ = reg.add(prefix + ".b", group, nn::Tensor<S>::zeros({f_int}));
    psi_ = nn::Conv2d<S>(reg, prefix + ".psi.conv", group, rng, f_int, 1,
                         {1, 1, 0, 1, nn::Pad::zero}, true);
  }

  struct Result {
    nn::Tensor<S> alpha;   // {1, H, W}, strictly inside (0, 1)
    nn::Tensor<S> gated;   // alpha ⊙ F1
  };

  Result operator()(const nn::Tensor<S>& f1, const nn::Tensor<S>& g) const {
    if (f1.dim(1) != g.dim(1) || f1.dim(2) != g.dim(2))
      throw std::invalid_argument("attention gate: F1 and gating signal disagree spatially");
    auto sum = nn::add(nn::add(wx_(f1), wg_(g)), nn::broadcast_spatial(b_, f1.dim(1), f1.dim(2)));
    auto alpha = nn::sigmoid(psi_(nn::relu(sum)));
    return {alpha, nn::channel_broadcast_mul(alpha, f1)};
  }

 private:
  nn::Conv2d<S> wx_, wg_, psi_;
  nn::Tensor<S> b_;
};

template <typename S>
struct SegOutput {
  nn::Tensor<S> logits;  // {1, H_in, W_in}
  nn::Tensor<S> alpha;   // {1, H_in/4, W_in/4}; all-ones when the gate is bypassed
};

// Parameter groups: "seg_branch" covers ASPP, the gate, and the pre-fusion
// decoder convolution; "injection" covers the V_reg projection and everything
// after the fusion concat, which is exactly the path trained in phase 2.
template <typename S>
class SegBranch {
 public:
  SegBranch() = default;
  SegBranch(nn::ParamRegistry<S>& reg, const std::string& prefix, nn::Rng& rng, int c1, int c4,
            int v_dim, const DecoderConfig& cfg, NormKind norm, bool use_gate,
            bool injection_connected)
      : cfg_(cfg), use_gate_(use_gate), injection_connected_(injection_connected) {
    cfg_.validate();
    const bool bias = norm == NormKind::none;
    aspp_ = Aspp<S>(reg, prefix + ".aspp", "seg_branch", rng, c4, cfg_, norm);
    if (use_gate_)
      gate_ = AttentionGate<S>(reg, prefix + ".gate", "seg_branch", rng, c1,
                               cfg_.aspp_out_channels, cfg_.f_int);
    pre_ = nn::Conv2d<S>(reg, prefix + ".pre.conv", "seg_branch", rng,
                         c1 + cfg_.aspp_out_channels, cfg_.decoder_channels,
                         {3, 1, 1, 1, nn::Pad::zero}, bias);
    pre_norm_ = detail::MaybeNorm<S>(reg, prefix + ".pre.norm", "seg_branch",
                                     cfg_.decoder_channels, norm);
    inj_proj_ = nn::Linear<S>(reg, prefix + ".inject.proj", "injection", rng, v_dim, cfg_.c_inj);
    post_ = nn::Conv2d<S>(reg, prefix + ".post.conv", "injection", rng,
                          cfg_.decoder_channels + cfg_.c_inj, cfg_.decoder_channels,
                          {3, 1, 1, 1, nn::Pad::zero}, bias);
    post_norm_ = detail::MaybeNorm<S>(reg, prefix + ".post.norm", "injection",
                                      cfg_.decoder_channels, norm);
    classify_ = nn::Conv2d<S>(reg, prefix + ".classify.conv", "injection", rng,
                              cfg_.decoder_channels, 1, {1, 1, 0, 1, nn::Pad::zero}, true);
  }

  const Aspp<S>& aspp() const { return aspp_; }

  SegOutput<S> operator()(const FeaturePyramid<S>& pyr, const nn::Tensor<S>& v_reg, int out_h,
                          int out_w) const {
    const int h4 = pyr.f1.dim(1), w4 = pyr.f1.dim(2);
    auto context = aspp_(pyr.f4);
    auto g = nn::bilinear_resize(context, h4, w4);

    nn::Tensor<S> alpha, skip;
    if (use_gate_) {
      auto gated = (*gate_)(pyr.f1, g);
      alpha = gated.alpha;
      skip = gated.gated;
    } else {
      alpha = nn::Tensor<S>::full({1, h4, w4}, S(1));
      skip = pyr.f1;
    }

    auto fdec = nn::relu(pre_norm_(pre_(nn::concat(skip, g))));

    nn::Tensor<S> finj;
    if (injection_connected_) {
      finj = nn::broadcast_spatial(inj_proj_(v_reg), h4, w4);
    } else {
      // Hard disconnect: a constant zero block with no graph edge to v_reg.
      finj = nn::Tensor<S>::zeros({cfg_.c_inj, h4, w4});
    }
    auto fused = nn::relu(post_norm_(post_(nn::concat(fdec, finj))));
    auto logits = nn::bilinear_resize(classify_(fused), out_h, out_w);
    return {logits, alpha};
  }

 private:
  DecoderConfig cfg_;
  bool use_gate_ = true;
  bool injection_connected_ = true;
  Aspp<S> aspp_;
  std::optional<AttentionGate<S>> gate_;
  nn::Conv2d<S> pre_;
  detail::MaybeNorm<S> pre_norm_;
  nn::Linear<S> inj_proj_;
  nn::Conv2d<S> post_;
  detail::MaybeNorm<S> post_norm_;
  nn::Conv2d<S> classify_;
};

}  // namespace attnreg::model
