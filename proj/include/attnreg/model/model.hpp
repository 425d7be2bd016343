#pragma once

// The assembled multi-task network. Wiring flags carve out the ablation
// variants: the attention gate can be bypassed (plain skip), the injection
// path can be hard-disconnected (zero block, no graph edge), and either
// branch can be omitted entirely.

#include "attnreg/model/reg_branch.hpp"
#include "attnreg/model/seg_branch.hpp"
#include "attnreg/util/sha256.hpp"

#include <optional>

namespace attnreg::model {

struct ModelConfig {
  BackboneConfig backbone = BackboneConfig::toy_profile();
  DecoderConfig decoder = DecoderConfig::toy_profile();
  RegConfig regression = RegConfig::toy_profile();
  bool with_seg_branch = true;
  bool with_reg_branch = true;
  bool attention_gate = true;
  bool injection_connected = true;
  std::uint64_t init_seed = 0;

  static ModelConfig toy_profile() { return {}; }

  static ModelConfig full_profile() {
    ModelConfig c;
    c.backbone = BackboneConfig::full_profile();
    c.decoder = DecoderConfig::full_profile();
    c.regression = RegConfig::full_profile();
    return c;
  }

  void validate() const {
    backbone.validate();
    decoder.validate();
    regression.validate();
    if (!with_seg_branch && !with_reg_branch)
      throw std::invalid_argument("model: at least one branch must be present");
  }
};

template <typename S>
struct ModelOutputs {
  std::optional<nn::Tensor<S>> logits;  // {1, H, W} mask logits
  std::optional<nn::Tensor<S>> alpha;   // {1, H/4, W/4} attention map
  std::optional<nn::Tensor<S>> y_hat;   // scalar grade estimate in (0, 1)
  std::optional<nn::Tensor<S>> v_reg;   // latent regression vector
};

template <typename S>
class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    nn::Rng rng(nn::mix_seed(cfg_.init_seed, 0x6d6f64656cULL));
    backbone_.emplace(params_, "backbone", "backbone", rng, cfg_.backbone);
    const auto& ch = cfg_.backbone.stage_channels;
    if (cfg_.with_seg_branch)
      seg_.emplace(params_, "seg", rng, ch[0], ch[3], cfg_.regression.hidden_dim, cfg_.decoder,
                   cfg_.backbone.norm, cfg_.attention_gate, cfg_.injection_connected);
    if (cfg_.with_reg_branch)
      reg_.emplace(params_, "reg", rng, ch[2], ch[3], cfg_.regression, cfg_.backbone.norm);
  }

  // Accepts {1,H,W} grayscale (replicated across the stem's input channels,
  // differentiably) or an already-expanded {C,H,W}.
  nn::Tensor<S> expand_input(const nn::Tensor<S>& image) const {
    if (image.ndim() != 3) throw std::invalid_argument("model: input must be {C,H,W}");
    if (image.dim(0) == cfg_.backbone.input_channels) return image;
    if (image.dim(0) != 1)
      throw std::invalid_argument("model: input must be single-channel or match the stem");
    nn::Tensor<S> out = image;
    for (int i = 1; i < cfg_.backbone.input_channels; ++i) out = nn::concat(out, image);
    return out;
  }

  FeaturePyramid<S> features(const nn::Tensor<S>& image) const {
    return (*backbone_)(expand_input(image));
  }

  ModelOutputs<S> forward(const nn::Tensor<S>& image) const {
    const auto x = expand_input(image);
    const auto pyr = (*backbone_)(x);
    ModelOutputs<S> out;
    if (reg_) {
      auto r = (*reg_)(pyr.f3, pyr.f4);
      out.y_hat = r.y_hat;
      out.v_reg = r.v_reg;
    }
    if (seg_) {
      const nn::Tensor<S> v =
          out.v_reg ? *out.v_reg : nn::Tensor<S>::zeros({cfg_.regression.hidden_dim});
      auto s = (*seg_)(pyr, v, x.dim(1), x.dim(2));
      out.logits = s.logits;
      out.alpha = s.alpha;
    }
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamRegistry<S>& params() { return params_; }
  const nn::ParamRegistry<S>& params() const { return params_; }
  bool has_seg_branch() const { return seg_.has_value(); }
  bool has_reg_branch() const { return reg_.has_value(); }
  const SegBranch<S>& seg_branch() const { return *seg_; }
  const Backbone<S>& backbone() const { return *backbone_; }

 private:
  ModelConfig cfg_;
  nn::ParamRegistry<S> params_;
  std::optional<Backbone<S>> backbone_;
  std::optional<SegBranch<S>> seg_;
  std::optional<RegBranch<S>> reg_;
};

// Content hash of one parameter group: names, shapes, and exact value bytes
// in registration order. Equal digests mean bit-identical parameters.
template <typename S>
std::string group_digest(const nn::ParamRegistry<S>& reg, const std::string& group) {
  util::Sha256 h;
  for (const auto& p : reg.items()) {
    if (p.group != group) continue;
    h.update(p.name);
    h.update("\n", 1);
    const std::uint32_t nd = std::uint32_t(p.tensor.shape().size());
    h.update(&nd, sizeof(nd));
    for (int d : p.tensor.shape()) {
      const std::int32_t v = d;
      h.update(&v, sizeof(v));
    }
    h.update(p.tensor.value().data(), std::size_t(p.tensor.value().size()) * sizeof(S));
  }
  return h.hex_digest();
}

}  // namespace attnreg::model
