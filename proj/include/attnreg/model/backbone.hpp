#pragma once

// Shared encoder: 7x7 stem + max pool, then four bottleneck stages. Stages 3
// and 4 keep stride 1 and dilate their 3x3 convolutions (rates 2 and 4), so
// the deepest maps stay at 1/8 of the input. Two profiles share the topology:
// full (50-layer widths) and toy (widths / 8, one block per stage) for
// CPU-scale tests.

#include "attnreg/nn/module.hpp"

#include <array>

namespace attnreg::model {

enum class Profile { full, toy };
enum class NormKind { group, none };

struct BackboneConfig {
  Profile profile = Profile::toy;
  int stem_channels = 8;
  std::array<int, 4> stage_channels = {32, 64, 128, 256};  // C1..C4 (post-expansion)
  std::array<int, 4> stage_depths = {1, 1, 1, 1};
  std::array<int, 2> dilation_rates = {2, 4};  // stages 3 and 4
  int input_channels = 3;
  NormKind norm = NormKind::group;

  static BackboneConfig toy_profile() { return {}; }

  static BackboneConfig full_profile() {
    BackboneConfig c;
    c.profile = Profile::full;
    c.stem_channels = 64;
    c.stage_channels = {256, 512, 1024, 2048};
    c.stage_depths = {3, 4, 6, 3};
    return c;
  }

  void validate() const {
    if (dilation_rates != std::array<int, 2>{2, 4})
      throw std::invalid_argument("backbone: stage-3/4 dilation rates must be (2, 4)");
    for (int c : stage_channels)
      if (c < 4 || c % 4 != 0)
        throw std::invalid_argument("backbone: stage channels must be positive multiples of 4");
    for (int d : stage_depths)
      if (d < 1) throw std::invalid_argument("backbone: stage depths must be >= 1");
    if (stem_channels < 1 || input_channels < 1)
      throw std::invalid_argument("backbone: bad channel counts");
  }
};

template <typename S>
struct FeaturePyramid {
  nn::Tensor<S> f1;  // C1 at 1/4 scale
  nn::Tensor<S> f3;  // C3 at 1/8 scale
  nn::Tensor<S> f4;  // C4 at 1/8 scale
};

namespace detail {

// norm that collapses to the identity when disabled
template <typename S>
struct MaybeNorm {
  nn::GroupNorm<S> norm;
  bool active = false;

  MaybeNorm() = default;
  MaybeNorm(nn::ParamRegistry<S>& reg, const std::string& name, const std::string& group,
            int channels, NormKind kind) {
    if (kind == NormKind::group) {
      norm = nn::GroupNorm<S>(reg, name, group, channels, nn::norm_groups_for(channels));
      active = true;
    }
  }

  nn::Tensor<S> operator()(const nn::Tensor<S>& x) const { return active ? norm(x) : x; }
};

// 1x1 reduce -> 3x3 (stride or dilation) -> 1x1 expand, with projection
// shortcut on shape change.
template <typename S>
struct Bottleneck {
  nn::Conv2d<S> conv1, conv2, conv3;
  MaybeNorm<S> norm1, norm2, norm3;
  nn::Conv2d<S> down_conv;
  MaybeNorm<S> down_norm;
  bool has_down = false;

  Bottleneck() = default;
  Bottleneck(nn::ParamRegistry<S>& reg, const std::string& name, const std::string& group,
             nn::Rng& rng, int in_c, int out_c, int stride, int dilation, NormKind norm) {
    const int width = out_c / 4;
    const bool bias = norm == NormKind::none;
    conv1 = nn::Conv2d<S>(reg, name + ".conv1", group, rng, in_c, width,
                          {1, 1, 0, 1, nn::Pad::zero}, bias);
    norm1 = MaybeNorm<S>(reg, name + ".norm1", group, width, norm);
    conv2 = nn::Conv2d<S>(reg, name + ".conv2", group, rng, width, width,
                          {3, stride, dilation, dilation, nn::Pad::zero}, bias);
    norm2 = MaybeNorm<S>(reg, name + ".norm2", group, width, norm);
    conv3 = nn::Conv2d<S>(reg, name + ".conv3", group, rng, width, out_c,
                          {1, 1, 0, 1, nn::Pad::zero}, bias);
    norm3 = MaybeNorm<S>(reg, name + ".norm3", group, out_c, norm);
    has_down = in_c != out_c || stride != 1;
    if (has_down) {
      down_conv = nn::Conv2d<S>(reg, name + ".down.conv", group, rng, in_c, out_c,
                                {1, stride, 0, 1, nn::Pad::zero}, bias);
      down_norm = MaybeNorm<S>(reg, name + ".down.norm", group, out_c, norm);
    }
  }

  nn::Tensor<S> operator()(const nn::Tensor<S>& x) const {
    auto h = nn::relu(norm1(conv1(x)));
    h = nn::relu(norm2(conv2(h)));
    h = norm3(conv3(h));
    auto skip = has_down ? down_norm(down_conv(x)) : x;
    return nn::relu(nn::add(h, skip));
  }
};

}  // namespace detail

template <typename S>
class Backbone {
 public:
  Backbone(nn::ParamRegistry<S>& reg, const std::string& prefix, const std::string& group,
           nn::Rng& rng, BackboneConfig config)
      : config_(config) {
    config_.validate();
    const bool bias = config_.norm == NormKind::none;
    stem_ = nn::Conv2d<S>(reg, prefix + ".stem.conv", group, rng, config_.input_channels,
                          config_.stem_channels, {7, 2, 3, 1, nn::Pad::zero}, bias);
    stem_norm_ = detail::MaybeNorm<S>(reg, prefix + ".stem.norm", group, config_.stem_channels,
                                      config_.norm);
    int in_c = config_.stem_channels;
    for (int stage = 0; stage < 4; ++stage) {
      const int out_c = config_.stage_channels[std::size_t(stage)];
      const int stride = (stage == 1) ? 2 : 1;  // stage 2 downsamples; 3/4 dilate instead
      const int dilation = stage == 2   ? config_.dilation_rates[0]
                           : stage == 3 ? config_.dilation_rates[1]
                                        : 1;
      auto& blocks = stages_[std::size_t(stage)];
      for (int b = 0; b < config_.stage_depths[std::size_t(stage)]; ++b) {
        const std::string name =
            prefix + ".stage" + std::to_string(stage + 1) + ".block" + std::to_string(b);
        blocks.emplace_back(reg, name, group, rng, in_c, out_c, b == 0 ? stride : 1, dilation,
                            config_.norm);
        in_c = out_c;
      }
    }
  }

  FeaturePyramid<S> operator()(const nn::Tensor<S>& x) const {
    if (x.ndim() != 3 || x.dim(0) != config_.input_channels)
      throw std::invalid_argument("backbone: input channels do not match the configuration");
    if (x.dim(1) < 32 || x.dim(2) < 32)
      throw std::invalid_argument("backbone: input spatial size must be >= 32");
    auto h = nn::relu(stem_norm_(stem_(x)));
    h = nn::maxpool2d(h, 3, 2, 1);
    for (const auto& b : stages_[0]) h = b(h);
    FeaturePyramid<S> pyr;
    pyr.f1 = h;
    for (const auto& b : stages_[1]) h = b(h);
    for (const auto& b : stages_[2]) h = b(h);
    pyr.f3 = h;
    for (const auto& b : stages_[3]) h = b(h);
    pyr.f4 = h;
    return pyr;
  }

  const BackboneConfig& config() const { return config_; }

 private:
  BackboneConfig config_;
  nn::Conv2d<S> stem_;
  detail::MaybeNorm<S> stem_norm_;
  std::array<std::vector<detail::Bottleneck<S>>, 4> stages_;
};

}  // namespace attnreg::model
