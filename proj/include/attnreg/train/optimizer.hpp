#pragma once

// Adaptive-moment optimizer with decoupled weight decay. Parameters are
// selected by group at construction; a parameter that received no gradient in
// a step is left completely untouched (no moment update, no decay), so
// frozen or unused layers stay bit-identical.

#include "attnreg/nn/module.hpp"

#include <cmath>

namespace attnreg::train {

struct OptimizerConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const {
    if (!(lr > 0)) throw std::invalid_argument("optimizer: lr must be > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
      throw std::invalid_argument("optimizer: moment factors must lie in [0, 1)");
    if (!(eps > 0)) throw std::invalid_argument("optimizer: eps must be > 0");
    if (!(weight_decay >= 0)) throw std::invalid_argument("optimizer: weight decay must be >= 0");
  }
};

// Serializable per-parameter slot: step count and both moment estimates.
template <typename S>
struct OptimizerSlot {
  std::string name;
  std::int64_t t = 0;
  nn::ArrayX<S> m;
  nn::ArrayX<S> v;
};

template <typename S>
class AdamW {
 public:
  AdamW(nn::ParamRegistry<S>& reg, const std::vector<std::string>& trainable_groups,
        OptimizerConfig cfg)
      : cfg_(cfg) {
    cfg_.validate();
    for (const auto& g : trainable_groups)
      for (auto* p : reg.group_params(g)) {
        OptimizerSlot<S> slot;
        slot.name = p->name;
        slot.m = nn::ArrayX<S>::Zero(p->tensor.size());
        slot.v = nn::ArrayX<S>::Zero(p->tensor.size());
        slots_.push_back(std::move(slot));
        params_.push_back(&p->tensor);
      }
  }

  // One update from the gradients of the last backward pass.
  void step(const nn::GradStore<S>& grads) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto* g = grads.find(params_[i]->impl());
      if (g == nullptr) continue;
      auto& s = slots_[i];
      ++s.t;
      s.m = S(cfg_.beta1) * s.m + S(1 - cfg_.beta1) * (*g);
      s.v = S(cfg_.beta2) * s.v + S(1 - cfg_.beta2) * g->square();
      const S bc1 = S(1) - S(std::pow(cfg_.beta1, double(s.t)));
      const S bc2 = S(1) - S(std::pow(cfg_.beta2, double(s.t)));
      auto& w = params_[i]->value();
      w -= S(cfg_.lr) * ((s.m / bc1) / ((s.v / bc2).sqrt() + S(cfg_.eps)) +
                         S(cfg_.weight_decay) * w);
    }
  }

  const OptimizerConfig& config() const { return cfg_; }
  const std::vector<OptimizerSlot<S>>& slots() const { return slots_; }

  // Restore moment state from a checkpoint; names must cover this
  // optimizer's parameter set exactly.
  void load_slots(const std::vector<OptimizerSlot<S>>& saved) {
    if (saved.size() != slots_.size())
      throw std::invalid_argument("optimizer: saved state has a different parameter count");
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (saved[i].name != slots_[i].name)
        throw std::invalid_argument("optimizer: saved state names do not match");
      if (saved[i].m.size() != slots_[i].m.size() || saved[i].v.size() != slots_[i].v.size())
        throw std::invalid_argument("optimizer: saved state shapes do not match");
      slots_[i] = saved[i];
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<nn::Tensor<S>*> params_;
  std::vector<OptimizerSlot<S>> slots_;
};

}  // namespace attnreg::train
