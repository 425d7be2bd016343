#pragma once

// Training loops: the two-stage decoupled strategy (pretrain the visual
// expert, freeze it, finetune the ratio head + injection layers) and plain
// end-to-end multi-task training. Serial and fully deterministic for a fixed
// seed: sample order comes from one seeded shuffle stream.

#include "attnreg/data/bridge.hpp"
#include "attnreg/data/foreground.hpp"
#include "attnreg/data/preprocess.hpp"
#include "attnreg/data/types.hpp"
#include "attnreg/losses/losses.hpp"
#include "attnreg/model/model.hpp"
#include "attnreg/train/checkpoint.hpp"
#include "attnreg/train/optimizer.hpp"

#include <algorithm>

namespace attnreg::train {

enum class PhaseKind { phase1, phase2, full_mtl };

inline std::string phase_name(PhaseKind k) {
  switch (k) {
    case PhaseKind::phase1: return "phase1";
    case PhaseKind::phase2: return "phase2";
    case PhaseKind::full_mtl: return "full_mtl";
  }
  throw std::logic_error("unknown phase");
}

inline PhaseKind phase_from_name(const std::string& s) {
  if (s == "phase1") return PhaseKind::phase1;
  if (s == "phase2") return PhaseKind::phase2;
  if (s == "full_mtl") return PhaseKind::full_mtl;
  throw std::invalid_argument("unknown phase: " + s);
}

struct PhaseConfig {
  PhaseKind phase = PhaseKind::phase1;
  std::vector<std::string> trainable_groups;  // empty -> phase defaults
  double learning_rate = 1e-4;
  int epochs = 40;
  int batch_size = 8;
  losses::LossWeights weights;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;  // lr field is overridden by learning_rate

  static PhaseConfig phase1_defaults() {
    PhaseConfig c;
    c.phase = PhaseKind::phase1;
    c.learning_rate = 1e-4;
    c.epochs = 40;
    c.weights.alpha = 1.0;
    c.weights.beta = 0.0;
    c.weights.gamma = 0.1;
    return c;
  }
  static PhaseConfig phase2_defaults() {
    PhaseConfig c;
    c.phase = PhaseKind::phase2;
    c.learning_rate = 1e-5;
    c.epochs = 20;
    c.weights.alpha = 0.0;
    c.weights.beta = 1.0;
    c.weights.gamma = 0.1;
    return c;
  }
  static PhaseConfig full_mtl_defaults() {
    PhaseConfig c;
    c.phase = PhaseKind::full_mtl;
    c.learning_rate = 1e-4;
    c.epochs = 60;
    c.weights.alpha = 1.0;
    c.weights.beta = 1.0;
    c.weights.gamma = 0.1;
    return c;
  }

  // Fill trainable_groups for the given model if unset, then enforce the
  // per-phase contracts.
  std::vector<std::string> resolve_trainable(const std::vector<std::string>& model_groups) const {
    std::vector<std::string> t = trainable_groups;
    if (t.empty()) {
      switch (phase) {
        case PhaseKind::phase1:
          for (const auto& g : model_groups)
            if (g != "reg_branch") t.push_back(g);
          break;
        case PhaseKind::phase2:
          t = {"reg_branch", "injection"};
          break;
        case PhaseKind::full_mtl:
          t = model_groups;
          break;
      }
    }
    for (const auto& g : t)
      if (std::find(model_groups.begin(), model_groups.end(), g) == model_groups.end())
        throw std::invalid_argument("phase config: group '" + g + "' not present in the model");
    auto has = [&](const char* g) { return std::find(t.begin(), t.end(), g) != t.end(); };
    switch (phase) {
      case PhaseKind::phase1:
        if (weights.beta != 0.0)
          throw std::invalid_argument("phase1 requires weights.beta == 0");
        if (!has("backbone") || !has("seg_branch"))
          throw std::invalid_argument("phase1 must train backbone and seg_branch");
        break;
      case PhaseKind::phase2: {
        std::vector<std::string> sorted = t;
        std::sort(sorted.begin(), sorted.end());
        if (sorted != std::vector<std::string>{"injection", "reg_branch"})
          throw std::invalid_argument("phase2 trains exactly {reg_branch, injection}");
        break;
      }
      case PhaseKind::full_mtl:
        if (t.size() != model_groups.size())
          throw std::invalid_argument("full_mtl trains every group");
        break;
    }
    validate();
    return t;
  }

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("phase config: learning rate must be > 0");
    if (epochs < 1) throw std::invalid_argument("phase config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("phase config: batch size must be >= 1");
    weights.validate();
  }
};

// One sample converted to graph inputs once, before the epoch loop.
template <typename S>
struct PreppedSample {
  std::string id;
  nn::Tensor<S> image;      // {1, H, W}
  nn::Tensor<S> frag_mask;  // undefined when the sample has no pixel labels
  double embryo_area = 0;   // exact when an embryo mask exists, else estimated
  losses::RegTarget target;
  bool has_mask = false;
};

template <typename S>
PreppedSample<S> prep_sample(const data::ImageSample& s, int input_size) {
  data::validate_sample(s);
  PreppedSample<S> out;
  out.id = s.id;

  util::Image img = s.image;
  std::optional<util::Mask> frag = s.fragment_mask;
  std::optional<util::Mask> embryo = s.embryo_mask;
  if (img.h != input_size || img.w != input_size) {
    auto [scaled, pad] = data::preprocess_image(s.image, input_size);
    img = std::move(scaled);
    if (frag) frag = data::preprocess_mask(*frag, pad);
    if (embryo) embryo = data::preprocess_mask(*embryo, pad);
  }

  out.image = data::image_tensor<S>(img);
  if (frag) {
    out.frag_mask = data::mask_tensor<S>(*frag);
    out.has_mask = true;
  }
  out.embryo_area =
      double(embryo ? embryo->count() : data::estimate_embryo_mask(img).count());

  if (s.ratio)
    out.target = losses::RegTarget::paired(*s.ratio);
  else if (s.grade)
    out.target = losses::RegTarget::weak(*s.grade);
  return out;
}

template <typename S>
std::vector<PreppedSample<S>> prep_samples(const std::vector<data::ImageSample>& in,
                                           int input_size) {
  std::vector<PreppedSample<S>> out;
  out.reserve(in.size());
  for (const auto& s : in) out.push_back(prep_sample<S>(s, input_size));
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double total = 0;
  std::optional<double> seg;   // absent whenever the term was never active
  std::optional<double> reg;
  std::optional<double> cons;
};

template <typename S>
struct TrainResult {
  Checkpoint<S> ckpt;
  std::vector<EpochRecord> curve;
};

// mark exactly the listed groups trainable (gradients stop at everything else)
template <typename S>
void set_trainable_exactly(model::Model<S>& m, const std::vector<std::string>& groups) {
  for (const auto& g : m.params().groups())
    m.params().set_group_trainable(
        g, std::find(groups.begin(), groups.end(), g) != groups.end());
}

// freeze the listed groups in place; their parameters stay bit-identical
// through any subsequent optimizer steps
template <typename S>
void freeze_groups(model::Model<S>& m, const std::vector<std::string>& groups) {
  for (const auto& g : groups) m.params().set_group_trainable(g, false);
}

namespace detail {

// Per-sample composite loss: weights are silenced per sample for targets the
// sample or the model cannot supply (a weak sample contributes no mask term).
template <typename S>
losses::TotalLoss<S> sample_loss(const model::ModelOutputs<S>& out, const PreppedSample<S>& s,
                                 const losses::LossWeights& w) {
  losses::LossWeights eff = w;
  if (!out.logits || !s.has_mask) eff.alpha = 0.0;
  if (!out.y_hat || (!s.target.ratio && !s.target.grade)) eff.beta = 0.0;
  if (!out.y_hat || !out.logits || s.embryo_area <= 0) eff.gamma = 0.0;
  return losses::total_loss<S>(
      [&] { return losses::seg_loss(*out.logits, s.frag_mask, eff); },
      [&] { return losses::reg_loss(*out.y_hat, s.target); },
      [&] { return losses::consistency_loss(*out.y_hat, *out.logits, s.embryo_area); }, eff);
}

struct TermAccum {
  double sum = 0;
  std::int64_t n = 0;
  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  std::optional<double> mean() const {
    return n ? std::optional<double>(sum / double(n)) : std::nullopt;
  }
};

}  // namespace detail

// Shared epoch loop. `parent_digest` records lineage; the caller has already
// loaded parent parameters into the model when one exists.
template <typename S>
TrainResult<S> run_phase(model::Model<S>& m, const std::vector<PreppedSample<S>>& samples,
                         const PhaseConfig& cfg, const std::string& config_json,
                         const std::string& parent_digest) {
  if (samples.empty()) throw std::invalid_argument("training: no samples");
  const auto trainable = cfg.resolve_trainable(m.params().groups());
  set_trainable_exactly(m, trainable);

  OptimizerConfig ocfg = cfg.optimizer;
  ocfg.lr = cfg.learning_rate;
  AdamW<S> opt(m.params(), trainable, ocfg);

  nn::Rng rng(nn::mix_seed(cfg.seed, 0x73687566666cULL));
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult<S> result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(rng.uniform_int(0, std::int64_t(i) - 1))]);

    detail::TermAccum seg, reg, cons;
    double total_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
      const S inv = S(1.0 / double(end - start));
      nn::Tensor<S> batch_loss = nn::Tensor<S>::scalar(S(0));
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[order[k]];
        const auto out = m.forward(s.image);
        auto tl = detail::sample_loss(out, s, cfg.weights);
        seg.add(tl.seg);
        reg.add(tl.reg);
        cons.add(tl.cons);
        total_sum += double(tl.total.value()[0]);
        batch_loss = nn::add(batch_loss, nn::scale(tl.total, inv));
      }
      nn::GradStore<S> grads;
      nn::backward(batch_loss, grads);
      opt.step(grads);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.total = total_sum / double(samples.size());
    rec.seg = seg.mean();
    rec.reg = reg.mean();
    rec.cons = cons.mean();
    result.curve.push_back(rec);
  }

  result.ckpt.phase = phase_name(cfg.phase);
  result.ckpt.epoch = cfg.epochs;
  result.ckpt.config_json = config_json;
  result.ckpt.parent_digest = parent_digest;
  result.ckpt.rng_state = rng.state();
  result.ckpt.params = capture_params(m.params());
  result.ckpt.opt = opt.slots();
  return result;
}

// Phase 1: visual-expert pretraining on pixel-supervised data only.
template <typename S>
TrainResult<S> train_phase1(model::Model<S>& m, const std::vector<PreppedSample<S>>& paired,
                            const PhaseConfig& cfg, const std::string& config_json) {
  if (cfg.phase != PhaseKind::phase1) throw std::invalid_argument("expected a phase1 config");
  if (paired.empty())
    throw std::invalid_argument("Phase 1 requires pixel supervision: paired set is empty");
  for (const auto& s : paired)
    if (!s.has_mask)
      throw std::invalid_argument("Phase 1 requires pixel supervision: sample " + s.id +
                                  " has no fragment mask");
  if (!m.has_seg_branch()) throw std::invalid_argument("Phase 1 needs a segmentation branch");
  return run_phase(m, paired, cfg, config_json, "");
}

// Phase 2: load the phase-1 weights, freeze backbone + segmentation branch,
// finetune the ratio head and the injection layers on paired ∪ weak data.
template <typename S>
TrainResult<S> train_phase2(model::Model<S>& m, const std::vector<PreppedSample<S>>& samples,
                            const LoadedCheckpoint<S>& phase1, const PhaseConfig& cfg,
                            const std::string& config_json) {
  if (cfg.phase != PhaseKind::phase2) throw std::invalid_argument("expected a phase2 config");
  if (phase1.ckpt.phase != "phase1")
    throw std::invalid_argument("phase2 requires a phase1 checkpoint in its lineage, got '" +
                                phase1.ckpt.phase + "'");
  if (!m.has_reg_branch()) throw std::invalid_argument("Phase 2 needs a regression branch");
  apply_params(phase1.ckpt, m.params());
  return run_phase(m, samples, cfg, config_json, phase1.digest);
}

// Single-stage end-to-end training with every group trainable.
template <typename S>
TrainResult<S> train_full_mtl(model::Model<S>& m, const std::vector<PreppedSample<S>>& samples,
                              const PhaseConfig& cfg, const std::string& config_json) {
  if (cfg.phase != PhaseKind::full_mtl) throw std::invalid_argument("expected a full_mtl config");
  return run_phase(m, samples, cfg, config_json, "");
}

}  // namespace attnreg::train
