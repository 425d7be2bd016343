#pragma once

// The seven-row ablation study: decoder variants, training strategies, and
// injection wiring, all trained/evaluated on one shared split with one seed.
// Reference columns carry the results reported for the original (private)
// clinical dataset; they are context for reading the table, not targets the
// phantom runs are expected to reproduce.

#include "attnreg/eval/metrics.hpp"
#include "attnreg/train/trainer.hpp"

#include <iomanip>
#include <sstream>

namespace attnreg::eval {

struct EvalRow {
  std::string exp_id;
  std::string arch;
  std::string strategy;
  std::string loss_setting;
  std::optional<double> dice;
  std::optional<double> mae_direct;
  std::optional<double> mae_from_mask;
  std::optional<double> ref_dice;  // clinical-dataset reference, context only
  std::optional<double> ref_mae;
  int n_val = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string opt_json(const std::optional<double>& v) { return v ? num(*v) : "null"; }

inline std::string opt_cell(const std::optional<double>& v, int prec = 4) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, *v);
  return buf;
}

}  // namespace detail

struct EvalReport {
  std::vector<EvalRow> rows;

  std::string to_jsonl() const {
    std::ostringstream os;
    for (const auto& r : rows) {
      os << "{\"exp_id\":\"" << r.exp_id << "\",\"arch\":\"" << r.arch << "\",\"strategy\":\""
         << r.strategy << "\",\"loss_setting\":\"" << r.loss_setting
         << "\",\"dice\":" << detail::opt_json(r.dice)
         << ",\"mae_direct\":" << detail::opt_json(r.mae_direct)
         << ",\"mae_from_mask\":" << detail::opt_json(r.mae_from_mask)
         << ",\"ref_dice\":" << detail::opt_json(r.ref_dice)
         << ",\"ref_mae\":" << detail::opt_json(r.ref_mae) << ",\"n_val\":" << r.n_val
         << ",\"seed\":" << r.seed << "}\n";
    }
    return os.str();
  }

  std::string to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(9) << "exp" << std::setw(30) << "architecture" << std::setw(13)
       << "strategy" << std::setw(26) << "loss" << std::right << std::setw(8) << "dice"
       << std::setw(8) << "mae" << std::setw(9) << "mae_msk" << std::setw(10) << "ref_dice"
       << std::setw(9) << "ref_mae" << "\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(9) << r.exp_id << std::setw(30) << r.arch << std::setw(13)
         << r.strategy << std::setw(26) << r.loss_setting << std::right << std::setw(8)
         << detail::opt_cell(r.dice) << std::setw(8) << detail::opt_cell(r.mae_direct)
         << std::setw(9) << detail::opt_cell(r.mae_from_mask) << std::setw(10)
         << detail::opt_cell(r.ref_dice, 3) << std::setw(9) << detail::opt_cell(r.ref_mae, 3)
         << "\n";
    }
    return os.str();
  }
};

struct AblationConfig {
  model::ModelConfig base;  // full wiring; rows toggle branches/gate/injection
  train::PhaseConfig phase1 = train::PhaseConfig::phase1_defaults();
  train::PhaseConfig phase2 = train::PhaseConfig::phase2_defaults();
  train::PhaseConfig full_mtl = train::PhaseConfig::full_mtl_defaults();
  int input_size = 96;
  std::uint64_t seed = 0;

  void validate() const {
    base.validate();
    phase1.validate();
    phase2.validate();
    full_mtl.validate();
    if (input_size < 32) throw std::invalid_argument("ablation: input size too small");
  }
};

namespace detail {

template <typename S>
model::Model<S> make_variant(const AblationConfig& cfg, bool seg, bool reg, bool gate,
                             bool inject) {
  model::ModelConfig mc = cfg.base;
  mc.with_seg_branch = seg;
  mc.with_reg_branch = reg;
  mc.attention_gate = gate;
  mc.injection_connected = inject;
  mc.init_seed = cfg.seed;
  return model::Model<S>(mc);
}

inline std::string row_json(const std::string& exp_id, const AblationConfig& cfg) {
  std::ostringstream os;
  os << "{\"ablation_row\":\"" << exp_id << "\",\"input_size\":" << cfg.input_size
     << ",\"seed\":" << cfg.seed << "}";
  return os.str();
}

}  // namespace detail

// Train and evaluate all seven rows on one split. Every row starts from the
// same parameter seed and sees the same validation list; rows differ only in
// wiring and training recipe.
template <typename S>
EvalReport run_ablation(const AblationConfig& cfg, const data::DatasetSplit& split) {
  cfg.validate();
  if (split.val.empty()) throw std::invalid_argument("ablation: empty validation set");

  const auto paired = train::prep_samples<S>(split.paired, cfg.input_size);
  const auto weak = train::prep_samples<S>(split.weak, cfg.input_size);
  auto both = paired;
  both.insert(both.end(), weak.begin(), weak.end());

  train::PhaseConfig p1 = cfg.phase1;
  train::PhaseConfig p2 = cfg.phase2;
  train::PhaseConfig mtl = cfg.full_mtl;
  p1.seed = p2.seed = mtl.seed = cfg.seed;

  EvalReport rep;
  auto push = [&](const std::string& id, const std::string& arch, const std::string& strategy,
                  const std::string& loss, const model::Model<S>& m, bool with_reg,
                  std::optional<double> ref_dice, std::optional<double> ref_mae) {
    const auto met = evaluate_split(m, split.val, cfg.input_size, with_reg);
    EvalRow r;
    r.exp_id = id;
    r.arch = arch;
    r.strategy = strategy;
    r.loss_setting = loss;
    r.dice = met.dice;
    r.mae_direct = with_reg ? met.mae_direct : std::nullopt;
    r.mae_from_mask = met.mae_from_mask;
    r.ref_dice = ref_dice;
    r.ref_mae = ref_mae;
    r.n_val = met.n;
    r.seed = cfg.seed;
    rep.rows.push_back(r);
  };

  {  // plain decoder, no gate, no injection, mask supervision only
    auto m = detail::make_variant<S>(cfg, true, false, false, false);
    train::train_phase1(m, paired, p1, detail::row_json("baseline", cfg));
    push("baseline", "vanilla decoder", "single task", "seg + cons", m, false, 0.717,
         std::nullopt);
  }
  {  // gated decoder, still single task
    auto m = detail::make_variant<S>(cfg, true, false, true, false);
    train::train_phase1(m, paired, p1, detail::row_json("A", cfg));
    push("A", "attention decoder", "single task", "seg + cons", m, false, 0.729, std::nullopt);
  }
  {  // direct regression, paired data only, no hinge
    auto m = detail::make_variant<S>(cfg, false, true, false, false);
    train::train_full_mtl(m, paired, mtl, detail::row_json("B1", cfg));
    push("B1", "regression only", "single task", "pre", m, true, std::nullopt, 0.057);
  }
  {  // direct regression with weak grades through the interval hinge
    auto m = detail::make_variant<S>(cfg, false, true, false, false);
    train::train_full_mtl(m, both, mtl, detail::row_json("B2", cfg));
    push("B2", "regression only", "single task", "pre + range", m, true, std::nullopt, 0.051);
  }
  {  // everything on, trained end to end
    auto m = detail::make_variant<S>(cfg, true, true, true, true);
    train::train_full_mtl(m, both, mtl, detail::row_json("C", cfg));
    push("C", "attention decoder", "full MTL", "total", m, true, 0.716, 0.046);
  }
  {  // everything on, two-stage: pretrain the mask path, then finetune ratio
    auto m = detail::make_variant<S>(cfg, true, true, true, true);
    auto r1 = train::train_phase1(m, paired, p1, detail::row_json("D", cfg));
    const auto bytes = train::serialize_checkpoint(r1.ckpt);
    train::LoadedCheckpoint<S> loaded{r1.ckpt, util::sha256_hex(bytes)};
    train::train_phase2(m, both, loaded, p2, detail::row_json("D", cfg));
    push("D", "attention decoder", "decoupled", "phase1: seg / phase2: reg", m, true, 0.729,
         0.049);
  }
  {  // injection severed: ratio head learns, decoder never hears about it
    auto m = detail::make_variant<S>(cfg, true, true, true, false);
    train::train_full_mtl(m, both, mtl, detail::row_json("E", cfg));
    push("E", "attention decoder (no inject)", "full MTL", "total", m, true, 0.678, 0.053);
  }
  return rep;
}

}  // namespace attnreg::eval
