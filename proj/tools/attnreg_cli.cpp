// attnreg: dataset generation, two-stage training, evaluation, the ablation
// grid, and single-image prediction behind one config-driven command.
//
// Exit codes: 0 success, 1 usage error (bad flags or config), 2 runtime
// failure (missing artifacts, I/O, training errors).

#include "attnreg/cli/config.hpp"
#include "attnreg/data/dataset.hpp"
#include "attnreg/data/phantom.hpp"
#include "attnreg/data/preprocess.hpp"
#include "attnreg/eval/ablation.hpp"
#include "attnreg/eval/metrics.hpp"
#include "attnreg/train/checkpoint.hpp"
#include "attnreg/train/trainer.hpp"
#include "attnreg/util/png_io.hpp"
#include "attnreg/util/sha256.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace attnreg;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// CLI flags override the config document before parsing, so every invariant
// (seed-when-deterministic, field validation) is enforced in one place.
struct Overrides {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::string> out;
  bool no_inject = false;
};

cli::RunConfig effective_config(const std::optional<std::string>& config_path,
                                const Overrides& ov) {
  nlohmann::json doc = nlohmann::json::object();
  if (config_path) {
    const std::string text = [&] {
      std::ifstream f(*config_path, std::ios::binary);
      if (!f) throw std::invalid_argument("config: cannot open " + *config_path);
      std::ostringstream ss;
      ss << f.rdbuf();
      return ss.str();
    }();
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("config: " + *config_path + ": not valid JSON: " + e.what());
    }
    if (!doc.is_object())
      throw std::invalid_argument("config: " + *config_path + ": top level must be a JSON object");
  }
  if (ov.seed) doc["seed"] = *ov.seed;
  if (ov.deterministic) doc["deterministic"] = true;
  if (ov.out) doc["out_dir"] = *ov.out;
  if (ov.no_inject) {
    if (doc.contains("model") && !doc["model"].is_object())
      throw std::invalid_argument("config: model: must be an object");
    doc["model"]["injection_connected"] = false;
  }
  return cli::parse_config(doc.dump());
}

void require_dataset(const cli::RunConfig& cfg) {
  if (!fs::exists(cfg.data.dir))
    throw std::invalid_argument("config: data.dir: directory '" + cfg.data.dir +
                                "' does not exist (run `attnreg generate` first)");
}

std::string grade_str(grading::Grade g) { return std::string(1, grading::grade_letter(g)); }

// ---------------------------------------------------------------- generate

int cmd_generate(const cli::RunConfig& cfg, const std::optional<std::string>& out_flag) {
  if (cfg.data.n_paired == 0)
    std::cerr << "warning: n_paired is 0 — Phase 1 needs pixel-supervised samples, so "
                 "phase1/decoupled training will be impossible on this dataset\n";
  const fs::path dir = out_flag ? *out_flag : cfg.data.dir;
  const auto split = data::build_split(cfg.data.n_paired, cfg.data.n_weak, cfg.data.n_val,
                                       cli::make_phantom_config(cfg));
  data::save_split(split, dir);

  std::array<int, 4> counts{};
  int total = 0;
  for (const auto* list : {&split.paired, &split.weak, &split.val})
    for (const auto& s : *list) {
      ++counts[std::size_t(int(*s.grade))];
      ++total;
    }

  // one combined manifest at the top level: the per-split manifests
  // concatenated in paired/weak/val order, one line per sample
  std::string combined;
  for (const char* name : {"paired", "weak", "val"}) combined += slurp(dir / name / "manifest.jsonl");
  spill(dir / "manifest.jsonl", combined);
  const auto lines = std::count(combined.begin(), combined.end(), '\n');

  std::cout << "generated " << total << " samples into " << dir.string() << "\n";
  for (int g = 0; g < 4; ++g)
    std::cout << "  grade " << char('A' + g) << ": " << counts[std::size_t(g)] << "\n";
  std::cout << "manifest lines: " << lines << "\n";
  std::cout << "manifest digest: " << util::sha256_hex(combined) << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

void write_curve(const fs::path& path, const std::vector<train::EpochRecord>& curve) {
  std::ostringstream os;
  for (const auto& r : curve)
    os << "{\"epoch\":" << r.epoch << ",\"total\":" << eval::detail::num(r.total)
       << ",\"seg\":" << eval::detail::opt_json(r.seg)
       << ",\"reg\":" << eval::detail::opt_json(r.reg)
       << ",\"cons\":" << eval::detail::opt_json(r.cons) << "}\n";
  spill(path, os.str());
}

void print_curve_tail(const std::string& tag, const std::vector<train::EpochRecord>& curve) {
  if (curve.empty()) return;
  const auto& r = curve.back();
  std::cout << "[" << tag << "] epoch " << r.epoch << ": total " << eval::detail::num(r.total);
  if (r.seg) std::cout << " seg " << eval::detail::num(*r.seg);
  if (r.reg) std::cout << " reg " << eval::detail::num(*r.reg);
  if (r.cons) std::cout << " cons " << eval::detail::num(*r.cons);
  std::cout << "\n";
}

void print_val(const model::Model<float>& m, const data::DatasetSplit& split, int input_size,
               bool with_reg) {
  if (split.val.empty()) return;
  const auto met = eval::evaluate_split(m, split.val, input_size, with_reg);
  std::cout << "val:";
  if (met.dice) std::cout << " dice " << eval::detail::num(*met.dice);
  if (met.mae_direct) std::cout << " mae_direct " << eval::detail::num(*met.mae_direct);
  if (met.mae_from_mask) std::cout << " mae_from_mask " << eval::detail::num(*met.mae_from_mask);
  std::cout << " (n=" << met.n << ")\n";
}

int cmd_train(cli::RunConfig cfg, const std::string& mode,
              const std::optional<std::string>& from_ckpt) {
  if (mode == "phase2" && !from_ckpt)
    throw std::invalid_argument("train --mode phase2 requires --from-checkpoint <phase1 file>");

  require_dataset(cfg);
  const auto split = data::load_split(cfg.data.dir);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);

  // a standalone phase2 must rebuild the exact architecture the parent was
  // trained with; hyperparameters still come from the current config
  std::optional<train::LoadedCheckpoint<float>> parent;
  if (from_ckpt) {
    parent = train::load_checkpoint<float>(*from_ckpt);
    try {
      cfg.model = cli::parse_config(parent->ckpt.config_json).model;
    } catch (const std::invalid_argument&) {
      // checkpoint from a non-CLI producer: keep the current model block
    }
  }

  model::Model<float> m(cli::make_model_config(cfg));
  const std::string config_json = cli::serialize_config(cfg);
  const int input = cfg.model.input_size;
  const auto paired = train::prep_samples<float>(split.paired, input);
  auto both = paired;
  {
    const auto weak = train::prep_samples<float>(split.weak, input);
    both.insert(both.end(), weak.begin(), weak.end());
  }

  auto finish = [&](const char* tag, const train::TrainResult<float>& r) {
    const fs::path ckpt_path = out / (std::string(tag) + ".ckpt");
    const auto digest = train::save_checkpoint(ckpt_path.string(), r.ckpt);
    write_curve(out / (std::string(tag) + "_curve.jsonl"), r.curve);
    print_curve_tail(tag, r.curve);
    std::cout << tag << " checkpoint: " << ckpt_path.string() << " (digest " << digest << ")\n";
    return digest;
  };

  if (mode == "phase1") {
    const auto r = train::train_phase1(m, paired, cli::make_phase_config(cfg, train::PhaseKind::phase1),
                                       config_json);
    finish("phase1", r);
    print_val(m, split, input, false);
  } else if (mode == "phase2") {
    const auto r = train::train_phase2(m, both, *parent,
                                       cli::make_phase_config(cfg, train::PhaseKind::phase2),
                                       config_json);
    const auto d = finish("phase2", r);
    (void)d;
    std::cout << "lineage: parent digest " << r.ckpt.parent_digest << "\n";
    print_val(m, split, input, true);
  } else if (mode == "full_mtl") {
    const auto r = train::train_full_mtl(m, both,
                                         cli::make_phase_config(cfg, train::PhaseKind::full_mtl),
                                         config_json);
    finish("full_mtl", r);
    print_val(m, split, input, true);
  } else if (mode == "decoupled") {
    const auto r1 = train::train_phase1(m, paired,
                                        cli::make_phase_config(cfg, train::PhaseKind::phase1),
                                        config_json);
    const auto d1 = finish("phase1", r1);
    const train::LoadedCheckpoint<float> link{r1.ckpt, d1};
    const auto r2 = train::train_phase2(m, both, link,
                                        cli::make_phase_config(cfg, train::PhaseKind::phase2),
                                        config_json);
    const auto d2 = finish("phase2", r2);
    (void)d2;
    std::cout << "lineage: phase2 parent digest " << r2.ckpt.parent_digest << " == phase1 digest "
              << d1 << "\n";
    print_val(m, split, input, true);
  } else {
    throw std::invalid_argument("train: unknown --mode '" + mode + "'");
  }
  return 0;
}

// -------------------------------------------------------------------- eval

// rebuild the model a checkpoint describes; throws a runtime error (not a
// usage error) because a checkpoint without a usable config is a broken artifact
model::Model<float> model_from_checkpoint(const train::LoadedCheckpoint<float>& loaded,
                                          cli::RunConfig& ckcfg) {
  try {
    ckcfg = cli::parse_config(loaded.ckpt.config_json);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("checkpoint carries no usable run configuration (" +
                             std::string(e.what()) + ")");
  }
  model::Model<float> m(cli::make_model_config(ckcfg));
  train::apply_params(loaded.ckpt, m.params());
  return m;
}

int cmd_eval(const cli::RunConfig& cfg, const std::string& ckpt_path) {
  const auto loaded = train::load_checkpoint<float>(ckpt_path);
  cli::RunConfig ckcfg;
  const auto m = model_from_checkpoint(loaded, ckcfg);

  require_dataset(cfg);
  const auto split = data::load_split(cfg.data.dir);
  const bool with_reg = loaded.ckpt.phase != "phase1";
  const auto met = eval::evaluate_split(m, split.val, ckcfg.model.input_size, with_reg);

  std::ostringstream os;
  os << "{\"checkpoint\":\"" << loaded.digest << "\",\"phase\":\"" << loaded.ckpt.phase
     << "\",\"n_val\":" << met.n;
  if (met.dice) os << ",\"dice\":" << eval::detail::num(*met.dice);
  if (met.mae_direct) os << ",\"mae_direct\":" << eval::detail::num(*met.mae_direct);
  if (met.mae_from_mask) os << ",\"mae_from_mask\":" << eval::detail::num(*met.mae_from_mask);
  os << "}\n";

  fs::create_directories(cfg.out_dir);
  spill(fs::path(cfg.out_dir) / "metrics.json", os.str());
  std::cout << os.str();
  return 0;
}

// ------------------------------------------------------------------ ablate

int cmd_ablate(const cli::RunConfig& cfg) {
  require_dataset(cfg);
  const auto split = data::load_split(cfg.data.dir);

  eval::AblationConfig acfg;
  acfg.base = cli::make_model_config(cfg);
  acfg.phase1 = cli::make_phase_config(cfg, train::PhaseKind::phase1);
  acfg.phase2 = cli::make_phase_config(cfg, train::PhaseKind::phase2);
  acfg.full_mtl = cli::make_phase_config(cfg, train::PhaseKind::full_mtl);
  acfg.input_size = cfg.model.input_size;
  acfg.seed = cfg.seed;

  const auto rep = eval::run_ablation<float>(acfg, split);
  fs::create_directories(cfg.out_dir);
  spill(fs::path(cfg.out_dir) / "report.jsonl", rep.to_jsonl());
  spill(fs::path(cfg.out_dir) / "report.txt", rep.to_table());
  std::cout << rep.to_table();
  std::cout << "report: " << (fs::path(cfg.out_dir) / "report.jsonl").string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- predict

util::Mask boundary(const util::Mask& m) {
  util::Mask b(m.h, m.w, 0);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == m.h - 1 || x == m.w - 1;
      if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1))
        b.at(y, x) = 1;
    }
  return b;
}

int cmd_predict(const cli::RunConfig& cfg, const std::string& ckpt_path,
                const std::string& image_path, const std::optional<std::string>& mask_path) {
  const auto loaded = train::load_checkpoint<float>(ckpt_path);
  cli::RunConfig ckcfg;
  const auto m = model_from_checkpoint(loaded, ckcfg);
  const int input = ckcfg.model.input_size;

  const util::Image raw = util::read_png_gray(image_path);
  std::optional<util::Mask> gt;
  if (mask_path) {
    gt = util::read_png_mask(*mask_path);
    if (gt->h != raw.h || gt->w != raw.w)
      throw std::invalid_argument("predict: mask size does not match the image");
  }
  util::Image img = raw;
  if (raw.h != input || raw.w != input) {
    auto [scaled, pad] = data::preprocess_image(raw, input);
    img = std::move(scaled);
    if (gt) gt = data::preprocess_mask(*gt, pad);
  }

  const auto est = eval::grade_sample(m, img);

  // the direct head only carries meaning once it has been finetuned
  if (est.y_direct && loaded.ckpt.phase != "phase1") {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *est.y_direct);
    std::cout << "y_direct:    " << buf << " (grade " << grade_str(*est.grade_direct) << ")\n";
  } else {
    std::cout << "y_direct:    unavailable ("
              << (est.y_direct ? "phase1 checkpoint: head not finetuned" : "no regression head")
              << ")\n";
  }
  if (est.y_from_mask) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *est.y_from_mask);
    std::cout << "y_from_mask: " << buf << " (grade " << grade_str(*est.grade_from_mask) << ")\n";
  } else {
    std::cout << "y_from_mask: unavailable ("
              << (m.has_seg_branch() ? "no embryo region found" : "no segmentation branch")
              << ")\n";
  }

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);

  if (m.has_seg_branch()) {
    // grayscale base, ground truth boundary in blue, prediction boundary in green
    std::vector<std::uint8_t> rgb(std::size_t(img.size()) * 3);
    for (std::int64_t i = 0; i < img.size(); ++i) {
      const auto v =
          std::uint8_t(std::lround(std::clamp(img.pix[std::size_t(i)], 0.f, 1.f) * 255.f));
      rgb[std::size_t(i) * 3] = rgb[std::size_t(i) * 3 + 1] = rgb[std::size_t(i) * 3 + 2] = v;
    }
    auto paint = [&](const util::Mask& b, std::uint8_t r, std::uint8_t g, std::uint8_t bl) {
      for (std::int64_t i = 0; i < b.size(); ++i)
        if (b.pix[std::size_t(i)]) {
          rgb[std::size_t(i) * 3] = r;
          rgb[std::size_t(i) * 3 + 1] = g;
          rgb[std::size_t(i) * 3 + 2] = bl;
        }
    };
    if (gt) paint(boundary(*gt), 0, 0, 255);
    paint(boundary(est.pred_mask), 0, 255, 0);
    util::write_png_rgb((out / "overlay.png").string(), img.h, img.w, rgb);
    util::write_png_mask((out / "pred_mask.png").string(), est.pred_mask);
    std::cout << "wrote " << (out / "overlay.png").string() << "\n";
    std::cout << "wrote " << (out / "pred_mask.png").string() << "\n";
  }
  if (est.alpha.size() > 0) {
    util::write_png_gray((out / "attention.png").string(), est.alpha);
    std::cout << "wrote " << (out / "attention.png").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embryo fragmentation grading: phantom data, two-stage training, evaluation"};
  app.require_subcommand(1);

  std::string config_path, mode, from_ckpt, image_path, mask_path, out_path;
  std::uint64_t seed = 0;
  bool deterministic = false, no_inject = false;

  auto add_common = [&](CLI::App* c, bool with_config = true) {
    struct Opts {
      CLI::Option* config = nullptr;
      CLI::Option* seed = nullptr;
      CLI::Option* out = nullptr;
    } o;
    if (with_config)
      o.config = c->add_option("--config", config_path, "run configuration file (JSON)");
    o.seed = c->add_option("--seed", seed, "override the config seed");
    c->add_flag("--deterministic", deterministic,
                "require a fixed seed and fully reproducible outputs");
    o.out = c->add_option("--out", out_path, "override the output directory");
    return o;
  };

  auto* gen = app.add_subcommand("generate", "synthesize a phantom dataset (paired/weak/val)");
  const auto gen_o = add_common(gen);

  auto* tr = app.add_subcommand("train", "train the model per the configured recipe");
  const auto tr_o = add_common(tr);
  tr->add_option("--mode", mode, "phase1 | phase2 | full_mtl | decoupled")
      ->required()
      ->check(CLI::IsMember({"phase1", "phase2", "full_mtl", "decoupled"}));
  auto* tr_from = tr->add_option("--from-checkpoint", from_ckpt, "phase1 checkpoint to start from");
  tr->add_flag("--no-inject", no_inject, "disconnect the latent feature injection path");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the configured val split");
  const auto ev_o = add_common(ev);
  ev->add_option("--from-checkpoint", from_ckpt, "checkpoint to evaluate")->required();

  auto* ab = app.add_subcommand("ablate", "train and score the seven-row experiment grid");
  const auto ab_o = add_common(ab);

  auto* pr = app.add_subcommand("predict", "grade one image and write overlay/attention maps");
  const auto pr_o = add_common(pr);
  pr->add_option("--from-checkpoint", from_ckpt, "checkpoint to predict with")->required();
  pr->add_option("image", image_path, "grayscale PNG to grade")->required();
  auto* pr_mask = pr->add_option("--mask", mask_path, "ground-truth fragment mask for the overlay");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    auto overrides = [&](const auto& o) {
      Overrides ov;
      if (o.seed->count()) ov.seed = seed;
      ov.deterministic = deterministic;
      if (o.out->count()) ov.out = out_path;
      ov.no_inject = no_inject;
      return ov;
    };
    auto maybe_config = [&](const auto& o) -> std::optional<std::string> {
      return o.config->count() ? std::optional<std::string>(config_path) : std::nullopt;
    };

    if (gen->parsed()) {
      const auto ov = overrides(gen_o);
      return cmd_generate(effective_config(maybe_config(gen_o), ov), ov.out);
    }
    if (tr->parsed())
      return cmd_train(effective_config(maybe_config(tr_o), overrides(tr_o)), mode,
                       tr_from->count() ? std::optional<std::string>(from_ckpt) : std::nullopt);
    if (ev->parsed())
      return cmd_eval(effective_config(maybe_config(ev_o), overrides(ev_o)), from_ckpt);
    if (ab->parsed()) return cmd_ablate(effective_config(maybe_config(ab_o), overrides(ab_o)));
    if (pr->parsed())
      return cmd_predict(effective_config(maybe_config(pr_o), overrides(pr_o)), from_ckpt,
                         image_path,
                         pr_mask->count() ? std::optional<std::string>(mask_path) : std::nullopt);
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
