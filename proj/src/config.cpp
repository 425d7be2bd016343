#include "attnreg/cli/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace attnreg::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::invalid_argument("config: " + path + ": " + msg);
}

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
}

const json* field(const json& j, const std::string& key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void read_double(const json& j, const std::string& path, const std::string& key, double& out) {
  if (const auto* f = field(j, key)) {
    if (!f->is_number()) fail(path + key, "expected a number");
    out = f->get<double>();
  }
}

void read_int(const json& j, const std::string& path, const std::string& key, int& out) {
  if (const auto* f = field(j, key)) {
    if (!f->is_number_integer()) fail(path + key, "expected an integer");
    out = f->get<int>();
  }
}

void read_bool(const json& j, const std::string& path, const std::string& key, bool& out) {
  if (const auto* f = field(j, key)) {
    if (!f->is_boolean()) fail(path + key, "expected true or false");
    out = f->get<bool>();
  }
}

void read_string(const json& j, const std::string& path, const std::string& key,
                 std::string& out) {
  if (const auto* f = field(j, key)) {
    if (!f->is_string()) fail(path + key, "expected a string");
    out = f->get<std::string>();
  }
}

void parse_phantom(const json& j, const std::string& path, data::PhantomConfig& p) {
  check_keys(j, path,
             {"image_size", "embryo_radius_lo", "embryo_radius_hi", "fragment_count_lo",
              "fragment_count_hi", "fragment_radius_lo", "fragment_radius_hi", "noise_std",
              "texture_granularity"});
  const std::string pre = path + ".";
  read_int(j, pre, "image_size", p.image_size);
  read_double(j, pre, "embryo_radius_lo", p.embryo_radius_lo);
  read_double(j, pre, "embryo_radius_hi", p.embryo_radius_hi);
  read_int(j, pre, "fragment_count_lo", p.fragment_count_lo);
  read_int(j, pre, "fragment_count_hi", p.fragment_count_hi);
  read_double(j, pre, "fragment_radius_lo", p.fragment_radius_lo);
  read_double(j, pre, "fragment_radius_hi", p.fragment_radius_hi);
  read_double(j, pre, "noise_std", p.noise_std);
  read_int(j, pre, "texture_granularity", p.texture_granularity);
  try {
    p.validate();
  } catch (const std::exception& e) {
    fail(path, e.what());
  }
}

void parse_phase(const json& j, const std::string& path, PhaseBlock& b) {
  check_keys(j, path,
             {"learning_rate", "epochs", "batch_size", "alpha", "beta", "gamma"});
  const std::string pre = path + ".";
  read_double(j, pre, "learning_rate", b.learning_rate);
  read_int(j, pre, "epochs", b.epochs);
  read_int(j, pre, "batch_size", b.batch_size);
  read_double(j, pre, "alpha", b.alpha);
  read_double(j, pre, "beta", b.beta);
  read_double(j, pre, "gamma", b.gamma);
  if (!(b.learning_rate > 0)) fail(pre + "learning_rate", "must be > 0");
  if (b.epochs < 1) fail(pre + "epochs", "must be >= 1");
  if (b.batch_size < 1) fail(pre + "batch_size", "must be >= 1");
  for (double v : {b.alpha, b.beta, b.gamma})
    if (!(v >= 0)) fail(path, "loss weights must be >= 0");
}

json phantom_json(const data::PhantomConfig& p) {
  json j;
  j["image_size"] = p.image_size;
  j["embryo_radius_lo"] = p.embryo_radius_lo;
  j["embryo_radius_hi"] = p.embryo_radius_hi;
  j["fragment_count_lo"] = p.fragment_count_lo;
  j["fragment_count_hi"] = p.fragment_count_hi;
  j["fragment_radius_lo"] = p.fragment_radius_lo;
  j["fragment_radius_hi"] = p.fragment_radius_hi;
  j["noise_std"] = p.noise_std;
  j["texture_granularity"] = p.texture_granularity;
  return j;
}

json phase_json(const PhaseBlock& b) {
  json j;
  j["learning_rate"] = b.learning_rate;
  j["epochs"] = b.epochs;
  j["batch_size"] = b.batch_size;
  j["alpha"] = b.alpha;
  j["beta"] = b.beta;
  j["gamma"] = b.gamma;
  return j;
}

PhaseBlock phase_defaults(train::PhaseKind kind) {
  const auto d = [&] {
    switch (kind) {
      case train::PhaseKind::phase1: return train::PhaseConfig::phase1_defaults();
      case train::PhaseKind::phase2: return train::PhaseConfig::phase2_defaults();
      case train::PhaseKind::full_mtl: return train::PhaseConfig::full_mtl_defaults();
    }
    throw std::logic_error("unknown phase");
  }();
  PhaseBlock b;
  b.learning_rate = d.learning_rate;
  b.epochs = d.epochs;
  b.batch_size = d.batch_size;
  b.alpha = d.weights.alpha;
  b.beta = d.weights.beta;
  b.gamma = d.weights.gamma;
  return b;
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  check_keys(j, "",
             {"profile", "seed", "deterministic", "out_dir", "data", "model", "loss", "phase1",
              "phase2", "full_mtl"});

  RunConfig c;
  read_string(j, "", "profile", c.profile);
  if (c.profile != "toy" && c.profile != "full")
    fail("profile", "must be \"toy\" or \"full\", got \"" + c.profile + "\"");

  // profile-dependent defaults, overridable by explicit keys below
  const int default_size = c.profile == "toy" ? 96 : 299;
  c.model.input_size = default_size;
  c.data.phantom.image_size = default_size;
  c.phase1 = phase_defaults(train::PhaseKind::phase1);
  c.phase2 = phase_defaults(train::PhaseKind::phase2);
  c.full_mtl = phase_defaults(train::PhaseKind::full_mtl);

  bool seed_given = false;
  if (const auto* f = field(j, "seed")) {
    if (!f->is_number_integer()) fail("seed", "expected a non-negative integer");
    if (!f->is_number_unsigned() && f->get<std::int64_t>() < 0)
      fail("seed", "expected a non-negative integer");
    c.seed = f->get<std::uint64_t>();
    seed_given = true;
  }
  read_bool(j, "", "deterministic", c.deterministic);
  if (c.deterministic && !seed_given)
    fail("seed", "a seed is required when deterministic is set");
  read_string(j, "", "out_dir", c.out_dir);

  if (const auto* d = field(j, "data")) {
    if (!d->is_object()) fail("data", "expected an object");
    check_keys(*d, "data", {"dir", "n_paired", "n_weak", "n_val", "phantom"});
    read_string(*d, "data.", "dir", c.data.dir);
    read_int(*d, "data.", "n_paired", c.data.n_paired);
    read_int(*d, "data.", "n_weak", c.data.n_weak);
    read_int(*d, "data.", "n_val", c.data.n_val);
    if (c.data.n_paired < 0) fail("data.n_paired", "must be >= 0");
    if (c.data.n_weak < 0) fail("data.n_weak", "must be >= 0");
    if (c.data.n_val < 0) fail("data.n_val", "must be >= 0");
    if (const auto* p = field(*d, "phantom")) {
      if (!p->is_object()) fail("data.phantom", "expected an object");
      parse_phantom(*p, "data.phantom", c.data.phantom);
    }
  }

  if (const auto* m = field(j, "model")) {
    if (!m->is_object()) fail("model", "expected an object");
    check_keys(*m, "model",
               {"with_seg_branch", "with_reg_branch", "attention_gate", "injection_connected",
                "input_size"});
    read_bool(*m, "model.", "with_seg_branch", c.model.with_seg_branch);
    read_bool(*m, "model.", "with_reg_branch", c.model.with_reg_branch);
    read_bool(*m, "model.", "attention_gate", c.model.attention_gate);
    read_bool(*m, "model.", "injection_connected", c.model.injection_connected);
    read_int(*m, "model.", "input_size", c.model.input_size);
    if (c.model.input_size < 32) fail("model.input_size", "must be >= 32");
    if (!c.model.with_seg_branch && !c.model.with_reg_branch)
      fail("model", "at least one branch must be present");
  }

  if (const auto* l = field(j, "loss")) {
    if (!l->is_object()) fail("loss", "expected an object");
    check_keys(*l, "loss",
               {"w_bce", "w_dice", "w_focal", "focal_gamma", "focal_alpha", "dice_smooth"});
    read_double(*l, "loss.", "w_bce", c.loss.w_bce);
    read_double(*l, "loss.", "w_dice", c.loss.w_dice);
    read_double(*l, "loss.", "w_focal", c.loss.w_focal);
    read_double(*l, "loss.", "focal_gamma", c.loss.focal_gamma);
    read_double(*l, "loss.", "focal_alpha", c.loss.focal_alpha);
    read_double(*l, "loss.", "dice_smooth", c.loss.dice_smooth);
    try {
      c.loss.validate();
    } catch (const std::exception& e) {
      fail("loss", e.what());
    }
  }

  if (const auto* p = field(j, "phase1")) {
    if (!p->is_object()) fail("phase1", "expected an object");
    parse_phase(*p, "phase1", c.phase1);
    if (c.phase1.beta != 0.0)
      fail("phase1.beta", "phase 1 trains without direct ratio supervision (beta must be 0)");
  }
  if (const auto* p = field(j, "phase2")) {
    if (!p->is_object()) fail("phase2", "expected an object");
    parse_phase(*p, "phase2", c.phase2);
  }
  if (const auto* p = field(j, "full_mtl")) {
    if (!p->is_object()) fail("full_mtl", "expected an object");
    parse_phase(*p, "full_mtl", c.full_mtl);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string(e.what()) + " (in " + path + ")");
  }
}

std::string serialize_config(const RunConfig& c) {
  json j;
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["out_dir"] = c.out_dir;
  j["data"]["dir"] = c.data.dir;
  j["data"]["n_paired"] = c.data.n_paired;
  j["data"]["n_weak"] = c.data.n_weak;
  j["data"]["n_val"] = c.data.n_val;
  j["data"]["phantom"] = phantom_json(c.data.phantom);
  j["model"]["with_seg_branch"] = c.model.with_seg_branch;
  j["model"]["with_reg_branch"] = c.model.with_reg_branch;
  j["model"]["attention_gate"] = c.model.attention_gate;
  j["model"]["injection_connected"] = c.model.injection_connected;
  j["model"]["input_size"] = c.model.input_size;
  j["loss"]["w_bce"] = c.loss.w_bce;
  j["loss"]["w_dice"] = c.loss.w_dice;
  j["loss"]["w_focal"] = c.loss.w_focal;
  j["loss"]["focal_gamma"] = c.loss.focal_gamma;
  j["loss"]["focal_alpha"] = c.loss.focal_alpha;
  j["loss"]["dice_smooth"] = c.loss.dice_smooth;
  j["phase1"] = phase_json(c.phase1);
  j["phase2"] = phase_json(c.phase2);
  j["full_mtl"] = phase_json(c.full_mtl);
  return j.dump(2) + "\n";
}

model::ModelConfig make_model_config(const RunConfig& c) {
  model::ModelConfig mc =
      c.profile == "toy" ? model::ModelConfig::toy_profile() : model::ModelConfig::full_profile();
  mc.with_seg_branch = c.model.with_seg_branch;
  mc.with_reg_branch = c.model.with_reg_branch;
  mc.attention_gate = c.model.attention_gate;
  mc.injection_connected = c.model.injection_connected;
  mc.init_seed = c.seed;
  return mc;
}

data::PhantomConfig make_phantom_config(const RunConfig& c) {
  data::PhantomConfig p = c.data.phantom;
  p.seed = c.seed;
  return p;
}

train::PhaseConfig make_phase_config(const RunConfig& c, train::PhaseKind kind) {
  train::PhaseConfig pc;
  switch (kind) {
    case train::PhaseKind::phase1: pc = train::PhaseConfig::phase1_defaults(); break;
    case train::PhaseKind::phase2: pc = train::PhaseConfig::phase2_defaults(); break;
    case train::PhaseKind::full_mtl: pc = train::PhaseConfig::full_mtl_defaults(); break;
  }
  const PhaseBlock& b = kind == train::PhaseKind::phase1
                            ? c.phase1
                            : kind == train::PhaseKind::phase2 ? c.phase2 : c.full_mtl;
  pc.learning_rate = b.learning_rate;
  pc.epochs = b.epochs;
  pc.batch_size = b.batch_size;
  pc.weights = c.loss;
  pc.weights.alpha = b.alpha;
  pc.weights.beta = b.beta;
  pc.weights.gamma = b.gamma;
  pc.seed = c.seed;
  return pc;
}

}  // namespace attnreg::cli
