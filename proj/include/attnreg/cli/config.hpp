#pragma once

// Run configuration: one JSON document with named blocks (data, model, loss,
// and the three training phases). Parsing materializes every field — profile
// defaults fill whatever the file omits — so serialize(parse(x)) is total and
// parse(serialize(c)) == c. Unknown keys and bad values are reported with
// their full field path.

#include "attnreg/data/phantom.hpp"
#include "attnreg/losses/losses.hpp"
#include "attnreg/model/model.hpp"
#include "attnreg/train/trainer.hpp"

#include <cstdint>
#include <string>

namespace attnreg::cli {

struct DataBlock {
  std::string dir = "data/phantoms";
  int n_paired = 50;
  int n_weak = 100;
  int n_val = 20;
  data::PhantomConfig phantom;

  bool operator==(const DataBlock&) const = default;
};

struct ModelBlock {
  bool with_seg_branch = true;
  bool with_reg_branch = true;
  bool attention_gate = true;
  bool injection_connected = true;
  int input_size = 96;

  bool operator==(const ModelBlock&) const = default;
};

struct PhaseBlock {
  double learning_rate = 1e-4;
  int epochs = 40;
  int batch_size = 8;
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.1;

  bool operator==(const PhaseBlock&) const = default;
};

struct RunConfig {
  std::string profile = "toy";  // "toy" | "full"
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string out_dir = "runs/out";
  DataBlock data;
  ModelBlock model;
  losses::LossWeights loss;  // shared sub-term weights; alpha/beta/gamma live per phase
  PhaseBlock phase1;
  PhaseBlock phase2;
  PhaseBlock full_mtl;

  bool operator==(const RunConfig&) const = default;
};

// Parse from JSON text; profile defaults fill omitted fields. Throws
// std::invalid_argument with the offending field path.
RunConfig parse_config(const std::string& json_text);

// Load + parse a config file (errors mention the path).
RunConfig load_config(const std::string& path);

// Canonical JSON serialization: every field, stable key order.
std::string serialize_config(const RunConfig& c);

// Materialize the runtime structures a command needs.
model::ModelConfig make_model_config(const RunConfig& c);
data::PhantomConfig make_phantom_config(const RunConfig& c);
train::PhaseConfig make_phase_config(const RunConfig& c, train::PhaseKind kind);

}  // namespace attnreg::cli
