#include <doctest.h>

#include "attnreg/cli/config.hpp"

#include <filesystem>
#include <fstream>

using namespace attnreg;

TEST_CASE("config: empty document yields the toy-profile defaults") {
  const auto c = cli::parse_config("{}");
  CHECK(c.profile == "toy");
  CHECK(c.seed == 0);
  CHECK_FALSE(c.deterministic);
  CHECK(c.model.input_size == 96);
  CHECK(c.data.phantom.image_size == 96);
  CHECK(c.data.n_paired == 50);
  CHECK(c.phase1.learning_rate == 1e-4);
  CHECK(c.phase1.epochs == 40);
  CHECK(c.phase1.beta == 0.0);
  CHECK(c.phase2.learning_rate == 1e-5);
  CHECK(c.phase2.alpha == 0.0);
  CHECK(c.full_mtl.epochs == 60);
  CHECK(c.full_mtl.beta == 1.0);
  CHECK(c.loss.w_dice == 1.0);
}

TEST_CASE("config: the full profile switches the size defaults") {
  const auto c = cli::parse_config(R"({"profile": "full"})");
  CHECK(c.model.input_size == 299);
  CHECK(c.data.phantom.image_size == 299);

  const auto trimmed =
      cli::parse_config(R"({"profile": "full", "model": {"input_size": 256}})");
  CHECK(trimmed.model.input_size == 256);
  CHECK(trimmed.data.phantom.image_size == 299);
}

TEST_CASE("config: parse -> serialize -> parse is the identity") {
  const std::string text = R"({
    "profile": "toy",
    "seed": 17,
    "deterministic": true,
    "out_dir": "runs/exp3",
    "data": {"dir": "d", "n_paired": 4, "n_weak": 6, "n_val": 2,
             "phantom": {"image_size": 64, "noise_std": 0.05}},
    "model": {"attention_gate": false, "input_size": 64},
    "loss": {"w_focal": 0.5, "dice_smooth": 2.0},
    "phase1": {"epochs": 3, "learning_rate": 2e-4},
    "phase2": {"epochs": 2, "alpha": 0.0, "beta": 1.0},
    "full_mtl": {"batch_size": 4}
  })";
  const auto c = cli::parse_config(text);
  CHECK(c.seed == 17);
  CHECK(c.deterministic);
  CHECK(c.data.phantom.noise_std == 0.05);
  CHECK_FALSE(c.model.attention_gate);
  CHECK(c.loss.w_focal == 0.5);
  CHECK(c.phase1.epochs == 3);
  CHECK(c.full_mtl.batch_size == 4);

  const std::string s1 = cli::serialize_config(c);
  const auto back = cli::parse_config(s1);
  CHECK(back == c);
  CHECK(cli::serialize_config(back) == s1);
}

TEST_CASE("config: errors carry the offending field path") {
  using doctest::Contains;
  CHECK_THROWS_WITH_AS(cli::parse_config("not json"), Contains("not valid JSON"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config("[1,2]"), Contains("top level"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"profil": "toy"})"), Contains("profil"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"profile": "big"})"), Contains("profile"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"deterministic": true})"), Contains("seed"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"seed": -4})"), Contains("seed"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"data": {"nweak": 5}})"), Contains("data.nweak"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"data": {"n_paired": -1}})"),
                       Contains("data.n_paired"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"data": {"phantom": {"embryo_radius_lo": -1}}})"),
                       Contains("data.phantom"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"model": {"input_size": 8}})"),
                       Contains("model.input_size"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      cli::parse_config(R"({"model": {"with_seg_branch": false, "with_reg_branch": false}})"),
      Contains("model"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"phase1": {"epochs": "ten"}})"),
                       Contains("phase1.epochs"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"phase1": {"beta": 0.5}})"),
                       Contains("phase1.beta"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"phase2": {"learning_rate": 0}})"),
                       Contains("phase2.learning_rate"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(cli::parse_config(R"({"loss": {"focal_alpha": 2.0}})"), Contains("loss"),
                       std::invalid_argument);
}

TEST_CASE("config: runtime structures inherit the right fields") {
  const auto c = cli::parse_config(R"({
    "profile": "full", "seed": 9,
    "model": {"attention_gate": false, "injection_connected": false},
    "loss": {"w_dice": 0.25},
    "phase2": {"learning_rate": 5e-5, "gamma": 0.3}
  })");

  const auto mc = cli::make_model_config(c);
  CHECK(mc.backbone.stage_channels[3] == 2048);
  CHECK_FALSE(mc.attention_gate);
  CHECK_FALSE(mc.injection_connected);
  CHECK(mc.init_seed == 9);

  const auto pc = cli::make_phase_config(c, train::PhaseKind::phase2);
  CHECK(pc.phase == train::PhaseKind::phase2);
  CHECK(pc.learning_rate == 5e-5);
  CHECK(pc.weights.alpha == 0.0);
  CHECK(pc.weights.beta == 1.0);
  CHECK(pc.weights.gamma == 0.3);
  CHECK(pc.weights.w_dice == 0.25);
  CHECK(pc.seed == 9);

  const auto p1 = cli::make_phase_config(c, train::PhaseKind::phase1);
  CHECK(p1.weights.beta == 0.0);
  CHECK(p1.weights.w_dice == 0.25);

  const auto ph = cli::make_phantom_config(c);
  CHECK(ph.image_size == 299);
  CHECK(ph.seed == 9);
}

TEST_CASE("config: file loading reports the path on failure") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto good = dir / "attnreg_cfg_ok.json";
  {
    std::ofstream f(good);
    f << R"({"seed": 3})";
  }
  const auto c = cli::load_config(good.string());
  CHECK(c.seed == 3);
  std::filesystem::remove(good);

  CHECK_THROWS_WITH_AS(cli::load_config((dir / "attnreg_cfg_missing.json").string()),
                       doctest::Contains("attnreg_cfg_missing"), std::invalid_argument);

  const auto bad = dir / "attnreg_cfg_bad.json";
  {
    std::ofstream f(bad);
    f << R"({"data": {"typo_key": 1}})";
  }
  CHECK_THROWS_WITH_AS(cli::load_config(bad.string()), doctest::Contains("typo_key"),
                       std::invalid_argument);
  std::filesystem::remove(bad);
}
