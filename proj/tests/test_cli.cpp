// End-to-end tests of the command-line binary: each case runs the real
// executable in a scratch directory and asserts on exit codes, stdout/stderr,
// and the artifacts written to disk.

#include <doctest.h>

#include "attnreg/cli/config.hpp"
#include "attnreg/train/checkpoint.hpp"
#include "attnreg/util/sha256.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace attnreg;

namespace {

struct RunResult {
  int rc = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunResult run_cli(const fs::path& cwd, const std::string& args) {
  const fs::path out = cwd / "_stdout.txt";
  const fs::path err = cwd / "_stderr.txt";
  const std::string cmd = "cd " + cwd.string() + " && " + ATTNREG_CLI_PATH " " + args + " >" +
                          out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  if (status >= 0 && WIFEXITED(status)) r.rc = WEXITSTATUS(status);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "attnreg_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

// tiny-but-complete run configuration all training cases share
const char* kTinyConfig = R"({
  "seed": 11,
  "out_dir": "run",
  "data": {"dir": "ds", "n_paired": 6, "n_weak": 6, "n_val": 4,
           "phantom": {"image_size": 64}},
  "model": {"input_size": 64},
  "phase1": {"epochs": 2, "batch_size": 3},
  "phase2": {"epochs": 2, "batch_size": 3},
  "full_mtl": {"epochs": 2, "batch_size": 3}
})";

// one shared workspace with a generated dataset and a decoupled run, reused
// by the eval/predict/lineage cases so training happens once
struct Workspace {
  fs::path dir;
  Workspace() : dir(fresh_dir("shared")) {
    write_file(dir / "tiny.json", kTinyConfig);
    auto g = run_cli(dir, "generate --config tiny.json");
    if (g.rc != 0) throw std::runtime_error("workspace generate failed: " + g.err);
    auto t = run_cli(dir, "train --config tiny.json --mode decoupled");
    if (t.rc != 0) throw std::runtime_error("workspace train failed: " + t.err);
  }
};

const Workspace& shared() {
  static Workspace w;
  return w;
}

std::string manifest_digest(const std::string& stdout_text) {
  const auto pos = stdout_text.find("manifest digest: ");
  REQUIRE(pos != std::string::npos);
  return stdout_text.substr(pos + 17, 64);
}

int count_image_pngs(const fs::path& ds) {
  int n = 0;
  for (const char* split : {"paired", "weak", "val"})
    for (const auto& e : fs::directory_iterator(ds / split)) {
      const auto name = e.path().filename().string();
      if (name.size() > 4 && name.substr(name.size() - 4) == ".png" &&
          name.find("_frag") == std::string::npos && name.find("_embryo") == std::string::npos)
        ++n;
    }
  return n;
}

}  // namespace

TEST_CASE("cli: --help exits 0; bad invocations exit 1") {
  const auto dir = fresh_dir("usage");
  CHECK(run_cli(dir, "--help").rc == 0);
  CHECK(run_cli(dir, "train --help").rc == 0);
  CHECK(run_cli(dir, "frobnicate").rc == 1);
  CHECK(run_cli(dir, "").rc == 1);                            // subcommand required
  CHECK(run_cli(dir, "train --config missing.json").rc == 1); // --mode required
  CHECK(run_cli(dir, "train --mode sideways --config x").rc == 1);
}

TEST_CASE("cli: generate writes 170 images, 170 manifest lines, per-grade counts") {
  const auto dir = fresh_dir("gen170");
  write_file(dir / "cfg.json",
             R"({"seed": 3, "data": {"dir": "ds", "n_paired": 50, "n_weak": 100, "n_val": 20,
                 "phantom": {"image_size": 64}}})");
  const auto r = run_cli(dir, "generate --config cfg.json");
  CHECK(r.rc == 0);
  CHECK(r.out.find("generated 170 samples") != std::string::npos);
  int total = 0;
  for (char g : {'A', 'B', 'C', 'D'}) {
    const std::string key = std::string("grade ") + g + ": ";
    const auto pos = r.out.find(key);
    REQUIRE(pos != std::string::npos);
    total += std::stoi(r.out.substr(pos + key.size()));
  }
  CHECK(total == 170);
  CHECK(count_image_pngs(dir / "ds") == 170);

  const auto manifest = slurp(dir / "ds" / "manifest.jsonl");
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 170);
  CHECK(r.out.find("manifest lines: 170") != std::string::npos);

  // same seed -> byte-identical manifest; different seed -> different
  const auto again = run_cli(dir, "generate --config cfg.json --out ds2");
  CHECK(again.rc == 0);
  CHECK(manifest_digest(again.out) == manifest_digest(r.out));
  CHECK(slurp(dir / "ds2" / "manifest.jsonl") == manifest);
  const auto other = run_cli(dir, "generate --config cfg.json --seed 4 --out ds3");
  CHECK(other.rc == 0);
  CHECK(manifest_digest(other.out) != manifest_digest(r.out));
}

TEST_CASE("cli: generate with n_paired=0 succeeds but warns") {
  const auto dir = fresh_dir("gen0");
  write_file(dir / "cfg.json",
             R"({"data": {"dir": "ds", "n_paired": 0, "n_weak": 4, "n_val": 2,
                 "phantom": {"image_size": 64}}})");
  const auto r = run_cli(dir, "generate --config cfg.json");
  CHECK(r.rc == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK(r.err.find("n_paired") != std::string::npos);
}

TEST_CASE("cli: invalid configs are usage errors with the field path") {
  const auto dir = fresh_dir("badcfg");
  write_file(dir / "bad.json", R"({"bogus": 1})");
  auto r = run_cli(dir, "generate --config bad.json");
  CHECK(r.rc == 1);
  CHECK(r.err.find("bogus") != std::string::npos);

  write_file(dir / "notjson.json", "{{{");
  r = run_cli(dir, "generate --config notjson.json");
  CHECK(r.rc == 1);
  CHECK(r.err.find("not valid JSON") != std::string::npos);

  r = run_cli(dir, "generate --config nowhere.json");
  CHECK(r.rc == 1);
  CHECK(r.err.find("nowhere.json") != std::string::npos);

  // determinism without a seed from either the file or the flag
  write_file(dir / "empty.json", "{}");
  r = run_cli(dir, "generate --config empty.json --deterministic");
  CHECK(r.rc == 1);
  CHECK(r.err.find("seed") != std::string::npos);
  r = run_cli(dir, "generate --config empty.json --deterministic --seed 8 --out dd");
  CHECK(r.rc == 0);
}

TEST_CASE("cli: phase2 without --from-checkpoint is a usage error") {
  const auto& ws = shared();
  const auto r = run_cli(ws.dir, "train --config tiny.json --mode phase2");
  CHECK(r.rc == 1);
  CHECK(r.err.find("--from-checkpoint") != std::string::npos);
}

TEST_CASE("cli: decoupled training links the two checkpoints by digest") {
  const auto& ws = shared();
  REQUIRE(fs::exists(ws.dir / "run" / "phase1.ckpt"));
  REQUIRE(fs::exists(ws.dir / "run" / "phase2.ckpt"));
  REQUIRE(fs::exists(ws.dir / "run" / "phase1_curve.jsonl"));
  REQUIRE(fs::exists(ws.dir / "run" / "phase2_curve.jsonl"));

  const auto phase1_bytes = slurp(ws.dir / "run" / "phase1.ckpt");
  const auto p2 = train::load_checkpoint<float>((ws.dir / "run" / "phase2.ckpt").string());
  CHECK(p2.ckpt.phase == "phase2");
  CHECK(p2.ckpt.parent_digest == util::sha256_hex(phase1_bytes));

  const auto p1 = train::load_checkpoint<float>((ws.dir / "run" / "phase1.ckpt").string());
  CHECK(p1.ckpt.phase == "phase1");
  CHECK(p1.ckpt.parent_digest.empty());

  // curves carry one record per epoch
  const auto curve = slurp(ws.dir / "run" / "phase1_curve.jsonl");
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 2);
  CHECK(curve.find("\"total\":") != std::string::npos);
}

TEST_CASE("cli: standalone phase2 resumes from a checkpoint file") {
  const auto& ws = shared();
  const auto r = run_cli(
      ws.dir, "train --config tiny.json --mode phase2 --from-checkpoint run/phase1.ckpt --out p2b");
  CHECK(r.rc == 0);
  const auto p2 = train::load_checkpoint<float>((ws.dir / "p2b" / "phase2.ckpt").string());
  CHECK(p2.ckpt.parent_digest == util::sha256_hex(slurp(ws.dir / "run" / "phase1.ckpt")));
}

TEST_CASE("cli: eval on a phase1 checkpoint reports dice and omits mae_direct") {
  const auto& ws = shared();
  auto r = run_cli(ws.dir,
                   "eval --config tiny.json --from-checkpoint run/phase1.ckpt --out eval1");
  CHECK(r.rc == 0);
  const auto rec1 = slurp(ws.dir / "eval1" / "metrics.json");
  CHECK(rec1.find("\"phase\":\"phase1\"") != std::string::npos);
  CHECK(rec1.find("\"dice\":") != std::string::npos);
  CHECK(rec1.find("mae_direct") == std::string::npos);
  CHECK(rec1 == r.out);

  r = run_cli(ws.dir, "eval --config tiny.json --from-checkpoint run/phase2.ckpt --out eval2");
  CHECK(r.rc == 0);
  const auto rec2 = slurp(ws.dir / "eval2" / "metrics.json");
  CHECK(rec2.find("\"dice\":") != std::string::npos);
  CHECK(rec2.find("\"mae_direct\":") != std::string::npos);
  CHECK(rec2.find("\"mae_from_mask\":") != std::string::npos);
}

TEST_CASE("cli: missing or corrupt checkpoints are runtime failures") {
  const auto& ws = shared();
  CHECK(run_cli(ws.dir, "eval --config tiny.json --from-checkpoint nope.ckpt").rc == 2);
  write_file(ws.dir / "corrupt.ckpt", "not a checkpoint");
  CHECK(run_cli(ws.dir, "eval --config tiny.json --from-checkpoint corrupt.ckpt").rc == 2);
}

TEST_CASE("cli: ablate writes a 7-row report, byte-reproducible under one seed") {
  const auto& ws = shared();
  const auto r1 = run_cli(ws.dir, "ablate --config tiny.json --out abl1");
  CHECK(r1.rc == 0);
  const auto jsonl = slurp(ws.dir / "abl1" / "report.jsonl");
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 7);
  for (const char* id : {"\"baseline\"", "\"A\"", "\"B1\"", "\"B2\"", "\"C\"", "\"D\"", "\"E\""})
    CHECK(jsonl.find(std::string("{\"exp_id\":") + id) != std::string::npos);
  CHECK(fs::exists(ws.dir / "abl1" / "report.txt"));

  const auto r2 = run_cli(ws.dir, "ablate --config tiny.json --out abl2");
  CHECK(r2.rc == 0);
  CHECK(slurp(ws.dir / "abl2" / "report.jsonl") == jsonl);
  CHECK(slurp(ws.dir / "abl2" / "report.txt") == slurp(ws.dir / "abl1" / "report.txt"));
}

TEST_CASE("cli: predict prints both grades and writes the overlays") {
  const auto& ws = shared();
  const auto r = run_cli(ws.dir,
                         "predict --config tiny.json --from-checkpoint run/phase2.ckpt "
                         "ds/val/val_0000.png --mask ds/val/val_0000_frag.png --out pred");
  CHECK(r.rc == 0);
  CHECK(r.out.find("y_direct:") != std::string::npos);
  CHECK(r.out.find("y_from_mask:") != std::string::npos);
  CHECK(std::count(r.out.begin(), r.out.end(), '(') >= 2);  // two "(grade X)" annotations
  CHECK(fs::exists(ws.dir / "pred" / "overlay.png"));
  CHECK(fs::exists(ws.dir / "pred" / "pred_mask.png"));
  CHECK(fs::exists(ws.dir / "pred" / "attention.png"));

  // a phase1 checkpoint grades through the mask head only
  const auto r1 = run_cli(ws.dir,
                          "predict --from-checkpoint run/phase1.ckpt ds/val/val_0001.png "
                          "--out pred1");
  CHECK(r1.rc == 0);
  CHECK(r1.out.find("y_direct:    unavailable") != std::string::npos);
  CHECK(r1.out.find("y_from_mask:") != std::string::npos);
}

TEST_CASE("cli: --no-inject wiring is recorded in the checkpoint config") {
  const auto& ws = shared();
  const auto r = run_cli(
      ws.dir, "train --config tiny.json --mode full_mtl --no-inject --out noinj");
  CHECK(r.rc == 0);
  const auto ck = train::load_checkpoint<float>((ws.dir / "noinj" / "full_mtl.ckpt").string());
  const auto cfg = cli::parse_config(ck.ckpt.config_json);
  CHECK_FALSE(cfg.model.injection_connected);
  CHECK(cfg.model.attention_gate);
}

TEST_CASE("cli: training against a missing dataset directory is a usage error") {
  const auto dir = fresh_dir("nodata");
  write_file(dir / "cfg.json", kTinyConfig);
  const auto r = run_cli(dir, "train --config cfg.json --mode phase1");
  CHECK(r.rc == 1);
  CHECK(r.err.find("data.dir") != std::string::npos);
}
