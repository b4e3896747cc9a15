#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bsde/config.hpp"
#include "bsde/sde.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const std::string log =
      (fs::temp_directory_path() / ("bsde_cli_log_" + std::to_string(counter++))).string();
  const std::string cmd = std::string(BSDE_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream is(log);
  std::stringstream buf;
  buf << is.rdbuf();
  fs::remove(log);
  return {WEXITSTATUS(raw), buf.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("bsde_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string toy_config(const std::string& extra = "") {
  return std::string(R"([problem]
id = "ex1"
d = 1
T = 0.2

[scheme]
kind = "ladbsde"

[grid]
N = 4

[train]
batch = 8
max_steps = 30
probe_every = 10
period = 30
validation_size = 16
seeds = [1, 2]

[eval]
test_size = 64
test_seed = 999
)") + extra;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "config.toml";
  std::ofstream os(p);
  os << text;
  return p;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("train writes checkpoints, records, and a manifest") {
  fs::path dir = fresh_dir("train");
  fs::path cfg = write_config(dir, toy_config());
  auto res = run_cli("train --config " + cfg.string() + " --out " + (dir / "out").string());
  CHECK(res.code == 0);
  CHECK(fs::exists(dir / "out" / "run_1" / "checkpoint.bin"));
  CHECK(fs::exists(dir / "out" / "run_1" / "train_record.csv"));
  CHECK(fs::exists(dir / "out" / "run_2" / "checkpoint.bin"));
  CHECK(fs::exists(dir / "out" / "manifest.txt"));

  // the record has one row per step plus a header
  CHECK(line_count(slurp(dir / "out" / "run_1" / "train_record.csv")) == 31);
  fs::remove_all(dir);
}

TEST_CASE("reruns and worker counts never change the outputs") {
  fs::path dir = fresh_dir("determinism");
  fs::path cfg = write_config(dir, toy_config());
  auto go = [&](const std::string& out, int workers) {
    auto res = run_cli("train --config " + cfg.string() + " --out " + (dir / out).string() +
                       " --workers " + std::to_string(workers));
    REQUIRE(res.code == 0);
    auto ev = run_cli("evaluate --config " + cfg.string() + " --out " + (dir / out).string() +
                      " --workers " + std::to_string(workers));
    REQUIRE(ev.code == 0);
  };
  go("a", 1);
  go("b", 1);
  go("c", 4);
  for (const char* rel : {"run_1/train_record.csv", "run_2/train_record.csv",
                          "run_1/checkpoint.bin", "t0_errors.csv", "regression.csv",
                          "loss.csv"}) {
    const std::string a = slurp(dir / "a" / rel);
    CHECK(a == slurp(dir / "b" / rel));
    CHECK(a == slurp(dir / "c" / rel));
  }
  fs::remove_all(dir);
}

TEST_CASE("rerunning from the manifest reproduces every csv") {
  fs::path dir = fresh_dir("manifest");
  fs::path cfg = write_config(dir, toy_config());
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (dir / "a").string()).code == 0);
  REQUIRE(run_cli("train --config " + (dir / "a" / "manifest.txt").string() + " --out " +
                  (dir / "b").string())
              .code == 0);
  for (const char* rel : {"run_1/train_record.csv", "run_2/train_record.csv"})
    CHECK(slurp(dir / "a" / rel) == slurp(dir / "b" / rel));
  fs::remove_all(dir);
}

TEST_CASE("invalid configuration is rejected with the field name") {
  fs::path dir = fresh_dir("badcfg");
  fs::path cfg = write_config(dir, toy_config());
  auto res = run_cli("train --config " + cfg.string() + " --steps -3 --out " +
                     (dir / "out").string());
  CHECK(res.code == 2);
  CHECK(res.output.find("grid.N") != std::string::npos);

  // duplicated seeds are named too
  auto res2 = run_cli("train --config " + cfg.string() + " --seed 7 --seed 7 --out " +
                      (dir / "out").string());
  CHECK(res2.code == 2);
  CHECK(res2.output.find("train.seeds") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("evaluate rejects checkpoints from a different parameterization") {
  fs::path dir = fresh_dir("mismatch");
  fs::path cfg = write_config(dir, toy_config());
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (dir / "out").string()).code ==
          0);
  auto res = run_cli("evaluate --config " + cfg.string() + " --dim 2 --out " +
                     (dir / "out").string());
  CHECK(res.code == 2);
  CHECK(res.output.find("parameters") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("problems without closed forms mark the Z columns unavailable") {
  fs::path dir = fresh_dir("ex4");
  const std::string cfg_text = R"([problem]
id = "ex4"
d = 2
T = 0.5

[scheme]
kind = "ladbsde"

[grid]
N = 3

[train]
batch = 8
max_steps = 20
probe_every = 10
period = 20
validation_size = 16
seeds = [1]

[eval]
test_size = 32
test_seed = 999
)";
  fs::path cfg = write_config(dir, cfg_text);
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (dir / "out").string()).code ==
          0);
  REQUIRE(run_cli("evaluate --config " + cfg.string() + " --out " + (dir / "out").string())
              .code == 0);
  const std::string t0 = slurp(dir / "out" / "t0_errors.csv");
  CHECK(t0.find("NA") != std::string::npos);
  CHECK(t0.find("ladbsde,ex4,2,3") != std::string::npos);
  // no closed form: the regression table stays empty
  CHECK(line_count(slurp(dir / "out" / "regression.csv")) == 1);
  fs::remove_all(dir);
}

TEST_CASE("a sweep emits one row per cell") {
  fs::path dir = fresh_dir("sweep");
  const std::string extra = R"(
[sweep]
N = [3, 4]
schemes = ["ldbsde", "ladbsde"]
)";
  fs::path cfg = write_config(dir, toy_config(extra));
  auto res = run_cli("sweep --config " + cfg.string() + " --out " + (dir / "out").string());
  CHECK(res.code == 0);
  const std::string sweep = slurp(dir / "out" / "sweep.csv");
  CHECK(line_count(sweep) == 5);  // header + 2x2 cells
  CHECK(sweep.find("ldbsde,ex1,1,3") != std::string::npos);
  CHECK(sweep.find("ladbsde,ex1,1,4") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("forced divergence shows up as an NC cell and exit code 3") {
  fs::path dir = fresh_dir("nc");
  const std::string cfg_text = R"([problem]
id = "ex1"
d = 1
T = 2.0

[scheme]
kind = "dbsde"

[grid]
N = 8

[train]
batch = 16
max_steps = 200
probe_every = 50
period = 200
validation_size = 16
policy = "constant"
lr0 = 1e6
seeds = [2]

[eval]
test_size = 32
test_seed = 999

[sweep]
N = [8]
schemes = ["dbsde"]
)";
  fs::path cfg = write_config(dir, cfg_text);
  auto res = run_cli("sweep --config " + cfg.string() + " --out " + (dir / "out").string());
  CHECK(res.code == 3);
  const std::string sweep = slurp(dir / "out" / "sweep.csv");
  CHECK(sweep.find("NC") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("simulate dumps a readable path file") {
  fs::path dir = fresh_dir("simulate");
  fs::path cfg = write_config(dir, toy_config("\n[simulate]\nsamples = 9\nseed = 1234\n"));
  auto res = run_cli("simulate --config " + cfg.string() + " --out " + (dir / "out").string());
  CHECK(res.code == 0);
  bsde::PathDump dump = bsde::read_path_dump((dir / "out" / "paths.bin").string());
  CHECK(dump.paths.M == 9);
  CHECK(dump.paths.grid.N == 4);
  CHECK(dump.paths.d == 1);
  CHECK(dump.seed == 1234);
  CHECK(dump.problem_id == "ex1");
  fs::remove_all(dir);
}

TEST_CASE("command-line flags override file values") {
  fs::path dir = fresh_dir("flags");
  fs::path cfg = write_config(dir, toy_config());
  auto res = run_cli("train --config " + cfg.string() + " --steps 5 --iters 10 --out " +
                     (dir / "out").string());
  REQUIRE(res.code == 0);
  bsde::Config manifest = bsde::Config::parse_file((dir / "out" / "manifest.txt").string());
  CHECK(manifest.integer("grid.N", 0) == 5);
  CHECK(manifest.integer("train.max_steps", 0) == 10);
  fs::remove_all(dir);
}

TEST_CASE("the built-in invariant suite passes") {
  auto res = run_cli("check");
  CHECK(res.code == 0);
  CHECK(res.output.find("[FAIL]") == std::string::npos);
}
