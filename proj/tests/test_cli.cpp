#include "report_checks.hpp"
#include "support.hpp"

#include "neurodecode/cli.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace neurodecode;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::filesystem::path kSnapshots = NEURODECODE_SNAPSHOT_DIR;

// Compares against tests/snapshots/<name>.txt. NEURODECODE_UPDATE_SNAPSHOTS=1
// rewrites the file instead.
void check_snapshot(const std::string& name, const std::string& text) {
  const auto path = kSnapshots / (name + ".txt");
  if (const char* u = std::getenv("NEURODECODE_UPDATE_SNAPSHOTS"); u && std::string(u) == "1") {
    std::ofstream(path, std::ios::binary) << text;
    return;
  }
  INFO("snapshot " << path);
  REQUIRE(std::filesystem::exists(path));
  CHECK(slurp(path) == text);
}

struct SeedEnv {
  explicit SeedEnv(const char* value) {
    if (value) ::setenv("NEURODECODE_SEED", value, 1);
    else ::unsetenv("NEURODECODE_SEED");
  }
  ~SeedEnv() { ::unsetenv("NEURODECODE_SEED"); }
};

}  // namespace

TEST_CASE("help output matches the snapshots", "[cli][snapshot]") {
  const auto top = run({"--help"});
  CHECK(top.code == 0);
  check_snapshot("help", top.out);
  for (const std::string sub :
       {"synth", "preprocess", "train", "baseline", "eval", "analyze", "gradcheck", "audit-params"}) {
    const auto r = run({sub, "--help"});
    INFO(sub);
    CHECK(r.code == 0);
    check_snapshot("help_" + sub, r.out);
    CHECK(top.out.find(sub) != std::string::npos);
  }
}

TEST_CASE("usage errors exit with 1", "[cli]") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"synth"}).code == 1);  // --out is required
  CHECK(run({"synth", "--mode", "sine", "--out", "x"}).code == 1);
  CHECK(run({"train", "--data", "x", "--arch", "resnet", "--out", "y"}).code == 1);
  const auto v = run({"--version"});
  CHECK(v.code == 0);
  CHECK(v.out.find("0.1.0") != std::string::npos);
}

TEST_CASE("synth is reproducible from the seed or the environment", "[cli][determinism]") {
  const auto dir = testing::scratch_dir("cli_synth");
  SeedEnv none(nullptr);
  const auto a = dir / "a.eegb", b = dir / "b.eegb", c = dir / "c.eegb", d = dir / "d.eegb";
  REQUIRE(run({"synth", "--mode", "xor", "--trials", "100", "--seed", "7", "--out", a.string()}).code == 0);
  REQUIRE(run({"synth", "--mode", "xor", "--trials", "100", "--seed", "7", "--out", b.string()}).code == 0);
  REQUIRE(run({"synth", "--mode", "xor", "--trials", "100", "--seed", "8", "--out", c.string()}).code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
  CHECK(std::filesystem::exists(dir / "a.eegb.manifest.json"));
  {
    SeedEnv env("7");
    REQUIRE(run({"synth", "--mode", "xor", "--trials", "100", "--out", d.string()}).code == 0);
    CHECK(slurp(d) == slurp(a));
  }
  {
    SeedEnv env("seven");
    CHECK(run({"synth", "--mode", "xor", "--trials", "100", "--out", d.string()}).code == 1);
  }
}

TEST_CASE("missing and corrupt inputs exit with 2 and name the path", "[cli]") {
  const auto dir = testing::scratch_dir("cli_missing");
  const auto missing = (dir / "nope.eegb").string();
  const auto r = run({"train", "--data", missing, "--arch", "eegnet", "--size", "small", "--epochs", "1", "--out",
                      (dir / "run").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find(missing) != std::string::npos);
  CHECK(run({"baseline", "--data", missing, "--out", (dir / "b").string()}).code == 2);
  CHECK(run({"eval", "--run", (dir / "norun").string()}).code == 2);

  const auto bad = dir / "bad.eegb";
  std::ofstream(bad, std::ios::binary) << "not an epoch file";
  CHECK(run({"baseline", "--data", bad.string(), "--out", (dir / "b2").string()}).code == 2);
}

TEST_CASE("audit-params lists the reference targets", "[cli]") {
  const auto r = run({"audit-params"});
  CHECK(r.code == 0);
  CHECK(r.out.find("1888") != std::string::npos);
  const auto j = run({"audit-params", "--json"});
  CHECK(j.code == 0);
  const auto parsed = nlohmann::json::parse(j.out);
  CHECK(parsed.at("rows").size() == 15);
}

TEST_CASE("gradcheck subcommand on one build", "[cli][gradcheck]") {
  const auto r = run({"gradcheck", "--arch", "eegnet", "--size", "small", "--sample", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("eegnet") != std::string::npos);
  CHECK(run({"gradcheck", "--arch", "eegnet", "--size", "small", "--sample", "2", "--tolerance", "0"}).code == 3);
}

TEST_CASE("pipeline subcommands chain and rerun identically", "[cli][determinism]") {
  const auto dir = testing::scratch_dir("cli_pipeline");
  SeedEnv none(nullptr);
  const auto data = (dir / "d.eegb").string();
  REQUIRE(run({"synth", "--mode", "linear", "--trials", "120", "--seed", "3", "--out", data}).code == 0);
  REQUIRE(run({"baseline", "--data", data, "--out", (dir / "base").string()}).code == 0);
  for (const char* name : {"r1", "r2"}) {
    const auto r = run({"train", "--data", data, "--arch", "eegnet", "--size", "small", "--epochs", "2", "--seed",
                        "5", "--quiet", "--out", (dir / name).string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
  }
  CHECK(slurp(dir / "r1" / "history.jsonl") == slurp(dir / "r2" / "history.jsonl"));
  CHECK(slurp(dir / "r1" / "model.ckpt") == slurp(dir / "r2" / "model.ckpt"));
  CHECK(slurp(dir / "r1" / "predictions.csv") == slurp(dir / "r2" / "predictions.csv"));
  for (const char* name : {"base", "r1", "r2"}) CHECK(std::filesystem::exists(dir / name / "manifest.json"));

  const auto ev = run({"eval", "--run", (dir / "r1").string(), "--json"});
  REQUIRE(ev.code == 0);
  const auto j = nlohmann::json::parse(ev.out);
  CHECK(j.contains("max_last5"));
  CHECK(j.contains("mean_last5"));

  const auto report = dir / "report";
  const auto a = run({"analyze", "--runs", (dir / "base").string() + "," + (dir / "r1").string(), "--out",
                      report.string()});
  INFO(a.err);
  REQUIRE(a.code == 0);
  CHECK(std::filesystem::exists(report / "manifest.json"));
  CHECK(testing::well_formed_svg(report / "object_comparison.svg"));
  CHECK(run({"analyze", "--runs", (dir / "r1").string(), "--out", report.string(), "--combine", "weird"}).code == 1);
}
