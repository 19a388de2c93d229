#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "umd/io.hpp"

using namespace umd;
namespace fs = std::filesystem;

namespace {

// Default victim recipe with a smaller test split to keep the runs short.
const std::string kSmall = " --test-per-class 100";

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("umd_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  fs::path operator/(const std::string& name) const { return dir / name; }
};

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" UMD_CLI_PATH "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("detect --model x.bin") == 1);
  CHECK(run("forge --setting sideways") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("forge, detect and mitigate an attacked victim") {
  Workspace ws;
  REQUIRE(run("forge --setting x2x --seed 3 --out-dir " + q(ws.dir) + kSmall) == 0);
  for (const char* f : {"model.bin", "train.bin", "test.bin", "clean.bin", "attack.json", "summary.json"})
    CHECK(fs::exists(ws / f));
  const Json summary = load_json(ws / "summary.json");
  CHECK(summary.contains("accuracy"));

  // Forging is deterministic in the seed.
  fs::create_directories(ws / "again");
  REQUIRE(run("forge --setting x2x --seed 3 --out-dir " + q(ws / "again") + kSmall) == 0);
  CHECK(load_model(ws / "model.bin") == load_model(ws / "again" / "model.bin"));
  CHECK(read_text(ws / "train.bin") == read_text(ws / "again" / "train.bin"));

  const std::string base = "detect --model " + q(ws / "model.bin") + " --clean " + q(ws / "clean.bin");
  REQUIRE(run(base + " --seed 1 --emit-tr --tr-csv " + q(ws / "tr.csv") + " --out " + q(ws / "report.json")) == 0);
  const Json report = load_json(ws / "report.json");
  CHECK(report["attacked"] == true);
  CHECK(report.contains("tr_matrix"));
  CHECK(read_text(ws / "tr.csv").rfind("pair,0->1,", 0) == 0);

  // Without --emit-tr the matrix stays out of the report.
  REQUIRE(run(base + " --seed 1 --out " + q(ws / "plain.json")) == 0);
  CHECK_FALSE(load_json(ws / "plain.json").contains("tr_matrix"));

  // UMD_WORKDIR supplies the default output path.
  REQUIRE(run(base + " --seed 1", "UMD_WORKDIR=" + q(ws / "again")) == 0);
  CHECK(fs::exists(ws / "again" / "report.json"));

  REQUIRE(run(base + " --seed 1 --max-clusters 3 --out " + q(ws / "multi.json")) == 0);
  CHECK(load_json(ws / "multi.json")["clusters"].size() == 3);

  REQUIRE(run("mitigate --model " + q(ws / "model.bin") + " --report " + q(ws / "report.json") +
              " --clean " + q(ws / "clean.bin") + " --test " + q(ws / "test.bin") + " --attack " +
              q(ws / "attack.json") + " --out " + q(ws / "fixed.bin")) == 0);
  const Json mit = load_json(ws / "mitigation.json");
  CHECK(mit["asr_after"].get<double>() < mit["asr_before"].get<double>());
  CHECK_FALSE(load_model(ws / "fixed.bin") == load_model(ws / "model.bin"));
}

TEST_CASE("benign forge writes no attack spec and cannot be mitigated") {
  Workspace ws;
  REQUIRE(run("forge --setting benign --seed 4 --out-dir " + q(ws.dir) + kSmall) == 0);
  CHECK_FALSE(fs::exists(ws / "attack.json"));
  REQUIRE(run("detect --model " + q(ws / "model.bin") + " --clean " + q(ws / "clean.bin") +
              " --out " + q(ws / "report.json")) == 0);
  const Json report = load_json(ws / "report.json");
  if (report["attacked"] == false) {
    CHECK(run("mitigate --model " + q(ws / "model.bin") + " --report " + q(ws / "report.json") +
              " --clean " + q(ws / "clean.bin")) == 2);
  }
  Json forced = report;
  forced["attacked"] = false;
  save_json(ws / "benign.json", forced);
  CHECK(run("mitigate --model " + q(ws / "model.bin") + " --report " + q(ws / "benign.json") +
            " --clean " + q(ws / "clean.bin")) == 2);
}

TEST_CASE("weak attacks are reported as unsuccessful") {
  Workspace ws;
  REQUIRE(run("forge --setting o2o --seed 5 --poison 5 --out-dir " + q(ws.dir) + kSmall) == 0);
  CHECK(load_json(ws / "summary.json")["attack_successful"] == false);
}

TEST_CASE("bad inputs map to exit codes") {
  Workspace ws;
  CHECK(run("detect --model " + q(ws / "none.bin") + " --clean " + q(ws / "none.bin")) == 3);
  write_text(ws / "junk.bin", "not a model");
  CHECK(run("detect --model " + q(ws / "junk.bin") + " --clean " + q(ws / "junk.bin")) == 2);
  CHECK(run("bench --attacked 0 --benign 0 --out " + q(ws / "b.json")) == 2);
  CHECK(run("forge --classes 1 --out-dir " + q(ws.dir)) == 2);
}

TEST_CASE("bench reruns are byte identical") {
  Workspace ws;
  const std::string args = "bench --attacked 1 --benign 1 --settings o2o --seed 9" + kSmall;
  REQUIRE(run(args + " --out " + q(ws / "a.json")) == 0);
  REQUIRE(run(args + " --model-workers 2 --workers 2 --out " + q(ws / "b.json")) == 0);
  CHECK(read_text(ws / "a.json") == read_text(ws / "b.json"));
  const Json doc = load_json(ws / "a.json");
  CHECK(doc.contains("umd"));
}
