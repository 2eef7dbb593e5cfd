#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "epiline/pipeline.hpp"
#include "json.hpp"

using namespace epiline;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("epiline_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(EPILINE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Config small enough for a whole staged run in about a second.
fs::path tiny_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path path = dir / "config.json";
  write_text_file(path, R"({"seed": 3, "out_dir": ")" + (dir / "out").string() + R"(",
    "lines_per_camera": 3000, "candidate_limit": 300, "gt_correspondences": 200,
    "ransac": {"max_iterations": 300}, )" + extra + R"(
    "scenario": {"kind": "generic", "num_frames": 120, "width": 160, "height": 120, "focal_px": 175}})");
  return path;
}

}  // namespace

TEST_CASE("usage errors are fatal") {
  CHECK(run("") == 1);
  CHECK(run("bogus --config x") == 1);
  CHECK(run("pipeline") == 1);
  CHECK(run("pipeline --config /nonexistent/config.json") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("invalid configs are fatal") {
  const auto dir = scratch_dir("badcfg");
  write_text_file(dir / "a.json", "{ not json");
  write_text_file(dir / "b.json", R"({"scenario": {}, "unknown_key": 1})");
  write_text_file(dir / "c.json", R"({"scenario": {"kind": "spiral"}})");
  for (const char* name : {"a.json", "b.json", "c.json"})
    CHECK(run("pipeline --config " + (dir / name).string()) == 1);
}

TEST_CASE("pipeline succeeds and is reproducible") {
  const auto dir = scratch_dir("pipeline");
  const auto config = tiny_config(dir);
  REQUIRE(run("pipeline --config " + config.string() + " --out " + (dir / "r1").string()) == 0);
  REQUIRE(run("pipeline --config " + config.string() + " --out " + (dir / "r2").string()) == 0);
  for (const char* name : {"report.json", "report.csv", "F_est_0_1.txt", "F_truth_0_1.txt", "candidates_0_1.csv"})
    CHECK_MESSAGE(read_text_file(dir / "r1" / name) == read_text_file(dir / "r2" / name), name);
  CHECK_FALSE(fs::exists(dir / "out"));  // --out overrides the config

  const auto report = nlohmann::json::parse(read_text_file(dir / "r1" / "report.json"));
  CHECK(report.at("pairs").size() == 1);
  CHECK(report.at("pairs")[0].at("status") == "ok");
}

TEST_CASE("the seed flag overrides the config seed") {
  const auto dir = scratch_dir("seed");
  const auto config = tiny_config(dir);
  REQUIRE(run("pipeline --config " + config.string() + " --out " + (dir / "s3").string()) == 0);
  REQUIRE(run("pipeline --config " + config.string() + " --seed 3 --out " + (dir / "s3b").string()) == 0);
  REQUIRE(run("pipeline --config " + config.string() + " --seed 4 --out " + (dir / "s4").string()) == 0);
  CHECK(read_text_file(dir / "s3" / "report.json") == read_text_file(dir / "s3b" / "report.json"));
  CHECK(read_text_file(dir / "s3" / "scene.json") != read_text_file(dir / "s4" / "scene.json"));
}

TEST_CASE("stages chain through the output directory and match the one-shot pipeline") {
  const auto dir = scratch_dir("stages");
  const auto config = tiny_config(dir);
  const std::string cfg = " --config " + config.string();
  const auto out = dir / "out";
  REQUIRE(run("simulate" + cfg) == 0);
  for (const char* name : {"cam0.pack", "cam1.pack", "F_truth_0_1.txt", "gt_0_1.csv", "scene.json"})
    CHECK_MESSAGE(fs::exists(out / name), name);
  REQUIRE(run("barcodes" + cfg) == 0);
  CHECK(fs::exists(out / "lines_cam0.csv"));
  CHECK(fs::exists(out / "barcodes_cam1.txt"));
  REQUIRE(run("match" + cfg) == 0);
  REQUIRE(run("estimate" + cfg) == 0);
  REQUIRE(run("evaluate" + cfg) == 0);

  REQUIRE(run("pipeline" + cfg + " --out " + (dir / "oneshot").string()) == 0);
  CHECK(read_text_file(out / "candidates_0_1.csv") == read_text_file(dir / "oneshot" / "candidates_0_1.csv"));
  CHECK(read_text_file(out / "F_est_0_1.txt") == read_text_file(dir / "oneshot" / "F_est_0_1.txt"));
  CHECK(read_text_file(out / "F_truth_0_1.txt") == read_text_file(dir / "oneshot" / "F_truth_0_1.txt"));

  const auto staged = nlohmann::json::parse(read_text_file(out / "report.json")).at("pairs")[0];
  const auto oneshot = nlohmann::json::parse(read_text_file(dir / "oneshot" / "report.json")).at("pairs")[0];
  for (const char* key : {"inliers", "true_positive_rate", "symmetric_epipolar_distance", "degenerate",
                          "candidates_after_filter"})
    CHECK_MESSAGE(staged.at(key) == oneshot.at(key), key);
}

TEST_CASE("a later stage without its inputs reports the pair as failed") {
  const auto dir = scratch_dir("missing_stage");
  const auto config = tiny_config(dir);
  REQUIRE(run("simulate --config " + config.string()) == 0);
  CHECK(run("match --config " + config.string()) == 2);  // no barcodes yet
  CHECK(run("estimate --config " + config.string()) == 2);
  CHECK(run("evaluate --config " + config.string()) == 2);
  CHECK(fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("a missing camera input gives partial failure") {
  const auto dir = scratch_dir("partial");
  const auto sim_cfg = tiny_config(dir);
  REQUIRE(run("simulate --config " + sim_cfg.string()) == 0);
  const auto out = dir / "out";
  write_text_file(dir / "inputs.json", R"({"out_dir": ")" + (dir / "run").string() + R"(",
    "lines_per_camera": 2000, "ransac": {"max_iterations": 100},
    "inputs": [{"packed": ")" + (out / "cam0.pack").string() + R"("},
               {"packed": ")" + (dir / "absent.pack").string() + R"("},
               {"packed": ")" + (out / "cam1.pack").string() + R"("}]})");
  CHECK(run("pipeline --config " + (dir / "inputs.json").string()) == 2);
  const auto report = nlohmann::json::parse(read_text_file(dir / "run" / "report.json"));
  REQUIRE(report.at("pairs").size() == 3);
  CHECK(report.at("pairs")[0].at("status") == "error");
  CHECK(report.at("pairs")[1].at("status") == "ok");
  CHECK(report.at("pairs")[2].at("status") == "error");

  CHECK(run("barcodes --config " + (dir / "inputs.json").string()) == 2);
}

TEST_CASE("simulate without a scenario is fatal") {
  const auto dir = scratch_dir("nosim");
  write_text_file(dir / "cfg.json", R"({"inputs": [{"packed": "a.pack"}, {"packed": "b.pack"}]})");
  CHECK(run("simulate --config " + (dir / "cfg.json").string()) == 1);
}
