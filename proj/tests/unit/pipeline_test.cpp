#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "support/oracles.hpp"
#include "vulnmap/error.hpp"
#include "vulnmap/ingest.hpp"
#include "vulnmap/k3.hpp"
#include "vulnmap/pipeline.hpp"
#include "vulnmap/report.hpp"

namespace vulnmap::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kFixture = fs::path(VULNMAP_FIXTURE_DIR) / "small";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("vulnmap_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

PipelineConfig fixture_config(const std::string& out, const char* file = "config.yaml") {
  auto c = load_config(kFixture / file);
  c.out_dir = scratch(out);
  return c;
}

const std::vector<std::string> kAllArtifacts = {
    "buildings.jsonl",     "rejects.jsonl",          "blocks_k3.csv", "k3_diagnostics.json",
    "eval_report.json",    "correlation_matrix.csv", "class_k3.csv",  "histogram.csv",
    "blocks_joined.geojson", "run_manifest.json"};

TEST(Config, ResolvesRelativePathsAndRejectsUnknownKeys) {
  auto c = load_config(kFixture / "config.yaml");
  EXPECT_EQ(c.detections, kFixture / "detections.jsonl");
  EXPECT_EQ(c.histogram_bins, 4u);
  auto dir = scratch("config");
  std::ofstream(dir / "bad.yaml") << "detections: d.jsonl\nmax_rnage_m: 3\n";
  EXPECT_THROW(load_config(dir / "bad.yaml"), InputError);
  std::ofstream(dir / "range.yaml") << "iou_threshold: 1.5\n";
  EXPECT_THROW(check_parameters(load_config(dir / "range.yaml")), InputError);
}

TEST(Config, HashIgnoresThreadsAndPaths) {
  auto a = load_config(kFixture / "config.yaml");
  auto b = a;
  b.threads = 8;
  b.out_dir = "/elsewhere";
  EXPECT_EQ(canonical_config(a), canonical_config(b));
  b.seed = 1;
  EXPECT_NE(canonical_config(a), canonical_config(b));
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Validate, FixtureIsValid) {
  auto r = validate(fixture_config("validate"));
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.counts.at("detections"), 8u);
  EXPECT_EQ(r.counts.at("footprints"), 6u);
  EXPECT_EQ(r.counts.at("households"), 20u);
  EXPECT_EQ(r.counts.at("annotations"), 6u);
}

TEST(Validate, ReportsMissingFileAndColumn) {
  auto c = fixture_config("validate_missing");
  c.detections = kFixture / "nope.jsonl";
  auto r = validate(c);
  EXPECT_FALSE(r.ok);
  ASSERT_FALSE(r.errors.empty());
  EXPECT_NE(r.errors[0].find("nope.jsonl"), std::string::npos);

  auto dir = scratch("validate_column");
  std::string census = slurp(kFixture / "census.csv");
  census.replace(census.find(",access_sewerage"), 16, "");
  std::ofstream(dir / "census.csv") << census;
  c = fixture_config("validate_column2");
  c.census = dir / "census.csv";
  r = validate(c);
  EXPECT_FALSE(r.ok);
  ASSERT_FALSE(r.errors.empty());
  EXPECT_NE(r.errors[0].find("access_sewerage"), std::string::npos) << r.errors[0];
}

TEST(Run, FixtureProducesEverything) {
  auto c = fixture_config("run");
  auto counts = run_all(c);
  for (const auto& name : kAllArtifacts) EXPECT_TRUE(fs::exists(c.out_dir / name)) << name;
  for (const auto& e : fs::directory_iterator(c.out_dir)) {
    EXPECT_NE(e.path().extension(), ".partial") << e.path();
  }

  auto manifest = json::parse(slurp(c.out_dir / "run_manifest.json"));
  const json expected = {{"detections", 8},
                         {"detections_matched", 6},
                         {"detections_rejected", 2},
                         {"footprints", 6},
                         {"buildings", 6},
                         {"households", 20},
                         {"households_in_blocks", 20},
                         {"blocks", 3},
                         {"annotations", 6},
                         {"eval_predictions", 8},
                         {"eval_matched", 6},
                         {"joined_blocks", 3},
                         {"trend_buildings", 6},
                         {"trend_buildings_without_k3", 0}};
  for (const auto& [k, v] : expected.items()) EXPECT_EQ(manifest["counts"][k], v) << k;
  EXPECT_EQ(manifest["seed"], 0);
  EXPECT_EQ(manifest["config_sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(manifest["counts"]["detections"].get<int>(),
            manifest["counts"]["detections_matched"].get<int>() +
                manifest["counts"]["detections_rejected"].get<int>());

  // The poorest block comes out lowest and the richest highest.
  std::istringstream k3csv(slurp(c.out_dir / "blocks_k3.csv"));
  auto blocks = report::read_blocks_k3_csv(k3csv, "blocks_k3.csv");
  ASSERT_EQ(blocks.size(), 3u);
  EXPECT_LT(blocks[0].k3, blocks[1].k3);
  EXPECT_LT(blocks[1].k3, blocks[2].k3);

  // The clustering reached the exhaustive optimum on this small input.
  const auto schema = ingest::load_schema(c.schema.value());
  const auto households = ingest::parse_census(c.census, schema);
  const auto m = k3::standardize(households, schema);
  const auto d = k3::gower(m);
  EXPECT_NEAR(k3::cluster_k3(d).objective, testing::exhaustive_k3(d).objective, 1e-12);
  auto diag = json::parse(slurp(c.out_dir / "k3_diagnostics.json"));
  EXPECT_NEAR(diag["objective"].get<double>(), testing::exhaustive_k3(d).objective, 1e-12);

  auto rejects = slurp(c.out_dir / "rejects.jsonl");
  EXPECT_NE(rejects.find("img06"), std::string::npos);
  EXPECT_NE(rejects.find("img07"), std::string::npos);

  auto eval = json::parse(slurp(c.out_dir / "eval_report.json"));
  EXPECT_EQ(eval["attributes"]["condition"]["accuracy"].get<double>(), 5.0 / 6.0);
  EXPECT_EQ(eval["attributes"]["material"]["accuracy"].get<double>(), 1.0);
}

TEST(Run, Deterministic) {
  auto a = fixture_config("det_a");
  auto b = fixture_config("det_b");
  b.threads = 4;
  run_all(a);
  run_all(b);
  run_all(a);  // rerun over existing outputs
  for (const auto& name : kAllArtifacts) {
    EXPECT_EQ(slurp(a.out_dir / name), slurp(b.out_dir / name)) << name;
  }
}

TEST(Run, NoAnnotationsMeansNoEvalReport) {
  auto c = fixture_config("noann", "config_no_annotations.yaml");
  auto counts = run_all(c);
  EXPECT_FALSE(fs::exists(c.out_dir / "eval_report.json"));
  EXPECT_EQ(counts.count("annotations"), 0u);
  for (const auto& name : kAllArtifacts) {
    if (name != "eval_report.json") EXPECT_TRUE(fs::exists(c.out_dir / name)) << name;
  }
}

TEST(Run, FailureNamesStageAndLeavesNoStaleFinals) {
  auto c = fixture_config("fail");
  run_all(c);
  ASSERT_TRUE(fs::exists(c.out_dir / "buildings.jsonl"));
  auto dir = scratch("fail_inputs");
  std::ofstream(dir / "census.csv") << slurp(kFixture / "census.csv") << "H99,B9,no,yes,yes,yes,101,5\n";
  c.census = dir / "census.csv";
  try {
    run_all(c);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_TRUE(e.input_error());
    EXPECT_EQ(e.stage(), "ingest");
  }
  EXPECT_FALSE(fs::exists(c.out_dir / "buildings.jsonl"));
  EXPECT_FALSE(fs::exists(c.out_dir / "run_manifest.json"));
  EXPECT_TRUE(fs::exists(c.out_dir / "buildings.jsonl.partial"));
}

TEST(Stages, StandaloneMatchesRun) {
  auto full = fixture_config("stages_full");
  run_all(full);
  auto c = fixture_config("stages");
  run_geocode(c);
  run_k3(c);
  run_eval(c);
  run_correlate(c);
  for (const auto& name : kAllArtifacts) {
    if (name == "run_manifest.json") continue;
    EXPECT_EQ(slurp(c.out_dir / name), slurp(full.out_dir / name)) << name;
  }
}

// --- command-line tool ------------------------------------------------------

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + VULNMAP_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto cfg = (kFixture / "config.yaml").string();
  EXPECT_EQ(cli("validate --config " + cfg), 0);
  EXPECT_EQ(cli("validate --config " + cfg + " --detections /nonexistent.jsonl"), 1);
  EXPECT_EQ(cli("frobnicate"), 1);
  EXPECT_EQ(cli("--help"), 0);
  auto out = scratch("cli_run");
  EXPECT_EQ(cli("run --config " + cfg + " --out-dir " + out.string() + " --threads 2"), 0);
  EXPECT_TRUE(fs::exists(out / "run_manifest.json"));
  EXPECT_EQ(cli("run --config " + cfg + " --out-dir " + out.string() + " --iou-threshold 2"), 1);
}

TEST(Cli, SubcommandsAndOverrides) {
  const auto cfg = (kFixture / "config.yaml").string();
  auto out = scratch("cli_stages");
  EXPECT_EQ(cli("geocode --footprints " + (kFixture / "footprints.geojson").string() + " --detections " +
                (kFixture / "detections.jsonl").string() + " --out " + out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "buildings.jsonl"));
  EXPECT_EQ(cli("k3 --census " + (kFixture / "census.csv").string() + " --schema " +
                (kFixture / "schema.yaml").string() + " --out-dir " + out.string() + " --seed 3"),
            0);
  EXPECT_EQ(cli("eval --config " + cfg + " --out-dir " + out.string()), 0);
  EXPECT_EQ(cli("correlate --config " + cfg + " --out-dir " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "class_k3.csv"));
  // Census parsed against the default schema lacks most columns.
  EXPECT_EQ(cli("k3 --census " + (kFixture / "census.csv").string() + " --out-dir " + out.string()), 1);
}

TEST(Cli, SameOutputForAnyThreadCount) {
  const auto cfg = (kFixture / "config.yaml").string();
  auto a = scratch("cli_t1");
  auto b = scratch("cli_t3");
  ASSERT_EQ(cli("run --config " + cfg + " --out-dir " + a.string() + " --threads 1"), 0);
  ASSERT_EQ(cli("run --config " + cfg + " --out-dir " + b.string() + " --threads 3"), 0);
  for (const auto& name : kAllArtifacts) EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
}

}  // namespace
}  // namespace vulnmap::pipeline
