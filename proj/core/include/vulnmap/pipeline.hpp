#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Orchestration of ingest -> geocode -> k3 -> eval -> correlate, shared by
// the command-line tool and the integration tests.
namespace vulnmap::pipeline {

struct PipelineConfig {
  // inputs
  std::filesystem::path detections;
  std::filesystem::path footprints;
  std::filesystem::path census;
  std::optional<std::filesystem::path> schema;       // default schema when absent
  std::optional<std::filesystem::path> annotations;  // eval stage is skipped when absent
  // standalone-stage inputs; default to detections / previous outputs in out_dir
  std::optional<std::filesystem::path> predictions;
  std::optional<std::filesystem::path> buildings;
  std::optional<std::filesystem::path> blocks_k3;
  std::filesystem::path out_dir = "out";

  double max_range_m = 50.0;
  std::uint64_t seed = 0;
  double iou_threshold = 0.75;
  bool mask_iou = false;
  double anova_threshold = 3.0;
  std::size_t histogram_bins = 10;
  double histogram_lo = 1.0;
  double histogram_hi = 3.0;
  bool allow_large = false;
  // Not part of the reproducibility contract: outputs are identical for any value.
  std::size_t threads = 1;
};

// Reads a YAML config. Relative paths are resolved against the config
// file's directory. Unknown keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);

// Throws InputError naming the first parameter outside its documented range.
void check_parameters(const PipelineConfig& config);

// Canonical JSON of the parameters that can influence outputs. Paths are
// left out (inputs are identified by content digest in the run manifest), as
// is `threads`.
std::string canonical_config(const PipelineConfig& config);
std::string sha256_hex(const std::string& data);

// Raised when a stage fails. `input_error()` separates bad inputs (exit 1)
// from internal failures (exit 2).
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause, bool input_error);
  const std::string& stage() const noexcept { return stage_; }
  bool input_error() const noexcept { return input_error_; }

 private:
  std::string stage_;
  bool input_error_;
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> errors;
  std::map<std::string, std::size_t> counts;
};

// Parses every configured input without writing anything.
ValidationReport validate(const PipelineConfig& config);

using Counts = std::map<std::string, std::size_t>;

// Each stage writes its artifacts into out_dir under a ".partial" suffix and
// renames them only once the stage has succeeded. Pre-existing copies of the
// stage's artifacts are removed first, so a failed run never leaves stale
// results next to fresh ones.
Counts run_geocode(const PipelineConfig& config);   // buildings.jsonl, rejects.jsonl
Counts run_k3(const PipelineConfig& config);        // blocks_k3.csv, k3_diagnostics.json
Counts run_eval(const PipelineConfig& config);      // eval_report.json
Counts run_correlate(const PipelineConfig& config); // correlation_matrix.csv, class_k3.csv,
                                                    // histogram.csv, blocks_joined.geojson

// All stages plus run_manifest.json. Artifacts become final together at the end.
Counts run_all(const PipelineConfig& config);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vulnmap::pipeline
