// vulnmap: street-view building attributes vs. census household vulnerability.
//
//   vulnmap validate  --config run.yaml
//   vulnmap run       --config run.yaml [--seed N] [--threads N]
//   vulnmap geocode   --footprints f.geojson --detections d.jsonl --out DIR
//   vulnmap k3        --census c.csv --schema s.yaml --out-dir DIR
//   vulnmap eval      --predictions p.jsonl --annotations a.jsonl --out-dir DIR
//   vulnmap correlate --out-dir DIR --footprints f.geojson
//
// Exit codes: 0 ok, 1 input error, 2 internal error.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "vulnmap/error.hpp"
#include "vulnmap/pipeline.hpp"

namespace {

using vulnmap::pipeline::PipelineConfig;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitInternal = 2;

// Command-line values that override the config file when given.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> detections, footprints, census, schema, annotations, predictions,
      buildings, blocks_k3, out_dir;
  std::optional<double> max_range_m, iou_threshold, anova_threshold, histogram_lo, histogram_hi;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> histogram_bins, threads;
  bool mask_iou = false;
  bool allow_large = false;

  PipelineConfig resolve() const {
    PipelineConfig c = config ? vulnmap::pipeline::load_config(*config) : PipelineConfig{};
    if (detections) c.detections = *detections;
    if (footprints) c.footprints = *footprints;
    if (census) c.census = *census;
    if (schema) c.schema = *schema;
    if (annotations) c.annotations = *annotations;
    if (predictions) c.predictions = *predictions;
    if (buildings) c.buildings = *buildings;
    if (blocks_k3) c.blocks_k3 = *blocks_k3;
    if (out_dir) c.out_dir = *out_dir;
    if (max_range_m) c.max_range_m = *max_range_m;
    if (iou_threshold) c.iou_threshold = *iou_threshold;
    if (anova_threshold) c.anova_threshold = *anova_threshold;
    if (histogram_lo) c.histogram_lo = *histogram_lo;
    if (histogram_hi) c.histogram_hi = *histogram_hi;
    if (histogram_bins) c.histogram_bins = *histogram_bins;
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    if (mask_iou) c.mask_iou = true;
    if (allow_large) c.allow_large = true;
    return c;
  }
};

void add_common(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--config", o.config, "YAML pipeline config")->check(CLI::ExistingFile);
  cmd.add_option("--out-dir", o.out_dir, "Output directory");
  cmd.add_option("--threads", o.threads, "Worker threads (outputs do not depend on this)");
}

void add_geocode_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--detections", o.detections, "Detections JSONL");
  cmd.add_option("--footprints", o.footprints, "Footprints GeoJSON");
  cmd.add_option("--max-range-m", o.max_range_m, "Viewing ray length in meters (default 50)");
}

void add_k3_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--census", o.census, "Census CSV");
  cmd.add_option("--schema", o.schema, "Schema YAML (default: built-in 26 variables)");
  cmd.add_option("--seed", o.seed, "Clustering tie-break seed (default 0)");
  cmd.add_option("--anova-threshold", o.anova_threshold, "F threshold for diagnostics (default 3.0)");
  cmd.add_flag("--allow-large", o.allow_large, "Permit more than 100000 households");
}

void add_eval_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--annotations", o.annotations, "Ground-truth annotations JSONL");
  cmd.add_option("--iou-threshold", o.iou_threshold, "Match when IoU is strictly above (default 0.75)");
  cmd.add_flag("--mask-iou", o.mask_iou, "Use polygon mask IoU when both sides have masks");
}

void add_correlate_flags(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--histogram-bins", o.histogram_bins, "K3 histogram bins (default 10)");
  cmd.add_option("--histogram-lo", o.histogram_lo, "K3 histogram lower edge (default 1)");
  cmd.add_option("--histogram-hi", o.histogram_hi, "K3 histogram upper edge (default 3)");
}

void print_counts(const vulnmap::pipeline::Counts& counts) {
  for (const auto& [k, v] : counts) std::cout << "  " << k << ": " << v << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vulnmap: geocode street-view building detections and relate them to the K3 "
               "household vulnerability index"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(vulnmap::pipeline::kVersion));

  Overrides o;

  auto* validate = app.add_subcommand("validate", "Parse every configured input, write nothing");
  add_common(*validate, o);
  add_geocode_flags(*validate, o);
  add_k3_flags(*validate, o);
  add_eval_flags(*validate, o);

  auto* run = app.add_subcommand("run", "Run every stage and write a run manifest");
  add_common(*run, o);
  add_geocode_flags(*run, o);
  add_k3_flags(*run, o);
  add_eval_flags(*run, o);
  add_correlate_flags(*run, o);

  auto* geocode = app.add_subcommand("geocode", "Link detections to footprints");
  add_common(*geocode, o);
  add_geocode_flags(*geocode, o);
  geocode->add_option("--out", o.out_dir, "Output directory (alias of --out-dir)");

  auto* k3 = app.add_subcommand("k3", "Compute block K3 from census microdata");
  add_common(*k3, o);
  add_k3_flags(*k3, o);

  auto* eval = app.add_subcommand("eval", "Score predictions against annotations");
  add_common(*eval, o);
  add_eval_flags(*eval, o);
  eval->add_option("--predictions", o.predictions, "Predictions JSONL (detection schema)");

  auto* correlate = app.add_subcommand("correlate", "Relate building profiles to block K3");
  add_common(*correlate, o);
  add_correlate_flags(*correlate, o);
  correlate->add_option("--buildings", o.buildings, "buildings.jsonl (default: OUT_DIR/buildings.jsonl)");
  correlate->add_option("--blocks-k3", o.blocks_k3, "blocks_k3.csv (default: OUT_DIR/blocks_k3.csv)");
  correlate->add_option("--footprints", o.footprints, "Footprints GeoJSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const PipelineConfig config = o.resolve();
    namespace pl = vulnmap::pipeline;

    if (validate->parsed()) {
      const auto report = pl::validate(config);
      for (const auto& err : report.errors) std::cerr << "error: " << err << '\n';
      std::cout << (report.ok ? "valid" : "invalid") << '\n';
      print_counts(report.counts);
      return report.ok ? kExitOk : kExitInput;
    }

    pl::Counts counts;
    if (run->parsed()) {
      const auto report = pl::validate(config);
      if (!report.ok) {
        for (const auto& err : report.errors) std::cerr << "error: " << err << '\n';
        return kExitInput;
      }
      counts = pl::run_all(config);
    } else if (geocode->parsed()) {
      counts = pl::run_geocode(config);
    } else if (k3->parsed()) {
      counts = pl::run_k3(config);
    } else if (eval->parsed()) {
      counts = pl::run_eval(config);
    } else if (correlate->parsed()) {
      counts = pl::run_correlate(config);
    }
    std::cout << "wrote " << config.out_dir.string() << '\n';
    print_counts(counts);
    return kExitOk;
  } catch (const vulnmap::pipeline::StageError& e) {
    std::cerr << "error in stage " << e.what() << '\n';
    return e.input_error() ? kExitInput : kExitInternal;
  } catch (const vulnmap::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}
