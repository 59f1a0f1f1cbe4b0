#include "vulnmap/pipeline.hpp"

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <boost/version.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vulnmap/correlate.hpp"
#include "vulnmap/error.hpp"
#include "vulnmap/eval.hpp"
#include "vulnmap/geocode.hpp"
#include "vulnmap/ingest.hpp"
#include "vulnmap/k3.hpp"
#include "vulnmap/report.hpp"

namespace vulnmap::pipeline {
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

StageError::StageError(std::string stage, const std::string& cause, bool input_error)
    : std::runtime_error(stage + ": " + cause), stage_(std::move(stage)), input_error_(input_error) {}

// ---------------------------------------------------------------------------
// config

PipelineConfig load_config(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw InputError("cannot open config " + path.string());
  } catch (const YAML::Exception& e) {
    throw ParseError(path.string(), e.mark.line + 1, "", std::string("malformed YAML: ") + e.msg);
  }
  if (!root.IsMap()) throw ParseError(path.string(), 0, "", "expected a mapping at top level");

  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp : (base / fp).lexically_normal();
  };

  PipelineConfig c;
  const std::map<std::string, std::function<void(const YAML::Node&)>> setters = {
      {"detections", [&](const YAML::Node& n) { c.detections = resolve(n.as<std::string>()); }},
      {"footprints", [&](const YAML::Node& n) { c.footprints = resolve(n.as<std::string>()); }},
      {"census", [&](const YAML::Node& n) { c.census = resolve(n.as<std::string>()); }},
      {"schema", [&](const YAML::Node& n) { c.schema = resolve(n.as<std::string>()); }},
      {"annotations", [&](const YAML::Node& n) { c.annotations = resolve(n.as<std::string>()); }},
      {"predictions", [&](const YAML::Node& n) { c.predictions = resolve(n.as<std::string>()); }},
      {"buildings", [&](const YAML::Node& n) { c.buildings = resolve(n.as<std::string>()); }},
      {"blocks_k3", [&](const YAML::Node& n) { c.blocks_k3 = resolve(n.as<std::string>()); }},
      {"out_dir", [&](const YAML::Node& n) { c.out_dir = resolve(n.as<std::string>()); }},
      {"max_range_m", [&](const YAML::Node& n) { c.max_range_m = n.as<double>(); }},
      {"seed", [&](const YAML::Node& n) { c.seed = n.as<std::uint64_t>(); }},
      {"iou_threshold", [&](const YAML::Node& n) { c.iou_threshold = n.as<double>(); }},
      {"mask_iou", [&](const YAML::Node& n) { c.mask_iou = n.as<bool>(); }},
      {"anova_threshold", [&](const YAML::Node& n) { c.anova_threshold = n.as<double>(); }},
      {"histogram_bins", [&](const YAML::Node& n) { c.histogram_bins = n.as<std::size_t>(); }},
      {"histogram_lo", [&](const YAML::Node& n) { c.histogram_lo = n.as<double>(); }},
      {"histogram_hi", [&](const YAML::Node& n) { c.histogram_hi = n.as<double>(); }},
      {"allow_large", [&](const YAML::Node& n) { c.allow_large = n.as<bool>(); }},
      {"threads", [&](const YAML::Node& n) { c.threads = n.as<std::size_t>(); }},
  };
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw ParseError(path.string(), kv.first.Mark().line + 1, key, "unknown config key");
    }
    try {
      it->second(kv.second);
    } catch (const YAML::Exception& e) {
      throw ParseError(path.string(), kv.second.Mark().line + 1, key, "bad value: " + e.msg);
    }
  }
  return c;
}

void check_parameters(const PipelineConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw InputError("parameter " + what);
  };
  require(std::isfinite(c.max_range_m) && c.max_range_m > 0.0, "max_range_m must be > 0");
  require(c.iou_threshold >= 0.0 && c.iou_threshold < 1.0, "iou_threshold must be in [0, 1)");
  require(std::isfinite(c.anova_threshold) && c.anova_threshold >= 0.0,
          "anova_threshold must be >= 0");
  require(c.histogram_bins >= 1 && c.histogram_bins <= 10'000,
          "histogram_bins must be in [1, 10000]");
  require(std::isfinite(c.histogram_lo) && std::isfinite(c.histogram_hi) &&
              c.histogram_lo < c.histogram_hi,
          "histogram range requires histogram_lo < histogram_hi");
  require(c.threads >= 1 && c.threads <= 256, "threads must be in [1, 256]");
}

std::string canonical_config(const PipelineConfig& c) {
  ordered_json j;
  j["max_range_m"] = c.max_range_m;
  j["seed"] = c.seed;
  j["iou_threshold"] = c.iou_threshold;
  j["mask_iou"] = c.mask_iou;
  j["anova_threshold"] = c.anova_threshold;
  j["histogram_bins"] = c.histogram_bins;
  j["histogram_lo"] = c.histogram_lo;
  j["histogram_hi"] = c.histogram_hi;
  j["allow_large"] = c.allow_large;
  j["schema"] = c.schema ? "file" : "default";
  j["annotations"] = c.annotations.has_value();
  return j.dump();
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

// ---------------------------------------------------------------------------
// artifacts

namespace {

class OutputSet {
 public:
  OutputSet(fs::path dir, const std::vector<std::string>& names) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) {
      throw InputError("cannot create output directory " + dir_.string());
    }
    for (const auto& name : names) {
      fs::remove(dir_ / name, ec);
      fs::remove(partial(name), ec);
    }
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(partial(name), std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + partial(name).string());
    body(out);
    out.close();
    if (!out) throw std::runtime_error("write failed for " + partial(name).string());
    written_.push_back(name);
  }

  void commit() {
    for (const auto& name : written_) fs::rename(partial(name), dir_ / name);
    written_.clear();
  }

 private:
  fs::path partial(const std::string& name) const { return dir_ / (name + ".partial"); }

  fs::path dir_;
  std::vector<std::string> written_;
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const InputError& e) {
    throw StageError(name, e.what(), true);
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), false);
  }
}

const std::vector<std::string> kGeocodeArtifacts = {"buildings.jsonl", "rejects.jsonl"};
const std::vector<std::string> kK3Artifacts = {"blocks_k3.csv", "k3_diagnostics.json"};
const std::vector<std::string> kEvalArtifacts = {"eval_report.json"};
const std::vector<std::string> kCorrelateArtifacts = {"correlation_matrix.csv", "class_k3.csv",
                                                      "histogram.csv", "blocks_joined.geojson"};
const std::string kManifest = "run_manifest.json";

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw InputError(std::string("no ") + what + " path configured");
  if (!fs::is_regular_file(p)) throw InputError(std::string(what) + " file not found: " + p.string());
}

CensusSchema schema_for(const PipelineConfig& c) {
  if (!c.schema) return ingest::default_census_schema();
  require_file(*c.schema, "schema");
  return ingest::load_schema(*c.schema);
}

struct GeocodeOutputs {
  std::vector<DetectionRecord> detections;
  std::vector<FootprintFeature> footprints;
  geocode::GeocodeResult result;
};

GeocodeOutputs do_geocode(const PipelineConfig& c, OutputSet& out, Counts& counts) {
  GeocodeOutputs g;
  stage("ingest", [&] {
    require_file(c.detections, "detections");
    require_file(c.footprints, "footprints");
    g.detections = ingest::parse_detections(c.detections);
    g.footprints = ingest::parse_footprints(c.footprints);
  });
  stage("geocode", [&] {
    g.result = geocode::geocode(g.detections, g.footprints, {c.max_range_m, c.threads});
    out.write("buildings.jsonl", [&](std::ostream& os) {
      report::write_buildings_jsonl(os, g.result.buildings);
    });
    out.write("rejects.jsonl", [&](std::ostream& os) {
      report::write_rejects_jsonl(os, g.result.rejects, g.detections);
    });
  });
  counts["detections"] = g.detections.size();
  counts["detections_matched"] = g.detections.size() - g.result.rejects.size();
  counts["detections_rejected"] = g.result.rejects.size();
  counts["footprints"] = g.footprints.size();
  counts["buildings"] = g.result.buildings.size();
  return g;
}

std::vector<k3::BlockK3> do_k3(const PipelineConfig& c, OutputSet& out, Counts& counts) {
  std::vector<HouseholdRecord> households;
  CensusSchema schema;
  stage("ingest", [&] {
    schema = schema_for(c);
    require_file(c.census, "census");
    households = ingest::parse_census(c.census, schema);
  });
  return stage("k3", [&] {
    k3::K3Options opts{c.seed, c.anova_threshold, c.threads, c.allow_large};
    k3::K3Result r = k3::compute_k3(households, schema, opts);
    out.write("blocks_k3.csv", [&](std::ostream& os) { report::write_blocks_k3_csv(os, r.blocks); });
    out.write("k3_diagnostics.json", [&](std::ostream& os) {
      report::write_k3_diagnostics_json(os, r.diagnostics, c.seed, households.size());
    });
    counts["households"] = households.size();
    counts["blocks"] = r.blocks.size();
    std::size_t in_blocks = 0;
    for (const auto& b : r.blocks) in_blocks += b.n_households;
    counts["households_in_blocks"] = in_blocks;
    counts["census_variables_dropped"] = r.diagnostics.dropped_columns.size();
    return r.blocks;
  });
}

void do_eval(const PipelineConfig& c, std::span<const DetectionRecord> preloaded, OutputSet& out,
             Counts& counts) {
  std::vector<DetectionRecord> predictions;
  std::vector<AnnotatedInstance> truths;
  stage("ingest", [&] {
    if (!c.annotations) throw InputError("no annotations path configured");
    require_file(*c.annotations, "annotations");
    truths = ingest::parse_annotations(*c.annotations);
    if (c.predictions || preloaded.empty()) {
      const fs::path p = c.predictions.value_or(c.detections);
      require_file(p, "predictions");
      predictions = ingest::parse_detections(p);
    } else {
      predictions.assign(preloaded.begin(), preloaded.end());
    }
  });
  stage("eval", [&] {
    eval::EvalReport r = eval::evaluate(predictions, truths, {c.iou_threshold, c.mask_iou});
    out.write("eval_report.json", [&](std::ostream& os) { report::write_eval_report_json(os, r); });
    counts["annotations"] = truths.size();
    counts["eval_predictions"] = predictions.size();
    counts["eval_matched"] = r.matched;
  });
}

void do_correlate(const PipelineConfig& c,
                  const std::vector<geocode::BuildingAttributeRecord>& buildings,
                  const std::vector<k3::BlockK3>& blocks,
                  const std::vector<FootprintFeature>& footprints, OutputSet& out, Counts& counts) {
  stage("correlate", [&] {
    const auto profiles = correlate::block_profiles(buildings);
    const auto table = correlate::join_k3_profiles(blocks, profiles);
    if (table.rows() < 2) {
      throw InputError("fewer than 2 blocks have both a K3 value and geocoded buildings");
    }
    const auto matrix = correlate::correlation_matrix(table, c.threads);

    std::set<std::string> k3_blocks;
    for (const auto& b : blocks) k3_blocks.insert(b.block_id);
    std::vector<geocode::BuildingAttributeRecord> with_k3;
    for (const auto& b : buildings) {
      if (k3_blocks.count(b.block_id)) with_k3.push_back(b);
    }
    std::vector<correlate::TrendSummary> trends;
    for (Attribute a : kAllAttributes) {
      trends.push_back(correlate::class_k3_trend(with_k3, blocks, a, correlate::default_class_order(a)));
    }

    std::vector<double> k3_values;
    for (const auto& b : blocks) k3_values.push_back(b.k3);
    const auto hist = correlate::histogram(k3_values, c.histogram_lo, c.histogram_hi, c.histogram_bins);

    out.write("correlation_matrix.csv", [&](std::ostream& os) { report::write_correlation_csv(os, matrix); });
    out.write("class_k3.csv", [&](std::ostream& os) { report::write_class_k3_csv(os, trends); });
    out.write("histogram.csv", [&](std::ostream& os) { report::write_histogram_csv(os, hist); });
    out.write("blocks_joined.geojson", [&](std::ostream& os) {
      report::write_blocks_joined_geojson(os, footprints, blocks, profiles);
    });

    counts["joined_blocks"] = table.rows();
    counts["trend_buildings"] = with_k3.size();
    counts["trend_buildings_without_k3"] = buildings.size() - with_k3.size();
    counts["histogram_underflow"] = hist.underflow;
    counts["histogram_overflow"] = hist.overflow;
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// entry points

ValidationReport validate(const PipelineConfig& c) {
  ValidationReport r;
  auto attempt = [&](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const InputError& e) {
      r.errors.push_back(e.what());
    }
  };
  attempt([&] { check_parameters(c); });

  fs::path probe = c.out_dir.empty() ? fs::path(".") : c.out_dir;
  while (!probe.empty() && !fs::exists(probe) && probe.has_parent_path() && probe != probe.parent_path()) {
    probe = probe.parent_path();
  }
  if (fs::exists(probe) && !fs::is_directory(probe)) {
    r.errors.push_back("output directory not creatable: " + probe.string() + " is not a directory");
  }

  attempt([&] {
    require_file(c.detections, "detections");
    r.counts["detections"] = ingest::parse_detections(c.detections).size();
  });
  attempt([&] {
    require_file(c.footprints, "footprints");
    r.counts["footprints"] = ingest::parse_footprints(c.footprints).size();
  });
  attempt([&] {
    CensusSchema schema = schema_for(c);
    r.counts["schema_variables"] = schema.size();
    require_file(c.census, "census");
    r.counts["households"] = ingest::parse_census(c.census, schema).size();
  });
  if (c.annotations) {
    attempt([&] {
      require_file(*c.annotations, "annotations");
      r.counts["annotations"] = ingest::parse_annotations(*c.annotations).size();
    });
  }
  if (c.predictions) {
    attempt([&] {
      require_file(*c.predictions, "predictions");
      r.counts["predictions"] = ingest::parse_detections(*c.predictions).size();
    });
  }
  r.ok = r.errors.empty();
  return r;
}

Counts run_geocode(const PipelineConfig& c) {
  stage("config", [&] { check_parameters(c); });
  OutputSet out = stage("output", [&] { return OutputSet(c.out_dir, kGeocodeArtifacts); });
  Counts counts;
  do_geocode(c, out, counts);
  out.commit();
  return counts;
}

Counts run_k3(const PipelineConfig& c) {
  stage("config", [&] { check_parameters(c); });
  OutputSet out = stage("output", [&] { return OutputSet(c.out_dir, kK3Artifacts); });
  Counts counts;
  do_k3(c, out, counts);
  out.commit();
  return counts;
}

Counts run_eval(const PipelineConfig& c) {
  stage("config", [&] { check_parameters(c); });
  OutputSet out = stage("output", [&] { return OutputSet(c.out_dir, kEvalArtifacts); });
  Counts counts;
  do_eval(c, {}, out, counts);
  out.commit();
  return counts;
}

Counts run_correlate(const PipelineConfig& c) {
  stage("config", [&] { check_parameters(c); });
  std::vector<geocode::BuildingAttributeRecord> buildings;
  std::vector<k3::BlockK3> blocks;
  std::vector<FootprintFeature> footprints;
  stage("ingest", [&] {
    const fs::path bpath = c.buildings.value_or(c.out_dir / "buildings.jsonl");
    const fs::path kpath = c.blocks_k3.value_or(c.out_dir / "blocks_k3.csv");
    require_file(bpath, "buildings");
    require_file(kpath, "blocks_k3");
    require_file(c.footprints, "footprints");
    std::ifstream bin(bpath, std::ios::binary);
    buildings = report::read_buildings_jsonl(bin, bpath.string());
    std::ifstream kin(kpath, std::ios::binary);
    blocks = report::read_blocks_k3_csv(kin, kpath.string());
    footprints = ingest::parse_footprints(c.footprints);
  });
  OutputSet out = stage("output", [&] { return OutputSet(c.out_dir, kCorrelateArtifacts); });
  Counts counts;
  do_correlate(c, buildings, blocks, footprints, out, counts);
  out.commit();
  return counts;
}

Counts run_all(const PipelineConfig& c) {
  stage("config", [&] { check_parameters(c); });
  std::vector<std::string> names;
  for (const auto* list : {&kGeocodeArtifacts, &kK3Artifacts, &kEvalArtifacts, &kCorrelateArtifacts}) {
    names.insert(names.end(), list->begin(), list->end());
  }
  names.push_back(kManifest);
  OutputSet out = stage("output", [&] { return OutputSet(c.out_dir, names); });

  Counts counts;
  GeocodeOutputs g = do_geocode(c, out, counts);
  const auto blocks = do_k3(c, out, counts);
  if (c.annotations) do_eval(c, g.detections, out, counts);
  do_correlate(c, g.result.buildings, blocks, g.footprints, out, counts);

  stage("manifest", [&] {
    ordered_json m;
    m["tool"] = "vulnmap";
    m["version"] = kVersion;
    ordered_json inputs = ordered_json::object();
    auto digest = [&](const char* key, const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      inputs[key] = sha256_hex(buf.str());
    };
    digest("detections", c.detections);
    digest("footprints", c.footprints);
    digest("census", c.census);
    if (c.schema) digest("schema", *c.schema);
    if (c.annotations) digest("annotations", *c.annotations);
    if (c.annotations && c.predictions) digest("predictions", *c.predictions);
    m["config_sha256"] = sha256_hex(canonical_config(c) + inputs.dump());
    m["input_sha256"] = inputs;
    m["seed"] = c.seed;
    m["versions"] = {{"vulnmap", kVersion},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"boost", BOOST_LIB_VERSION}};
    m["eval_stage"] = c.annotations.has_value();
    ordered_json cj = ordered_json::object();
    for (const auto& [k, v] : counts) cj[k] = v;
    m["counts"] = cj;
    ordered_json artifacts = ordered_json::array();
    for (const auto& name : names) {
      if (name == kManifest) continue;
      if (!c.annotations && name == "eval_report.json") continue;
      artifacts.push_back(name);
    }
    m["artifacts"] = artifacts;
    out.write(kManifest, [&](std::ostream& os) { os << m.dump(2) << '\n'; });
  });
  out.commit();
  return counts;
}

}  // namespace vulnmap::pipeline
