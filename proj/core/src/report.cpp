#include "vulnmap/report.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "detail/text.hpp"
#include "json.hpp"
#include "vulnmap/error.hpp"

namespace vulnmap::report {
namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

ordered_json optional_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::string csv_number(const std::optional<double>& v) {
  return v ? detail::format_double(*v) : std::string();
}

}  // namespace

void write_buildings_jsonl(std::ostream& out,
                           std::span<const geocode::BuildingAttributeRecord> buildings) {
  for (const auto& b : buildings) {
    ordered_json obj;
    obj["footprint_id"] = b.footprint_id;
    obj["block_id"] = b.block_id;
    obj["n_detections"] = b.n_detections;
    for (Attribute a : kAllAttributes) {
      obj[std::string(attribute_name(a))] = std::string(class_name(a, b.consensus[index_of(a)]));
    }
    ordered_json weights = ordered_json::object();
    for (Attribute a : kAllAttributes) {
      ordered_json w = ordered_json::object();
      const auto& v = b.weights[index_of(a)];
      for (std::size_t c = 0; c < v.size(); ++c) {
        w[std::string(class_name(a, static_cast<ClassId>(c)))] = v[c];
      }
      weights[std::string(attribute_name(a))] = w;
    }
    obj["weights"] = weights;
    out << obj.dump() << '\n';
  }
}

std::vector<geocode::BuildingAttributeRecord> read_buildings_jsonl(std::istream& in,
                                                                   const std::string& source) {
  std::vector<geocode::BuildingAttributeRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      json obj = json::parse(line);
      geocode::BuildingAttributeRecord b;
      b.footprint_id = obj.at("footprint_id").get<std::string>();
      b.block_id = obj.at("block_id").get<std::string>();
      b.n_detections = obj.at("n_detections").get<std::size_t>();
      if (b.n_detections == 0) throw InputError("n_detections must be at least 1");
      for (Attribute a : kAllAttributes) {
        const std::string key(attribute_name(a));
        auto id = parse_class(a, obj.at(key).get<std::string>());
        if (!id) throw InputError("unknown class for " + key);
        b.consensus[index_of(a)] = *id;
        auto& w = b.weights[index_of(a)];
        w.assign(class_count(a), 0.0);
        const json& wobj = obj.at("weights").at(key);
        for (std::size_t c = 0; c < w.size(); ++c) {
          w[c] = wobj.at(std::string(class_name(a, static_cast<ClassId>(c)))).get<double>();
        }
      }
      out.push_back(std::move(b));
    } catch (const json::exception& e) {
      throw ParseError(source, line_no, "", e.what());
    } catch (const InputError& e) {
      throw ParseError(source, line_no, "", e.what());
    }
  }
  return out;
}

void write_rejects_jsonl(std::ostream& out, std::span<const geocode::Reject> rejects,
                         std::span<const DetectionRecord> detections) {
  for (const auto& r : rejects) {
    const auto& d = detections[r.detection];
    ordered_json obj;
    obj["detection_index"] = r.detection;
    obj["image_id"] = d.image_id;
    obj["lon"] = d.capture_point.lon;
    obj["lat"] = d.capture_point.lat;
    obj["heading_deg"] = d.camera_heading;
    obj["side"] = d.side == Side::left ? "left" : "right";
    obj["reason"] = r.reason;
    out << obj.dump() << '\n';
  }
}

void write_blocks_k3_csv(std::ostream& out, std::span<const k3::BlockK3> blocks) {
  out << detail::csv_row({"block_id", "k3", "n_households"});
  for (const auto& b : blocks) {
    out << detail::csv_row(
        {b.block_id, detail::format_double(b.k3), std::to_string(b.n_households)});
  }
}

std::vector<k3::BlockK3> read_blocks_k3_csv(std::istream& in, const std::string& source) {
  detail::CsvReader reader(in);
  std::vector<std::string> row;
  if (!reader.next(row) || row != std::vector<std::string>{"block_id", "k3", "n_households"}) {
    throw ParseError(source, 1, "", "expected header block_id,k3,n_households");
  }
  std::vector<k3::BlockK3> out;
  while (reader.next(row)) {
    if (row.size() != 3) throw ParseError(source, reader.line(), "", "expected 3 cells");
    auto k3 = detail::parse_double(row[1]);
    if (!k3 || *k3 < 1.0 || *k3 > 3.0) {
      throw ParseError(source, reader.line(), "k3", "expected a value in [1, 3]");
    }
    auto n = detail::parse_double(row[2]);
    if (!n || *n < 1.0 || std::floor(*n) != *n) {
      throw ParseError(source, reader.line(), "n_households", "expected a positive integer");
    }
    out.push_back({row[0], *k3, static_cast<std::size_t>(*n)});
  }
  return out;
}

void write_k3_diagnostics_json(std::ostream& out, const k3::K3Diagnostics& d, std::uint64_t seed,
                               std::size_t households) {
  ordered_json obj;
  obj["seed"] = seed;
  obj["n_households"] = households;
  obj["objective"] = d.objective;
  obj["swaps"] = d.swaps;
  ordered_json clusters = ordered_json::array();
  for (std::size_t l = 0; l < k3::kClusters; ++l) {
    ordered_json c;
    c["label"] = l + 1;
    c["medoid_household_id"] = d.medoid_household_by_label[l];
    c["size"] = d.size_by_label[l];
    c["mean_welfare"] = d.welfare_by_label[l];
    clusters.push_back(c);
  }
  obj["clusters"] = clusters;
  ordered_json anova = ordered_json::array();
  for (const auto& va : d.anova) {
    ordered_json v;
    v["variable"] = va.variable;
    if (va.anova) {
      v["f"] = optional_number(va.anova->f);
      v["infinite"] = va.anova->infinite;
      v["df_between"] = va.anova->df_between;
      v["df_within"] = va.anova->df_within;
    } else {
      v["f"] = nullptr;
      v["infinite"] = false;
      v["df_between"] = nullptr;
      v["df_within"] = nullptr;
    }
    anova.push_back(v);
  }
  obj["anova"] = anova;
  if (d.min_f && std::isinf(*d.min_f)) {
    obj["min_f"] = "inf";
  } else {
    obj["min_f"] = optional_number(d.min_f);
  }
  obj["anova_threshold"] = d.anova_threshold;
  obj["fraction_above_threshold"] = d.fraction_above_threshold;
  obj["dropped_columns"] = d.dropped_columns;
  out << obj.dump(2) << '\n';
}

void write_eval_report_json(std::ostream& out, const eval::EvalReport& r) {
  ordered_json obj;
  obj["iou_threshold"] = r.iou_threshold;
  obj["mask_iou"] = r.mask_iou;
  obj["detection"] = {{"predictions", r.predictions},
                      {"truths", r.truths},
                      {"matched", r.matched},
                      {"precision", r.precision},
                      {"recall", r.recall}};
  ordered_json attrs = ordered_json::object();
  for (Attribute a : kAllAttributes) {
    ordered_json entry;
    ordered_json classes = ordered_json::array();
    for (auto name : class_names(a)) classes.push_back(std::string(name));
    entry["classes"] = classes;
    const auto& m = r.attributes[index_of(a)];
    if (m) {
      ordered_json confusion = ordered_json::array();
      for (std::size_t t = 0; t < m->confusion.classes(); ++t) {
        ordered_json row = ordered_json::array();
        for (std::size_t p = 0; p < m->confusion.classes(); ++p) row.push_back(m->confusion.at(t, p));
        confusion.push_back(row);
      }
      entry["confusion"] = confusion;
      entry["accuracy"] = m->accuracy;
      entry["f1_macro"] = m->macro_f1;
    } else {
      entry["confusion"] = nullptr;
      entry["accuracy"] = nullptr;
      entry["f1_macro"] = nullptr;
    }
    attrs[std::string(attribute_name(a))] = entry;
  }
  obj["attributes"] = attrs;
  out << obj.dump(2) << '\n';
}

void write_correlation_csv(std::ostream& out, const correlate::CorrelationMatrix& m) {
  std::vector<std::string> row{""};
  row.insert(row.end(), m.columns.begin(), m.columns.end());
  out << detail::csv_row(row);
  for (std::size_t i = 0; i < m.size(); ++i) {
    row.assign({m.columns[i]});
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(csv_number(m.at(i, j)));
    out << detail::csv_row(row);
  }
}

void write_class_k3_csv(std::ostream& out, std::span<const correlate::TrendSummary> trends) {
  out << detail::csv_row({"attribute", "class", "rank", "mean_k3", "n", "slope", "intercept"});
  for (const auto& t : trends) {
    std::optional<double> slope, intercept;
    if (t.fit) {
      slope = t.fit->slope;
      intercept = t.fit->intercept;
    }
    for (const auto& c : t.classes) {
      out << detail::csv_row({std::string(attribute_name(t.attribute)),
                              std::string(class_name(t.attribute, c.class_id)),
                              std::to_string(c.rank), csv_number(c.mean_k3), std::to_string(c.count),
                              csv_number(slope), csv_number(intercept)});
    }
  }
}

void write_histogram_csv(std::ostream& out, const correlate::Histogram& h) {
  out << detail::csv_row({"bin_lo", "bin_hi", "count"});
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out << detail::csv_row({detail::format_double(h.bin_lo(b)), detail::format_double(h.bin_hi(b)),
                            std::to_string(h.counts[b])});
  }
}

void write_blocks_joined_geojson(std::ostream& out, std::span<const FootprintFeature> footprints,
                                 std::span<const k3::BlockK3> blocks,
                                 std::span<const correlate::BlockProfile> profiles) {
  std::map<std::string, const k3::BlockK3*> k3_by_block;
  for (const auto& b : blocks) k3_by_block[b.block_id] = &b;
  std::map<std::string, const correlate::BlockProfile*> profile_by_block;
  for (const auto& p : profiles) profile_by_block[p.block_id] = &p;

  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = ordered_json::array();
  for (const auto& fp : footprints) {
    auto k = k3_by_block.find(fp.block_id);
    if (k == k3_by_block.end()) continue;
    ordered_json props;
    props["footprint_id"] = fp.footprint_id;
    props["block_id"] = fp.block_id;
    props["k3"] = k->second->k3;
    props["n_households"] = k->second->n_households;
    auto p = profile_by_block.find(fp.block_id);
    props["n_buildings"] = p == profile_by_block.end() ? 0 : p->second->n_buildings;
    for (Attribute a : kAllAttributes) {
      for (std::size_t c = 0; c < class_count(a); ++c) {
        std::string key = std::string(attribute_name(a)) + ":" +
                          std::string(class_name(a, static_cast<ClassId>(c)));
        if (p == profile_by_block.end()) {
          props[key] = nullptr;
        } else {
          props[key] = p->second->proportions[index_of(a)][c];
        }
      }
    }
    ordered_json ring = ordered_json::array();
    for (const auto& pt : fp.ring) ring.push_back(ordered_json::array({pt.lon, pt.lat}));
    ordered_json feat;
    feat["type"] = "Feature";
    feat["properties"] = props;
    feat["geometry"] = {{"type", "Polygon"}, {"coordinates", ordered_json::array({ring})}};
    doc["features"].push_back(feat);
  }
  out << doc.dump() << '\n';
}

}  // namespace vulnmap::report
