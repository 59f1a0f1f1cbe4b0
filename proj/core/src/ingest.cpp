#include "vulnmap/ingest.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "detail/text.hpp"
#include "json.hpp"
#include "vulnmap/error.hpp"

namespace vulnmap::ingest {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

// Cursor over one JSON document that reports errors against a fixed
// (source, line) location and a dotted field path.
class Fields {
 public:
  Fields(const std::string& source, std::size_t line) : source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& message) const {
    throw ParseError(source_, line_, field, message);
  }

  const json& member(const json& obj, const std::string& key,
                     const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), "missing field");
    return *it;
  }

  double number(const json& obj, const std::string& key, const std::string& path) const {
    const json& v = member(obj, key, path);
    if (!v.is_number()) fail(join(path, key), "expected a number");
    double d = v.get<double>();
    if (!std::isfinite(d)) fail(join(path, key), "not finite");
    return d;
  }

  std::string string(const json& obj, const std::string& key,
                     const std::string& path) const {
    const json& v = member(obj, key, path);
    if (!v.is_string()) fail(join(path, key), "expected a string");
    return v.get<std::string>();
  }

  // Identifiers may be written as JSON strings or integers.
  std::string identifier(const json& obj, const std::string& key,
                         const std::string& path) const {
    const json& v = member(obj, key, path);
    if (v.is_string()) {
      auto s = v.get<std::string>();
      if (s.empty()) fail(join(path, key), "empty identifier");
      return s;
    }
    if (v.is_number_integer()) return v.dump();
    fail(join(path, key), "expected a string or integer identifier");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  const std::string& source_;
  std::size_t line_;
};

PixelRect read_rect(const Fields& f, const json& obj, const std::string& key) {
  const json& v = f.member(obj, key, "");
  if (!v.is_array() || v.size() != 4) f.fail(key, "expected [x0, y0, x1, y1]");
  std::array<double, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) f.fail(key, "expected [x0, y0, x1, y1]");
    c[i] = v[i].get<double>();
    if (!std::isfinite(c[i])) f.fail(key, "not finite");
  }
  PixelRect r{c[0], c[1], c[2], c[3]};
  if (!r.valid()) f.fail(key, "out of range: requires x0 < x1 and y0 < y1");
  return r;
}

std::optional<PixelPolygon> read_mask(const Fields& f, const json& obj) {
  auto it = obj.find("mask");
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_array() || it->size() < 3) f.fail("mask", "expected at least 3 [x, y] points");
  PixelPolygon poly;
  poly.reserve(it->size());
  for (const json& p : *it) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      f.fail("mask", "expected [x, y] points");
    }
    PixelPoint pt{p[0].get<double>(), p[1].get<double>()};
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y)) f.fail("mask", "not finite");
    poly.push_back(pt);
  }
  return poly;
}

json rect_json(const PixelRect& r) { return json::array({r.x_min, r.y_min, r.x_max, r.y_max}); }

json mask_json(const PixelPolygon& m) {
  json arr = json::array();
  for (const auto& p : m) arr.push_back(json::array({p.x, p.y}));
  return arr;
}

template <class Record, class ParseLine>
std::vector<Record> parse_jsonl(std::istream& in, const std::string& source,
                                ParseLine&& parse_line) {
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, "", std::string("malformed JSON: ") + e.what());
    }
    Fields f(source, line_no);
    if (!obj.is_object()) f.fail("", "expected a JSON object");
    out.push_back(parse_line(f, obj));
  }
  return out;
}

DetectionRecord parse_detection(const Fields& f, const json& obj) {
  DetectionRecord d;
  d.image_id = f.identifier(obj, "image_id", "");
  d.capture_point.lon = f.number(obj, "lon", "");
  d.capture_point.lat = f.number(obj, "lat", "");
  if (d.capture_point.lon < -180.0 || d.capture_point.lon > 180.0) {
    f.fail("lon", "out of range [-180, 180]");
  }
  if (d.capture_point.lat < -90.0 || d.capture_point.lat > 90.0) {
    f.fail("lat", "out of range [-90, 90]");
  }
  d.camera_heading = f.number(obj, "heading_deg", "");
  if (!(d.camera_heading >= 0.0 && d.camera_heading < 360.0)) {
    f.fail("camera_heading", "heading_deg out of range [0, 360)");
  }
  std::string side = f.string(obj, "side", "");
  if (side == "left") {
    d.side = Side::left;
  } else if (side == "right") {
    d.side = Side::right;
  } else {
    f.fail("side", "expected \"left\" or \"right\"");
  }
  d.bbox = read_rect(f, obj, "bbox");
  d.mask = read_mask(f, obj);

  const json& attrs = f.member(obj, "attributes", "");
  for (Attribute a : kAllAttributes) {
    std::string path = "attributes." + std::string(attribute_name(a));
    const json& entry = f.member(attrs, std::string(attribute_name(a)), "attributes");
    std::string cls = f.string(entry, "class", path);
    auto id = parse_class(a, cls);
    if (!id) f.fail(path + ".class", "unknown class '" + cls + "'");
    double conf = f.number(entry, "confidence", path);
    if (conf < 0.0 || conf > 1.0) f.fail(path + ".confidence", "out of range [0, 1]");
    d.attributes[index_of(a)] = {*id, conf};
  }
  return d;
}

AnnotatedInstance parse_annotation(const Fields& f, const json& obj) {
  AnnotatedInstance a;
  a.image_id = f.identifier(obj, "image_id", "");
  a.bbox = read_rect(f, obj, "bbox");
  a.mask = read_mask(f, obj);
  const json& attrs = f.member(obj, "attributes", "");
  for (Attribute attr : kAllAttributes) {
    std::string key(attribute_name(attr));
    const json& v = f.member(attrs, key, "attributes");
    // Accept both "fair" and {"class": "fair"}.
    std::string cls = v.is_object() ? f.string(v, "class", "attributes." + key)
                      : v.is_string()
                          ? v.get<std::string>()
                          : (f.fail("attributes." + key, "expected a class name"), "");
    auto id = parse_class(attr, cls);
    if (!id) f.fail("attributes." + key, "unknown class '" + cls + "'");
    a.labels[index_of(attr)] = *id;
  }
  return a;
}

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

int orientation(const GeoPoint& a, const GeoPoint& b, const GeoPoint& c) {
  double v = cross(b.lon - a.lon, b.lat - a.lat, c.lon - a.lon, c.lat - a.lat);
  return (v > 0) - (v < 0);
}

bool on_segment(const GeoPoint& a, const GeoPoint& b, const GeoPoint& p) {
  return std::min(a.lon, b.lon) <= p.lon && p.lon <= std::max(a.lon, b.lon) &&
         std::min(a.lat, b.lat) <= p.lat && p.lat <= std::max(a.lat, b.lat);
}

bool segments_touch(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1,
                    const GeoPoint& q2) {
  int o1 = orientation(p1, p2, q1);
  int o2 = orientation(p1, p2, q2);
  int o3 = orientation(q1, q2, p1);
  int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

const char* kind_name(VariableKind k) {
  return k == VariableKind::binary ? "binary" : "percentage";
}

const char* polarity_name(Polarity p) {
  return p == Polarity::higher_is_better ? "higher_is_better" : "higher_is_worse";
}

}  // namespace

// ---------------------------------------------------------------------------
// detections

std::vector<DetectionRecord> parse_detections(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_detections(in, path.string());
}

std::vector<DetectionRecord> parse_detections(std::istream& in, const std::string& source) {
  return parse_jsonl<DetectionRecord>(in, source, parse_detection);
}

void write_detections(std::ostream& out, std::span<const DetectionRecord> records) {
  for (const auto& d : records) {
    ordered_json obj;
    obj["image_id"] = d.image_id;
    obj["lon"] = d.capture_point.lon;
    obj["lat"] = d.capture_point.lat;
    obj["heading_deg"] = d.camera_heading;
    obj["side"] = d.side == Side::left ? "left" : "right";
    obj["bbox"] = rect_json(d.bbox);
    if (d.mask) obj["mask"] = mask_json(*d.mask);
    ordered_json attrs = ordered_json::object();
    for (Attribute a : kAllAttributes) {
      const auto& p = d.attributes[index_of(a)];
      ordered_json entry;
      entry["class"] = std::string(class_name(a, p.class_id));
      entry["confidence"] = p.confidence;
      attrs[std::string(attribute_name(a))] = entry;
    }
    obj["attributes"] = attrs;
    out << obj.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// annotations

std::vector<AnnotatedInstance> parse_annotations(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_annotations(in, path.string());
}

std::vector<AnnotatedInstance> parse_annotations(std::istream& in,
                                                 const std::string& source) {
  return parse_jsonl<AnnotatedInstance>(in, source, parse_annotation);
}

void write_annotations(std::ostream& out, std::span<const AnnotatedInstance> records) {
  for (const auto& a : records) {
    ordered_json obj;
    obj["image_id"] = a.image_id;
    obj["bbox"] = rect_json(a.bbox);
    if (a.mask) obj["mask"] = mask_json(*a.mask);
    ordered_json attrs = ordered_json::object();
    for (Attribute attr : kAllAttributes) {
      attrs[std::string(attribute_name(attr))] =
          std::string(class_name(attr, a.labels[index_of(attr)]));
    }
    obj["attributes"] = attrs;
    out << obj.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// footprints

void validate_ring(std::span<const GeoPoint> ring) {
  if (ring.empty() || ring.front() != ring.back()) throw InputError("ring not closed");
  if (ring.size() < 4) throw InputError("ring has fewer than 4 vertices");
  for (const auto& p : ring) {
    if (!std::isfinite(p.lon) || !std::isfinite(p.lat)) {
      throw InputError("ring has a non-finite coordinate");
    }
  }

  double twice_area = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    twice_area += cross(ring[i].lon, ring[i].lat, ring[i + 1].lon, ring[i + 1].lat);
  }
  if (std::abs(twice_area) < 1e-14) throw InputError("ring has zero area");

  const std::size_t edges = ring.size() - 1;
  for (std::size_t i = 0; i < edges; ++i) {
    for (std::size_t j = i + 1; j < edges; ++j) {
      bool adjacent = j == i + 1 || (i == 0 && j == edges - 1);
      if (adjacent) continue;
      if (segments_touch(ring[i], ring[i + 1], ring[j], ring[j + 1])) {
        throw InputError("ring is self-intersecting (edges " + std::to_string(i) +
                         " and " + std::to_string(j) + ")");
      }
    }
  }
}

std::vector<FootprintFeature> parse_footprints(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_footprints(in, path.string());
}

std::vector<FootprintFeature> parse_footprints(std::istream& in, const std::string& source) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 0, "", std::string("malformed JSON: ") + e.what());
  }
  Fields f(source, 0);
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    f.fail("type", "expected a GeoJSON FeatureCollection");
  }
  const json& features = f.member(doc, "features", "");
  if (!features.is_array()) f.fail("features", "expected an array");

  std::vector<FootprintFeature> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::string path = "features[" + std::to_string(i) + "]";
    const json& feat = features[i];
    const json& geom = f.member(feat, "geometry", path);
    std::string gtype = geom.is_object() ? geom.value("type", "") : "";
    if (gtype != "Polygon") {
      f.fail(path + ".geometry.type", "non-polygon geometry '" + gtype + "'");
    }
    const json& coords = f.member(geom, "coordinates", path + ".geometry");
    if (!coords.is_array() || coords.empty() || !coords[0].is_array()) {
      f.fail(path + ".geometry.coordinates", "expected an array of rings");
    }

    FootprintFeature fp;
    const json& props = f.member(feat, "properties", path);
    fp.footprint_id = f.identifier(props, "footprint_id", path + ".properties");
    fp.block_id = f.identifier(props, "block_id", path + ".properties");
    // Interior rings (courtyards) do not affect ray hits on the outer wall.
    for (const json& p : coords[0]) {
      if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
        f.fail(path + ".geometry.coordinates", "expected [lon, lat] positions");
      }
      fp.ring.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    try {
      validate_ring(fp.ring);
    } catch (const InputError& e) {
      f.fail(path + ".geometry", e.what());
    }
    if (!seen.insert(fp.footprint_id).second) {
      f.fail(path + ".properties.footprint_id",
             "duplicate footprint_id '" + fp.footprint_id + "'");
    }
    out.push_back(std::move(fp));
  }
  return out;
}

void write_footprints(std::ostream& out, std::span<const FootprintFeature> features) {
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["features"] = ordered_json::array();
  for (const auto& fp : features) {
    ordered_json feat;
    feat["type"] = "Feature";
    feat["properties"] = {{"footprint_id", fp.footprint_id}, {"block_id", fp.block_id}};
    ordered_json ring = ordered_json::array();
    for (const auto& p : fp.ring) ring.push_back(ordered_json::array({p.lon, p.lat}));
    feat["geometry"] = {{"type", "Polygon"},
                        {"coordinates", ordered_json::array({ring})}};
    doc["features"].push_back(feat);
  }
  out << doc.dump() << '\n';
}

// ---------------------------------------------------------------------------
// schema

CensusSchema default_census_schema() {
  using enum VariableKind;
  using enum Polarity;
  return CensusSchema{{
      {"more_than_one_household_per_unit", binary, higher_is_worse},
      {"walls_industrial_materials", binary, higher_is_better},
      {"floor_industrial_materials", binary, higher_is_better},
      {"access_electricity", binary, higher_is_better},
      {"access_water", binary, higher_is_better},
      {"access_sewerage", binary, higher_is_better},
      {"access_natural_gas", binary, higher_is_better},
      {"access_waste_collection", binary, higher_is_better},
      {"waste_collection_over_3_per_week", binary, higher_is_better},
      {"access_internet", binary, higher_is_better},
      {"wc_connected_to_sewage", binary, higher_is_better},
      {"has_bedroom", binary, higher_is_better},
      {"independent_kitchen", binary, higher_is_better},
      {"kitchen_connected_to_water", binary, higher_is_better},
      {"under_3_persons_per_bedroom", binary, higher_is_better},
      {"pct_members_men", percentage, higher_is_better},
      {"pct_members_older_than_64", percentage, higher_is_better},
      {"pct_households_without_indigenous_members", percentage, higher_is_better},
      {"pct_members_living_in_birth_municipality", percentage, higher_is_better},
      {"pct_members_not_sick", percentage, higher_is_better},
      {"pct_members_without_disability", percentage, higher_is_better},
      {"pct_members_not_illiterate", percentage, higher_is_better},
      {"pct_members_over_24_college_educated", percentage, higher_is_better},
      {"pct_members_15_to_64_working", percentage, higher_is_better},
      {"pct_members_married_or_partnered", percentage, higher_is_better},
      {"pct_women_with_children", percentage, higher_is_better},
  }};
}

void validate_schema(const CensusSchema& schema) {
  if (schema.variables.empty()) throw InputError("schema declares no variables");
  std::set<std::string> names;
  for (const auto& v : schema.variables) {
    if (v.name.empty()) throw InputError("schema variable with empty name");
    if (v.name == "household_id" || v.name == "block_id") {
      throw InputError("schema variable name '" + v.name + "' is reserved");
    }
    if (!names.insert(v.name).second) {
      throw InputError("duplicate schema variable '" + v.name + "'");
    }
  }
}

CensusSchema load_schema(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_schema(in, path.string());
}

CensusSchema parse_schema(std::istream& in, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(in);
  } catch (const YAML::Exception& e) {
    throw ParseError(source, e.mark.line + 1, "", std::string("malformed YAML: ") + e.msg);
  }
  YAML::Node vars = root.IsMap() ? root["variables"] : YAML::Node();
  if (!vars || !vars.IsSequence()) throw ParseError(source, 0, "variables", "expected a list");

  CensusSchema schema;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const YAML::Node& node = vars[i];
    std::size_t line = node.Mark().line + 1;
    std::string path = "variables[" + std::to_string(i) + "]";
    auto text = [&](const char* key) -> std::string {
      if (!node.IsMap() || !node[key] || !node[key].IsScalar()) {
        throw ParseError(source, line, path + "." + key, "missing field");
      }
      return node[key].as<std::string>();
    };
    CensusVariable v;
    v.name = text("name");
    std::string kind = text("kind");
    if (kind == "binary") {
      v.kind = VariableKind::binary;
    } else if (kind == "percentage") {
      v.kind = VariableKind::percentage;
    } else {
      throw ParseError(source, line, path + ".kind", "expected binary or percentage");
    }
    std::string pol = text("polarity");
    if (pol == "higher_is_better") {
      v.polarity = Polarity::higher_is_better;
    } else if (pol == "higher_is_worse") {
      v.polarity = Polarity::higher_is_worse;
    } else {
      throw ParseError(source, line, path + ".polarity",
                       "expected higher_is_better or higher_is_worse");
    }
    schema.variables.push_back(std::move(v));
  }
  try {
    validate_schema(schema);
  } catch (const InputError& e) {
    throw ParseError(source, 0, "variables", e.what());
  }
  return schema;
}

void write_schema(std::ostream& out, const CensusSchema& schema) {
  out << "variables:\n";
  for (const auto& v : schema.variables) {
    out << "  - name: \"" << v.name << "\"\n"
        << "    kind: " << kind_name(v.kind) << '\n'
        << "    polarity: " << polarity_name(v.polarity) << '\n';
  }
}

// ---------------------------------------------------------------------------
// census

std::vector<HouseholdRecord> parse_census(const std::filesystem::path& path,
                                          const CensusSchema& schema) {
  auto in = open_input(path);
  return parse_census(in, path.string(), schema);
}

std::vector<HouseholdRecord> parse_census(std::istream& in, const std::string& source,
                                          const CensusSchema& schema) {
  validate_schema(schema);
  detail::CsvReader reader(in);
  std::vector<std::string> row;
  auto next = [&]() {
    try {
      return reader.next(row);
    } catch (const std::runtime_error& e) {
      throw ParseError(source, reader.line(), "", e.what());
    }
  };
  if (!next()) throw ParseError(source, 1, "", "missing header row");

  std::map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!header.emplace(detail::trim(row[i]), i).second) {
      throw ParseError(source, reader.line(), row[i], "duplicate column");
    }
  }
  auto column = [&](const std::string& name) {
    auto it = header.find(name);
    if (it == header.end()) throw ParseError(source, 0, name, "missing column");
    return it->second;
  };
  const std::size_t id_col = column("household_id");
  const std::size_t block_col = column("block_id");
  std::vector<std::size_t> var_cols;
  for (const auto& v : schema.variables) var_cols.push_back(column(v.name));
  const std::size_t width = row.size();

  std::vector<HouseholdRecord> out;
  std::set<std::string> seen;
  while (next()) {
    const std::size_t line = reader.line();
    if (row.size() != width) {
      throw ParseError(source, line, "",
                       "expected " + std::to_string(width) + " cells, found " +
                           std::to_string(row.size()));
    }
    HouseholdRecord rec;
    rec.household_id = detail::trim(row[id_col]);
    rec.block_id = detail::trim(row[block_col]);
    if (rec.household_id.empty()) throw ParseError(source, line, "household_id", "empty");
    if (rec.block_id.empty()) throw ParseError(source, line, "block_id", "empty");
    if (!seen.insert(rec.household_id).second) {
      throw ParseError(source, line, "household_id",
                       "duplicate household_id '" + rec.household_id + "'");
    }

    rec.values.reserve(schema.size());
    bool any_present = false;
    for (std::size_t k = 0; k < schema.size(); ++k) {
      const auto& var = schema.variables[k];
      std::string cell = detail::trim(row[var_cols[k]]);
      if (cell.empty()) {
        rec.values.emplace_back(std::nullopt);
        continue;
      }
      any_present = true;
      if (var.kind == VariableKind::binary) {
        std::string lower = detail::to_lower(cell);
        if (lower == "yes" || lower == "1") {
          rec.values.emplace_back(1.0);
        } else if (lower == "no" || lower == "0") {
          rec.values.emplace_back(0.0);
        } else {
          throw ParseError(source, line, var.name,
                           "unparseable binary cell '" + cell + "'");
        }
      } else {
        auto value = detail::parse_double(cell);
        if (!value) {
          throw ParseError(source, line, var.name,
                           "unparseable percentage cell '" + cell + "'");
        }
        if (*value < 0.0 || *value > 100.0) {
          throw ParseError(source, line, var.name,
                           "percentage " + cell + " out of range [0, 100]");
        }
        rec.values.emplace_back(*value);
      }
    }
    if (!any_present) {
      throw ParseError(source, line, "", "household '" + rec.household_id +
                                             "' has no observed variables");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_census(std::ostream& out, std::span<const HouseholdRecord> records,
                  const CensusSchema& schema) {
  std::vector<std::string> fields{"household_id", "block_id"};
  for (const auto& v : schema.variables) fields.push_back(v.name);
  out << detail::csv_row(fields);
  for (const auto& rec : records) {
    fields.assign({rec.household_id, rec.block_id});
    for (const auto& value : rec.values) {
      fields.push_back(value ? detail::format_double(*value) : std::string());
    }
    out << detail::csv_row(fields);
  }
}

}  // namespace vulnmap::ingest
