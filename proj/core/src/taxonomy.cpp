#include "vulnmap/taxonomy.hpp"

#include <algorithm>
#include <stdexcept>

namespace vulnmap {
namespace {

constexpr std::array<std::string_view, kAttributeCount> kAttributeNames = {
    "construction_type", "material", "use", "condition"};

constexpr std::array<std::string_view, 2> kConstruction = {"confined", "unconfined"};
constexpr std::array<std::string_view, 10> kMaterial = {
    "plaster",
    "mix_other_unclear",
    "brick_or_concrete_block",
    "wood_crude_plank",
    "wood_polished",
    "corrugated_metal",
    "adobe",
    "stone_with_mud_ashlar_with_lime_or_cement",
    "container_trailer",
    "plant_material",
};
constexpr std::array<std::string_view, 3> kUse = {"residential", "non_residential",
                                                  "mixed"};
constexpr std::array<std::string_view, 3> kCondition = {"poor", "fair", "good"};

}  // namespace

std::string_view attribute_name(Attribute a) { return kAttributeNames.at(index_of(a)); }

std::optional<Attribute> parse_attribute(std::string_view name) {
  for (Attribute a : kAllAttributes) {
    if (attribute_name(a) == name) return a;
  }
  return std::nullopt;
}

std::span<const std::string_view> class_names(Attribute a) {
  switch (a) {
    case Attribute::construction_type: return kConstruction;
    case Attribute::material: return kMaterial;
    case Attribute::use: return kUse;
    case Attribute::condition: return kCondition;
  }
  throw std::logic_error("unknown attribute");
}

std::size_t class_count(Attribute a) { return class_names(a).size(); }

std::string_view class_name(Attribute a, ClassId c) {
  auto names = class_names(a);
  if (c >= names.size()) throw std::out_of_range("class id out of range");
  return names[c];
}

std::optional<ClassId> parse_class(Attribute a, std::string_view name) {
  auto names = class_names(a);
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<ClassId>(it - names.begin());
}

}  // namespace vulnmap
