#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

namespace vulnmap {

// The four building tags attached to every annotation and detection.
enum class Attribute : std::uint8_t { construction_type, material, use, condition };

inline constexpr std::size_t kAttributeCount = 4;
inline constexpr std::array<Attribute, kAttributeCount> kAllAttributes = {
    Attribute::construction_type, Attribute::material, Attribute::use,
    Attribute::condition};

template <class T>
using PerAttribute = std::array<T, kAttributeCount>;

constexpr std::size_t index_of(Attribute a) { return static_cast<std::size_t>(a); }

enum class ConstructionType : std::uint8_t { confined, unconfined };

enum class Material : std::uint8_t {
  plaster,
  mix_other_unclear,
  brick_or_concrete_block,
  wood_crude_plank,
  wood_polished,
  corrugated_metal,
  adobe,
  stone_with_mud_ashlar_with_lime_or_cement,
  container_trailer,
  plant_material,
};

enum class Use : std::uint8_t { residential, non_residential, mixed };

// Declaration order doubles as the consensus tie-break order.
enum class Condition : std::uint8_t { poor, fair, good };

// Index of a class within its attribute's declaration order.
using ClassId = std::uint8_t;

std::string_view attribute_name(Attribute a);
std::optional<Attribute> parse_attribute(std::string_view name);

// Class names of `a` in declaration order. The enums are closed: this list is
// the complete set of values an attribute may take.
std::span<const std::string_view> class_names(Attribute a);
std::size_t class_count(Attribute a);
std::string_view class_name(Attribute a, ClassId c);
std::optional<ClassId> parse_class(Attribute a, std::string_view name);

constexpr ClassId class_id(ConstructionType v) { return static_cast<ClassId>(v); }
constexpr ClassId class_id(Material v) { return static_cast<ClassId>(v); }
constexpr ClassId class_id(Use v) { return static_cast<ClassId>(v); }
constexpr ClassId class_id(Condition v) { return static_cast<ClassId>(v); }

}  // namespace vulnmap
