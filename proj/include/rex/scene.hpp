#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rex {

// Axis-aligned box in corner form, pixel units.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 <= x2 && y1 <= y2; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Intersection over union; 0 when the union is empty.
double iou(const BBox& a, const BBox& b);

// The eight evaluated attribute families plus a catch-all.
enum class AttributeFamily {
  Color,
  Material,
  Sport,
  Shape,
  Pose,
  Size,
  Activity,
  Relation,
  Other,
};

inline constexpr std::array<AttributeFamily, 8> kEvaluatedFamilies = {
    AttributeFamily::Color, AttributeFamily::Material,
    AttributeFamily::Sport, AttributeFamily::Shape,
    AttributeFamily::Pose,  AttributeFamily::Size,
    AttributeFamily::Activity, AttributeFamily::Relation};

std::string_view to_string(AttributeFamily family);
// Unknown names map to Other.
AttributeFamily parse_family(std::string_view name);

struct Attribute {
  AttributeFamily family = AttributeFamily::Other;
  std::string value;

  friend auto operator<=>(const Attribute&, const Attribute&) = default;
};

struct Relation {
  std::string predicate;
  std::string target;

  friend bool operator==(const Relation&, const Relation&) = default;
};

struct SceneObject {
  std::string id;
  std::string name;
  BBox box;
  // Sorted by (family, value). At most one value per family except Other.
  std::vector<Attribute> attributes;
  std::vector<Relation> relations;

  std::optional<std::string> value_of(AttributeFamily family) const;
  bool has_value(std::string_view value) const;
};

struct SceneGraph {
  std::string image_id;
  double width = 0;
  double height = 0;
  std::map<std::string, SceneObject> objects;

  const SceneObject* find(std::string_view id) const;
  const SceneObject& at(std::string_view id) const;
};

// Model-input regions; token `#i` always names regions[i].
struct RegionSet {
  std::string image_id;
  std::vector<BBox> regions;

  std::size_t size() const { return regions.size(); }
};

struct Alignment {
  std::size_t region = 0;
  double iou = 0;
};

// Argmax-IoU region for `box`; ties go to the lowest index. Never throws for
// a nonempty region set.
std::optional<Alignment> best_region(const BBox& box, const RegionSet& regions);

// best_region, rejecting matches whose IoU is below `min_iou`
// (AlignmentBelowThreshold).
Alignment align_object(const SceneObject& obj, const RegionSet& regions,
                       double min_iou = 0.5);

// Boxes outside the image are clamped; each clamp appends a message to
// `warnings` when given.
SceneGraph scene_from_json(const nlohmann::json& doc,
                           std::vector<std::string>* warnings = nullptr);
nlohmann::json scene_to_json(const SceneGraph& scene);

RegionSet regions_from_json(const nlohmann::json& doc);
nlohmann::json regions_to_json(const RegionSet& regions);

SceneGraph load_scene(const std::string& path,
                      std::vector<std::string>* warnings = nullptr);
RegionSet load_regions(const std::string& path);

}  // namespace rex
