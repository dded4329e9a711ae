#include "rex/scene.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "rex/error.hpp"

namespace rex {

using nlohmann::json;

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0 && ih > 0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

std::string_view to_string(AttributeFamily family) {
  switch (family) {
    case AttributeFamily::Color: return "color";
    case AttributeFamily::Material: return "material";
    case AttributeFamily::Sport: return "sport";
    case AttributeFamily::Shape: return "shape";
    case AttributeFamily::Pose: return "pose";
    case AttributeFamily::Size: return "size";
    case AttributeFamily::Activity: return "activity";
    case AttributeFamily::Relation: return "relation";
    case AttributeFamily::Other: return "other";
  }
  return "other";
}

AttributeFamily parse_family(std::string_view name) {
  for (auto f : kEvaluatedFamilies) {
    if (to_string(f) == name) return f;
  }
  return AttributeFamily::Other;
}

std::optional<std::string> SceneObject::value_of(AttributeFamily family) const {
  for (const auto& a : attributes) {
    if (a.family == family) return a.value;
  }
  return std::nullopt;
}

bool SceneObject::has_value(std::string_view value) const {
  return std::any_of(attributes.begin(), attributes.end(),
                     [&](const Attribute& a) { return a.value == value; });
}

const SceneObject* SceneGraph::find(std::string_view id) const {
  auto it = objects.find(std::string(id));
  return it == objects.end() ? nullptr : &it->second;
}

const SceneObject& SceneGraph::at(std::string_view id) const {
  if (const auto* obj = find(id)) return *obj;
  throw Error(ErrorKind::ParseError,
              fmt::format("unknown object id '{}' in scene '{}'", id, image_id));
}

std::optional<Alignment> best_region(const BBox& box, const RegionSet& regions) {
  std::optional<Alignment> best;
  for (std::size_t i = 0; i < regions.regions.size(); ++i) {
    const double score = iou(box, regions.regions[i]);
    if (!best || score > best->iou) best = Alignment{i, score};
  }
  return best;
}

Alignment align_object(const SceneObject& obj, const RegionSet& regions,
                       double min_iou) {
  auto best = best_region(obj.box, regions);
  if (!best) {
    throw Error(ErrorKind::AlignmentBelowThreshold,
                fmt::format("no regions to align object '{}'", obj.id));
  }
  if (best->iou < min_iou) {
    throw Error(ErrorKind::AlignmentBelowThreshold,
                fmt::format("object '{}' best IoU {:.4f} with region {} is below {}",
                            obj.id, best->iou, best->region, min_iou));
  }
  return *best;
}

namespace {

[[noreturn]] void parse_fail(const std::string& what) {
  throw Error(ErrorKind::ParseError, what);
}

const json& require(const json& doc, const char* key, const std::string& ctx) {
  auto it = doc.find(key);
  if (it == doc.end()) parse_fail(fmt::format("{}: missing field '{}'", ctx, key));
  return *it;
}

double number(const json& v, const std::string& ctx) {
  if (!v.is_number()) parse_fail(ctx + ": expected a number");
  return v.get<double>();
}

BBox box_from_array(const json& v, const std::string& ctx) {
  if (!v.is_array() || v.size() != 4) {
    parse_fail(ctx + ": box must be [x1, y1, x2, y2]");
  }
  BBox b{number(v[0], ctx), number(v[1], ctx), number(v[2], ctx),
         number(v[3], ctx)};
  if (!b.valid()) parse_fail(ctx + ": box corners are inverted");
  return b;
}

// Corner-form "box", or GQA-style x/y/w/h.
BBox object_box(const json& obj, const std::string& ctx) {
  if (obj.contains("box")) return box_from_array(obj["box"], ctx);
  if (obj.contains("x") && obj.contains("w")) {
    const double x = number(require(obj, "x", ctx), ctx);
    const double y = number(require(obj, "y", ctx), ctx);
    const double w = number(require(obj, "w", ctx), ctx);
    const double h = number(require(obj, "h", ctx), ctx);
    if (w < 0 || h < 0) parse_fail(ctx + ": negative box extent");
    return BBox{x, y, x + w, y + h};
  }
  parse_fail(ctx + ": missing box");
}

std::string string_field(const json& doc, const char* key, const std::string& ctx) {
  const auto& v = require(doc, key, ctx);
  if (!v.is_string()) parse_fail(fmt::format("{}: field '{}' must be a string", ctx, key));
  return v.get<std::string>();
}

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

SceneGraph scene_from_json(const json& doc, std::vector<std::string>* warnings) {
  if (!doc.is_object()) parse_fail("scene document must be an object");
  SceneGraph g;
  g.image_id = string_field(doc, "image_id", "scene");
  const std::string ctx = "scene '" + g.image_id + "'";
  g.width = number(require(doc, "width", ctx), ctx);
  g.height = number(require(doc, "height", ctx), ctx);

  const auto& objects = require(doc, "objects", ctx);
  if (!objects.is_object()) parse_fail(ctx + ": objects must be a map");
  for (const auto& [id, o] : objects.items()) {
    const std::string octx = ctx + " object '" + id + "'";
    if (!o.is_object()) parse_fail(octx + ": must be an object");
    SceneObject obj;
    obj.id = id;
    obj.name = string_field(o, "name", octx);
    obj.box = object_box(o, octx);

    const BBox clamped{std::clamp(obj.box.x1, 0.0, g.width),
                       std::clamp(obj.box.y1, 0.0, g.height),
                       std::clamp(obj.box.x2, 0.0, g.width),
                       std::clamp(obj.box.y2, 0.0, g.height)};
    if (!(clamped == obj.box)) {
      if (warnings) {
        warnings->push_back(fmt::format(
            "{}: box [{}, {}, {}, {}] clamped to image bounds", octx,
            obj.box.x1, obj.box.y1, obj.box.x2, obj.box.y2));
      }
      obj.box = clamped;
    }

    if (auto it = o.find("attributes"); it != o.end()) {
      if (!it->is_array()) parse_fail(octx + ": attributes must be a list");
      std::set<AttributeFamily> seen;
      for (const auto& a : *it) {
        Attribute attr{parse_family(string_field(a, "family", octx)),
                       string_field(a, "value", octx)};
        if (attr.family != AttributeFamily::Other && !seen.insert(attr.family).second) {
          parse_fail(fmt::format("{}: duplicate value for family '{}'", octx,
                                 to_string(attr.family)));
        }
        if (std::find(obj.attributes.begin(), obj.attributes.end(), attr) !=
            obj.attributes.end()) {
          parse_fail(fmt::format("{}: duplicate attribute '{}'", octx, attr.value));
        }
        obj.attributes.push_back(std::move(attr));
      }
      std::sort(obj.attributes.begin(), obj.attributes.end());
    }

    if (auto it = o.find("relations"); it != o.end()) {
      if (!it->is_array()) parse_fail(octx + ": relations must be a list");
      for (const auto& r : *it) {
        obj.relations.push_back(Relation{string_field(r, "predicate", octx),
                                         string_field(r, "target", octx)});
      }
    }
    g.objects.emplace(id, std::move(obj));
  }

  for (const auto& [id, obj] : g.objects) {
    for (const auto& r : obj.relations) {
      if (!g.objects.count(r.target)) {
        parse_fail(fmt::format("{} object '{}': relation target '{}' does not exist",
                               ctx, id, r.target));
      }
    }
  }
  return g;
}

json scene_to_json(const SceneGraph& g) {
  json objects = json::object();
  for (const auto& [id, obj] : g.objects) {
    json attrs = json::array();
    for (const auto& a : obj.attributes) {
      attrs.push_back({{"family", to_string(a.family)}, {"value", a.value}});
    }
    json rels = json::array();
    for (const auto& r : obj.relations) {
      rels.push_back({{"predicate", r.predicate}, {"target", r.target}});
    }
    objects[id] = {{"name", obj.name},
                   {"box", box_to_json(obj.box)},
                   {"attributes", std::move(attrs)},
                   {"relations", std::move(rels)}};
  }
  return {{"image_id", g.image_id},
          {"width", g.width},
          {"height", g.height},
          {"objects", std::move(objects)}};
}

RegionSet regions_from_json(const json& doc) {
  if (!doc.is_object()) parse_fail("region document must be an object");
  RegionSet rs;
  rs.image_id = string_field(doc, "image_id", "regions");
  const std::string ctx = "regions '" + rs.image_id + "'";
  const auto& list = require(doc, "regions", ctx);
  if (!list.is_array()) parse_fail(ctx + ": regions must be a list");
  for (std::size_t i = 0; i < list.size(); ++i) {
    rs.regions.push_back(box_from_array(list[i], fmt::format("{} region {}", ctx, i)));
  }
  return rs;
}

json regions_to_json(const RegionSet& rs) {
  json list = json::array();
  for (const auto& b : rs.regions) list.push_back(box_to_json(b));
  return {{"image_id", rs.image_id}, {"regions", std::move(list)}};
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
}

}  // namespace

SceneGraph load_scene(const std::string& path, std::vector<std::string>* warnings) {
  return scene_from_json(read_json_file(path), warnings);
}

RegionSet load_regions(const std::string& path) {
  return regions_from_json(read_json_file(path));
}

}  // namespace rex
