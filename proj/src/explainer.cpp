#include "rex/explainer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rex/error.hpp"
#include "rex/metrics.hpp"

namespace rex {

using nlohmann::json;

std::string_view to_string(MissPolicy policy) {
  return policy == MissPolicy::DropToken ? "drop-token" : "fail";
}

MissPolicy parse_miss_policy(std::string_view name) {
  if (name == "drop-token") return MissPolicy::DropToken;
  if (name == "fail" || name == "fail-question") return MissPolicy::Fail;
  throw Error(ErrorKind::ConfigError, fmt::format("unknown grounding-miss policy '{}'", name));
}

std::string Token::surface() const {
  if (kind == Kind::Word) return text;
  return fmt::format("#{}", region);
}

namespace {

std::string join_surface(const std::vector<Token>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t.surface();
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(std::move(w));
  return out;
}

void append_words(std::vector<Token>& out, std::string_view text) {
  for (auto& w : split_words(text)) out.push_back(Token::word(std::move(w)));
}

std::vector<Token> words(std::string_view text) {
  std::vector<Token> out;
  append_words(out, text);
  return out;
}

std::string join_and(const std::vector<std::string>& items) {
  return fmt::format("{}", fmt::join(items, " and "));
}

// "#12" -> 12
std::optional<std::size_t> region_index(std::string_view w) {
  if (w.size() < 2 || w[0] != '#') return std::nullopt;
  std::size_t v = 0;
  for (char c : w.substr(1)) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

}  // namespace

std::string PartialExplanation::text() const { return join_surface(tokens); }

std::string GroundedExplanation::text() const {
  return fmt::format("{}", fmt::join(tokens, " "));
}

std::vector<std::size_t> GroundedExplanation::regions() const {
  std::vector<std::size_t> out;
  for (const auto& [pos, region] : grounding) out.push_back(region);
  return out;
}

json GroundedExplanation::to_json() const {
  json grounding_json = json::object();
  for (const auto& [pos, region] : grounding) grounding_json[std::to_string(pos)] = region;
  json attrs = json::array();
  for (const auto& a : attributes) {
    attrs.push_back({{"family", to_string(a.family)}, {"value", a.value}});
  }
  return {{"question_id", question_id},
          {"image_id", image_id},
          {"question", question},
          {"reasoning_type", reasoning_type},
          {"answer", answer},
          {"explanation", text()},
          {"grounding", std::move(grounding_json)},
          {"grounded_objects", grounded_objects},
          {"operations", operations},
          {"attributes", std::move(attrs)},
          {"categories", categories}};
}

GroundedExplanation GroundedExplanation::from_json(const json& doc) {
  try {
    GroundedExplanation e;
    e.question_id = doc.at("question_id").get<std::string>();
    e.image_id = doc.value("image_id", "");
    e.question = doc.value("question", "");
    e.reasoning_type = doc.value("reasoning_type", "");
    e.answer = doc.value("answer", "");
    e.tokens = split_words(doc.value("explanation", ""));
    if (auto it = doc.find("grounding"); it != doc.end()) {
      for (const auto& [pos, region] : it->items()) {
        e.grounding[std::stoul(pos)] = region.get<std::size_t>();
      }
    } else {
      for (std::size_t i = 0; i < e.tokens.size(); ++i) {
        if (auto r = region_index(e.tokens[i])) e.grounding[i] = *r;
      }
    }
    if (auto it = doc.find("grounded_objects"); it != doc.end()) {
      e.grounded_objects = it->get<std::map<std::string, std::size_t>>();
    }
    if (auto it = doc.find("operations"); it != doc.end()) {
      e.operations = it->get<std::vector<std::string>>();
    }
    if (auto it = doc.find("attributes"); it != doc.end()) {
      for (const auto& a : *it) {
        e.attributes.push_back(Attribute{parse_family(a.at("family").get<std::string>()),
                                         a.at("value").get<std::string>()});
      }
    }
    if (auto it = doc.find("categories"); it != doc.end()) {
      e.categories = it->get<std::map<std::string, std::string>>();
    }
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::ParseError, std::string("explanation record: ") + ex.what());
  } catch (const std::logic_error& ex) {
    throw Error(ErrorKind::ParseError, std::string("explanation record: ") + ex.what());
  }
}

GroundedExplanation parse_explanation(std::string_view text, std::size_t region_count) {
  GroundedExplanation e;
  e.tokens = split_words(text);
  for (std::size_t i = 0; i < e.tokens.size(); ++i) {
    auto r = region_index(e.tokens[i]);
    if (!r) continue;
    if (*r >= region_count) {
      throw Error(ErrorKind::RegionIndexOutOfRange,
                  fmt::format("token {} names region {} but only {} regions exist", i,
                              *r, region_count));
    }
    e.grounding[i] = *r;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

constexpr const char* kAnswerKey = "Answer";

constexpr const char* kDefaultTemplates = R"json({
  "Select":    {"default": "{OBJ}"},
  "Exist":     {"default": "there {CHECK_EXISTENCE} {DEP}"},
  "Filter":    {"default": "{OBJ}"},
  "Query":     {"default": "{DEP} {BE} {QUERY_ATTR}"},
  "Verify":    {"default": "{DEP} {BE} {VERIFY_ATTR}"},
  "Common":    {"default": "both {DEP1} and {DEP2} are {FIND_COMMON}",
                "none": "{DEP1} and {DEP2} have nothing in common"},
  "Same":      {"shared": "{DEP1} and {DEP2} are both {ATTR}",
                "distinct": "{DEP1} {BE1} {ATTR1} and {DEP2} {BE2} {ATTR2}",
                "none": "{DEP1} and {DEP2} have nothing in common"},
  "Different": {"shared": "{DEP1} and {DEP2} are both {ATTR}",
                "distinct": "{DEP1} {BE1} {ATTR1} and {DEP2} {BE2} {ATTR2}",
                "none": "{DEP1} and {DEP2} have nothing in common"},
  "Compare":   {"default": "{DEP1} {BE1} {COMPARE_ATTR} than {DEP2}"},
  "Relate":    {"subject": "{OBJ} {RELATION} {DEP}",
                "object": "{OBJ} that {DEP} {BE} {RELATION}"},
  "And":       {"default": "{DEP1} {LOGICAL} {DEP2}"},
  "Or":        {"default": "{DEP1} {LOGICAL} {DEP2}"},
  "Answer":    {"default": "so the answer is {ANSWER}"}
})json";

struct OpSchema {
  std::vector<std::string> variants;
  std::set<std::string> slots;
};

const OpSchema& schema(AtomicOp op) {
  static const std::map<AtomicOp, OpSchema> table = {
      {AtomicOp::Select, {{"default"}, {"OBJ"}}},
      {AtomicOp::Exist, {{"default"}, {"CHECK_EXISTENCE", "DEP"}}},
      {AtomicOp::Filter, {{"default"}, {"OBJ", "ATTR", "DEP"}}},
      {AtomicOp::Query, {{"default"}, {"DEP", "BE", "QUERY_ATTR", "ATTR"}}},
      {AtomicOp::Verify, {{"default"}, {"DEP", "BE", "VERIFY_ATTR", "ATTR"}}},
      {AtomicOp::Common, {{"default", "none"}, {"DEP1", "DEP2", "FIND_COMMON"}}},
      {AtomicOp::Same,
       {{"shared", "distinct", "none"},
        {"DEP1", "DEP2", "ATTR", "ATTR1", "ATTR2", "BE1", "BE2"}}},
      {AtomicOp::Different,
       {{"shared", "distinct", "none"},
        {"DEP1", "DEP2", "ATTR", "ATTR1", "ATTR2", "BE1", "BE2"}}},
      {AtomicOp::Compare,
       {{"default"}, {"DEP1", "DEP2", "BE1", "BE2", "COMPARE_ATTR", "ATTR"}}},
      {AtomicOp::Relate, {{"subject", "object"}, {"OBJ", "DEP", "BE", "RELATION"}}},
      {AtomicOp::And, {{"default"}, {"DEP1", "DEP2", "LOGICAL"}}},
      {AtomicOp::Or, {{"default"}, {"DEP1", "DEP2", "LOGICAL"}}},
  };
  return table.at(op);
}

TemplateTable::Pattern compile_pattern(std::string_view text, const std::string& where,
                                       const std::set<std::string>& allowed) {
  TemplateTable::Pattern out;
  for (auto& w : split_words(text)) {
    const bool open = w.find('{') != std::string::npos;
    const bool close = w.find('}') != std::string::npos;
    if (!open && !close) {
      out.push_back({false, std::move(w)});
      continue;
    }
    if (w.size() < 3 || w.front() != '{' || w.back() != '}' ||
        w.find_first_of("{}", 1) != w.size() - 1) {
      throw Error(ErrorKind::TemplateSlotError,
                  fmt::format("{}: malformed placeholder '{}'", where, w));
    }
    std::string name = w.substr(1, w.size() - 2);
    if (!allowed.count(name)) {
      throw Error(ErrorKind::TemplateSlotError,
                  fmt::format("{}: slot {} cannot be filled by this operation", where, name));
    }
    out.push_back({true, std::move(name)});
  }
  return out;
}

std::string pattern_text(const TemplateTable::Pattern& p) {
  std::string out;
  for (const auto& piece : p) {
    if (!out.empty()) out += ' ';
    out += piece.slot ? "{" + piece.text + "}" : piece.text;
  }
  return out;
}

}  // namespace

TemplateTable TemplateTable::defaults() {
  static const TemplateTable table = from_json(json::parse(kDefaultTemplates));
  return table;
}

TemplateTable TemplateTable::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorKind::ConfigError, "template table must be a map");
  TemplateTable t;
  for (const auto& [key, variants] : doc.items()) {
    if (!variants.is_object()) {
      throw Error(ErrorKind::ConfigError, "templates for '" + key + "' must be a map");
    }
    if (key == kAnswerKey) {
      auto it = variants.find("default");
      if (it == variants.end() || !it->is_string()) {
        throw Error(ErrorKind::ConfigError, "Answer template needs a 'default' pattern");
      }
      t.answer_ = compile_pattern(it->get<std::string>(), "Answer", {"ANSWER"});
      continue;
    }
    AtomicOp op;
    try {
      op = parse_atomic_op(key);
    } catch (const Error&) {
      throw Error(ErrorKind::ConfigError, "template for unknown operation '" + key + "'");
    }
    const auto& sc = schema(op);
    for (const auto& [variant, text] : variants.items()) {
      if (std::find(sc.variants.begin(), sc.variants.end(), variant) == sc.variants.end()) {
        throw Error(ErrorKind::ConfigError,
                    fmt::format("{} has no template variant '{}'", key, variant));
      }
      if (!text.is_string()) {
        throw Error(ErrorKind::ConfigError, fmt::format("{}.{} must be a string", key, variant));
      }
      t.patterns_[op][variant] =
          compile_pattern(text.get<std::string>(), key + "." + variant, sc.slots);
    }
  }
  for (int i = 0; i < kAtomicOpCount; ++i) {
    const auto op = static_cast<AtomicOp>(i);
    for (const auto& v : schema(op).variants) {
      if (!t.patterns_[op].count(v)) {
        throw Error(ErrorKind::ConfigError,
                    fmt::format("template table lacks {}.{}", to_string(op), v));
      }
    }
  }
  if (t.answer_.empty()) throw Error(ErrorKind::ConfigError, "template table lacks Answer");
  return t;
}

TemplateTable TemplateTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

json TemplateTable::to_json() const {
  json out = json::object();
  for (const auto& [op, variants] : patterns_) {
    for (const auto& [name, p] : variants) out[std::string(to_string(op))][name] = pattern_text(p);
  }
  out[kAnswerKey]["default"] = pattern_text(answer_);
  return out;
}

const TemplateTable::Pattern& TemplateTable::pattern(AtomicOp op,
                                                     std::string_view variant) const {
  auto it = patterns_.find(op);
  if (it != patterns_.end()) {
    auto v = it->second.find(variant);
    if (v != it->second.end()) return v->second;
  }
  throw Error(ErrorKind::TemplateSlotError,
              fmt::format("no {} template variant '{}'", to_string(op), variant));
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

using SlotMap = std::map<std::string, std::vector<Token>>;

std::vector<Token> expand(const TemplateTable::Pattern& pattern, const SlotMap& slots,
                          const std::string& node_id) {
  std::vector<Token> out;
  for (const auto& piece : pattern) {
    if (!piece.slot) {
      out.push_back(Token::word(piece.text));
      continue;
    }
    auto it = slots.find(piece.text);
    if (it == slots.end()) {
      throw Error(ErrorKind::TemplateSlotError,
                  fmt::format("slot {} has no value here", piece.text), node_id);
    }
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

const char* copula(std::size_t count) { return count > 1 ? "are" : "is"; }

// Distinct values of `family` over a selection, in first-seen order.
std::vector<std::string> family_values(const SceneGraph& g, const NodeResult& r,
                                       AttributeFamily family) {
  std::vector<std::string> out;
  for (const auto& id : r.objects) {
    auto v = g.at(id).value_of(family);
    if (v && std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(*v);
  }
  return out;
}

std::vector<std::string> values_of(const std::vector<Attribute>& attrs) {
  std::vector<std::string> out;
  for (const auto& a : attrs) {
    if (std::find(out.begin(), out.end(), a.value) == out.end()) out.push_back(a.value);
  }
  return out;
}

std::set<Attribute> attribute_union(const SceneGraph& g, const NodeResult& r) {
  std::set<Attribute> out;
  for (const auto& id : r.objects) {
    const auto& attrs = g.at(id).attributes;
    out.insert(attrs.begin(), attrs.end());
  }
  return out;
}

// Values shared between the two groups, as the Same/Different text reports them.
std::vector<std::string> shared_values(const SceneGraph& g, const NodeResult& a,
                                       const NodeResult& b,
                                       const std::optional<std::string>& family,
                                       Quantifier quantifier) {
  if (family) {
    const auto fam = parse_family(*family);
    auto va = family_values(g, a, fam);
    auto vb = family_values(g, b, fam);
    std::vector<std::string> out;
    for (const auto& v : va) {
      if (std::find(vb.begin(), vb.end(), v) != vb.end()) out.push_back(v);
    }
    return out;
  }
  if (quantifier == Quantifier::Universal) return values_of(exec_common(g, a, b).values);
  auto ua = attribute_union(g, a);
  auto ub = attribute_union(g, b);
  std::vector<Attribute> both;
  std::set_intersection(ua.begin(), ua.end(), ub.begin(), ub.end(), std::back_inserter(both));
  return values_of(both);
}

AttributeFamily family_of_value(const SceneGraph& g, std::string_view value) {
  for (const auto& [id, obj] : g.objects) {
    for (const auto& a : obj.attributes) {
      if (a.value == value) return a.family;
    }
  }
  return AttributeFamily::Other;
}

}  // namespace

Explainer::Explainer(TemplateTable templates, ExplainerConfig config)
    : templates_(std::move(templates)), config_(std::move(config)) {}

std::vector<Token> Explainer::mention(const SceneObject& obj, std::string_view qualifier,
                                      const RegionSet& regions) const {
  std::vector<Token> out{Token::word("the")};
  append_words(out, qualifier);
  append_words(out, obj.name);
  auto best = best_region(obj.box, regions);
  if (best && best->iou >= config_.min_iou) {
    out.push_back(Token::mention(obj.id, best->region));
  } else if (config_.on_miss == MissPolicy::Fail) {
    align_object(obj, regions, config_.min_iou);  // throws with the details
  }
  return out;
}

std::vector<Token> Explainer::objects_phrase(const SceneGraph& g,
                                             const std::vector<std::string>& ids,
                                             std::string_view qualifier,
                                             std::string_view empty_label,
                                             const RegionSet& regions) const {
  std::vector<Token> out;
  if (ids.empty()) {
    out.push_back(Token::word("no"));
    append_words(out, qualifier);
    append_words(out, empty_label);
    return out;
  }
  const std::size_t shown = std::min(ids.size(), config_.max_mentions);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i > 0) out.push_back(Token::word("and"));
    auto m = mention(g.at(ids[i]), qualifier, regions);
    out.insert(out.end(), m.begin(), m.end());
  }
  if (shown < ids.size()) append_words(out, "and others");
  return out;
}

PartialExplanation Explainer::render_node(
    const OpNode& node, const NodeResult& result,
    const std::vector<const PartialExplanation*>& dep_partials,
    const std::vector<const NodeResult*>& dep_results, const SceneGraph& g,
    const RegionSet& regions) const {
  SlotMap slots;
  std::string variant = "default";

  if (dep_partials.size() != node.deps.size() || dep_results.size() != node.deps.size()) {
    throw Error(ErrorKind::TemplateSlotError, "dependency partials are missing", node.node_id);
  }
  if (dep_partials.size() == 1) {
    slots["DEP"] = dep_partials[0]->tokens;
  } else if (dep_partials.size() == 2) {
    slots["DEP1"] = dep_partials[0]->tokens;
    slots["DEP2"] = dep_partials[1]->tokens;
  }
  auto dep_count = [&](std::size_t i) { return dep_results[i]->objects.size(); };
  const std::string attribute = node.attribute.value_or("");
  if (node.attribute) slots["ATTR"] = words(attribute);

  switch (node.op) {
    case AtomicOp::Select:
      slots["OBJ"] = objects_phrase(g, result.objects, "", node.category.value_or("object"),
                                    regions);
      break;
    case AtomicOp::Exist:
      slots["CHECK_EXISTENCE"] = words(copula(dep_count(0)));
      break;
    case AtomicOp::Filter:
      slots["OBJ"] = objects_phrase(g, result.objects, attribute,
                                    node.category.value_or("object"), regions);
      break;
    case AtomicOp::Query:
      slots["BE"] = words(copula(dep_count(0)));
      slots["QUERY_ATTR"] = words(result.value);
      break;
    case AtomicOp::Verify:
      slots["BE"] = words(copula(dep_count(0)));
      slots["VERIFY_ATTR"] = words(result.boolean ? attribute : "not " + attribute);
      break;
    case AtomicOp::Common:
      if (result.values.empty()) variant = "none";
      else slots["FIND_COMMON"] = words(join_and(values_of(result.values)));
      break;
    case AtomicOp::Same:
    case AtomicOp::Different: {
      const bool same = node.op == AtomicOp::Same ? result.boolean : !result.boolean;
      if (same) {
        variant = "shared";
        slots["ATTR"] = words(join_and(shared_values(g, *dep_results[0], *dep_results[1],
                                                     node.attribute,
                                                     config_.exec.quantifier)));
      } else if (node.attribute) {
        variant = "distinct";
        const auto fam = parse_family(attribute);
        slots["ATTR1"] = words(join_and(family_values(g, *dep_results[0], fam)));
        slots["ATTR2"] = words(join_and(family_values(g, *dep_results[1], fam)));
      } else {
        variant = "none";
      }
      slots["BE1"] = words(copula(dep_count(0)));
      slots["BE2"] = words(copula(dep_count(1)));
      break;
    }
    case AtomicOp::Compare: {
      const auto& comparator = *node.comparator;
      if (node.choose) {
        const auto c = compare_objects(g, *dep_results[0], *dep_results[1], attribute,
                                       comparator, config_.exec.lexicon);
        if (c.winner_first == false) std::swap(slots["DEP1"], slots["DEP2"]);
        slots["COMPARE_ATTR"] = words(comparator);
      } else {
        slots["COMPARE_ATTR"] = words(result.boolean ? comparator : "not " + comparator);
      }
      slots["BE1"] = words("is");
      slots["BE2"] = words("is");
      break;
    }
    case AtomicOp::Relate: {
      const auto& rel = *node.relation;
      variant = std::string(to_string(rel.direction));
      slots["RELATION"] = words(rel.predicate);
      slots["BE"] = words(copula(dep_count(0)));
      slots["OBJ"] = objects_phrase(g, result.objects, "", node.category.value_or("object"),
                                    regions);
      break;
    }
    case AtomicOp::And:
      slots["LOGICAL"] = words("and");
      break;
    case AtomicOp::Or:
      slots["LOGICAL"] = words("or");
      break;
  }

  PartialExplanation out;
  out.node_id = node.node_id;
  out.tokens = expand(templates_.pattern(node.op, variant), slots, node.node_id);
  return out;
}

namespace {

// Family-tagged attribute values a step reports on.
void collect_attributes(const OpNode& node, const NodeResult& result,
                        const std::vector<const NodeResult*>& deps, const SceneGraph& g,
                        std::set<Attribute>& out) {
  auto add_value = [&](const std::string& v) { out.insert({family_of_value(g, v), v}); };
  auto add_family = [&](const NodeResult& sel, const std::string& family) {
    const auto fam = parse_family(family);
    for (const auto& v : family_values(g, sel, fam)) out.insert({fam, v});
  };
  switch (node.op) {
    case AtomicOp::Filter:
    case AtomicOp::Verify:
      add_value(*node.attribute);
      break;
    case AtomicOp::Query:
      out.insert({parse_family(*node.attribute), result.value});
      break;
    case AtomicOp::Common:
      out.insert(result.values.begin(), result.values.end());
      break;
    case AtomicOp::Same:
    case AtomicOp::Different:
    case AtomicOp::Compare:
      if (node.attribute) {
        add_family(*deps[0], *node.attribute);
        add_family(*deps[1], *node.attribute);
      }
      break;
    case AtomicOp::Relate:
      out.insert({AttributeFamily::Relation, node.relation->predicate});
      break;
    default:
      break;
  }
}

}  // namespace

GroundedExplanation Explainer::compile(const ExecutionTrace& trace,
                                       const ReasoningProgram& program, const SceneGraph& g,
                                       const RegionSet& regions) const {
  std::map<std::string, PartialExplanation> partials;
  std::set<AtomicOp> ops;
  std::set<Attribute> attributes;

  for (const auto& result : trace.results) {
    const auto& node = program.node(result.node_id);
    std::vector<const PartialExplanation*> dep_partials;
    std::vector<const NodeResult*> dep_results;
    for (const auto& d : node.deps) {
      dep_partials.push_back(&partials.at(d));
      dep_results.push_back(&trace.result(d));
    }
    try {
      partials[node.node_id] =
          render_node(node, result, dep_partials, dep_results, g, regions);
      collect_attributes(node, result, dep_results, g, attributes);
    } catch (const Error& e) {
      throw e.at_node(node.node_id);
    }
    ops.insert(node.op);
  }

  std::vector<Token> tokens = partials.at(program.root).tokens;
  auto clause = expand(templates_.answer_pattern(), {{"ANSWER", words(trace.answer)}},
                       program.root);
  tokens.insert(tokens.end(), clause.begin(), clause.end());

  GroundedExplanation e;
  e.question_id = program.question_id;
  e.image_id = program.image_id;
  e.question = program.question;
  e.reasoning_type = program.reasoning_type;
  e.answer = trace.answer;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    e.tokens.push_back(t.surface());
    if (!t.grounded()) continue;
    e.grounding[i] = t.region;
    if (t.kind == Token::Kind::Mention) {
      e.grounded_objects[t.object_id] = t.region;
      e.categories[t.object_id] = g.at(t.object_id).name;
    }
  }
  for (auto op : ops) e.operations.emplace_back(to_string(op));
  // only values the sentence actually says
  std::vector<std::string> words;
  for (const auto& t : e.tokens) {
    auto low = metrics::tokenize(t);
    words.insert(words.end(), low.begin(), low.end());
  }
  for (const auto& a : attributes) {
    const auto needle = metrics::tokenize(a.value);
    if (needle.empty()) continue;
    if (std::search(words.begin(), words.end(), needle.begin(), needle.end()) != words.end()) {
      e.attributes.push_back(a);
    }
  }
  return e;
}

GroundedExplanation explain(const ReasoningProgram& program, const SceneGraph& g,
                            const RegionSet& regions, const Explainer& explainer) {
  const auto trace = execute(program, g, explainer.config().exec);
  return explainer.compile(trace, program, g, regions);
}

}  // namespace rex
