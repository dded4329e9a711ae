#include "rex/interpreter.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "rex/error.hpp"

namespace rex {

using nlohmann::json;

std::string_view to_string(Quantifier q) {
  return q == Quantifier::Universal ? "universal" : "existential";
}

Quantifier parse_quantifier(std::string_view name) {
  if (name == "universal") return Quantifier::Universal;
  if (name == "existential") return Quantifier::Existential;
  throw Error(ErrorKind::ConfigError, fmt::format("unknown quantifier '{}'", name));
}

// ---------------------------------------------------------------------------
// Lexicon

std::string Lexicon::normalize(std::string_view category) const {
  std::string key(category);
  for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto it = synonyms.find(key);
  return it == synonyms.end() ? key : it->second;
}

std::optional<std::size_t> Lexicon::rank(std::string_view family,
                                         std::string_view value) const {
  auto it = orders.find(std::string(family));
  if (it == orders.end()) return std::nullopt;
  auto pos = std::find(it->second.begin(), it->second.end(), value);
  if (pos == it->second.end()) return std::nullopt;
  return static_cast<std::size_t>(pos - it->second.begin());
}

Lexicon Lexicon::defaults() {
  Lexicon lx;
  lx.synonyms = {{"couch", "sofa"},         {"tv", "television"},
                 {"bike", "bicycle"},       {"motorbike", "motorcycle"},
                 {"cellphone", "phone"},    {"cell phone", "phone"},
                 {"aeroplane", "airplane"}, {"doughnut", "donut"},
                 {"automobile", "car"},     {"kitty", "cat"}};
  lx.orders = {{"size", {"tiny", "small", "medium", "large", "huge"}}};
  lx.comparators = {{"larger", Polarity::Greater},
                    {"bigger", Polarity::Greater},
                    {"smaller", Polarity::Less},
                    {"littler", Polarity::Less}};
  return lx;
}

Lexicon Lexicon::from_json(const json& doc) {
  try {
    Lexicon lx;
    const json syn = doc.value("synonyms", json::object());
    const json ord = doc.value("orders", json::object());
    const json cmp = doc.value("comparators", json::object());
    for (const auto& [from, to] : syn.items()) {
      lx.synonyms[from] = to.get<std::string>();
    }
    for (const auto& [family, values] : ord.items()) {
      lx.orders[family] = values.get<std::vector<std::string>>();
    }
    for (const auto& [word, pol] : cmp.items()) {
      const auto p = pol.get<std::string>();
      if (p != "greater" && p != "less") {
        throw Error(ErrorKind::ConfigError,
                    fmt::format("comparator '{}' has polarity '{}'", word, p));
      }
      lx.comparators[word] = p == "greater" ? Polarity::Greater : Polarity::Less;
    }
    return lx;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("lexicon: ") + e.what());
  }
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

json Lexicon::to_json() const {
  json comps = json::object();
  for (const auto& [word, p] : comparators) {
    comps[word] = p == Polarity::Greater ? "greater" : "less";
  }
  return {{"synonyms", synonyms}, {"orders", orders}, {"comparators", comps}};
}

// ---------------------------------------------------------------------------
// Results

NodeResult NodeResult::of_objects(std::vector<std::string> ids) {
  NodeResult r;
  r.kind = Kind::Objects;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  r.objects = std::move(ids);
  return r;
}

NodeResult NodeResult::of_boolean(bool b) {
  NodeResult r;
  r.kind = Kind::Boolean;
  r.boolean = b;
  return r;
}

NodeResult NodeResult::of_value(std::string v) {
  NodeResult r;
  r.kind = Kind::Value;
  r.value = std::move(v);
  return r;
}

NodeResult NodeResult::of_values(std::vector<Attribute> vs) {
  NodeResult r;
  r.kind = Kind::ValueList;
  std::sort(vs.begin(), vs.end());
  r.values = std::move(vs);
  return r;
}

std::string_view to_string(NodeResult::Kind kind) {
  switch (kind) {
    case NodeResult::Kind::Objects: return "objects";
    case NodeResult::Kind::Boolean: return "boolean";
    case NodeResult::Kind::Value: return "value";
    case NodeResult::Kind::ValueList: return "value_list";
  }
  return "?";
}

const NodeResult& ExecutionTrace::result(std::string_view node_id) const {
  for (const auto& r : results) {
    if (r.node_id == node_id) return r;
  }
  throw Error(ErrorKind::ParseError, fmt::format("no result for node '{}'", node_id));
}

namespace {

void expect(const NodeResult& r, NodeResult::Kind kind) {
  if (r.kind != kind) {
    throw Error(ErrorKind::KindMismatch,
                fmt::format("expected {} input, got {}", to_string(kind), to_string(r.kind)));
  }
}

void expect_nonempty(const NodeResult& r) {
  expect(r, NodeResult::Kind::Objects);
  if (r.objects.empty()) throw Error(ErrorKind::EmptySelection, "selection is empty");
}

const SceneObject& singleton(const SceneGraph& g, const NodeResult& r) {
  expect(r, NodeResult::Kind::Objects);
  if (r.objects.size() != 1) {
    throw Error(ErrorKind::NonSingletonSelection,
                fmt::format("expected one object, selection has {}", r.objects.size()));
  }
  return g.at(r.objects.front());
}

std::string family_value(const SceneObject& obj, std::string_view family) {
  auto v = obj.value_of(parse_family(family));
  if (!v) {
    throw Error(ErrorKind::MissingAttribute,
                fmt::format("object '{}' has no {}", obj.id, family));
  }
  return *v;
}

std::vector<const SceneObject*> members(const SceneGraph& g, const NodeResult& r) {
  std::vector<const SceneObject*> out;
  for (const auto& id : r.objects) out.push_back(&g.at(id));
  return out;
}

bool all_of_pairs(const std::vector<const SceneObject*>& a,
                  const std::vector<const SceneObject*>& b, auto&& pred) {
  for (auto* x : a)
    for (auto* y : b)
      if (!pred(*x, *y)) return false;
  return true;
}

}  // namespace

NodeResult exec_select(const SceneGraph& g, std::string_view category,
                       const Lexicon& lexicon) {
  const std::string want = lexicon.normalize(category);
  std::vector<std::string> ids;
  for (const auto& [id, obj] : g.objects) {
    if (lexicon.normalize(obj.name) == want) ids.push_back(id);
  }
  return NodeResult::of_objects(std::move(ids));
}

NodeResult exec_exist(const NodeResult& dep) {
  expect(dep, NodeResult::Kind::Objects);
  return NodeResult::of_boolean(!dep.objects.empty());
}

NodeResult exec_filter(const SceneGraph& g, const NodeResult& dep,
                       std::string_view attribute,
                       const std::optional<std::string>& category,
                       const Lexicon& lexicon) {
  expect(dep, NodeResult::Kind::Objects);
  const std::string want = category ? lexicon.normalize(*category) : std::string();
  std::vector<std::string> ids;
  for (const auto& id : dep.objects) {
    const auto& obj = g.at(id);
    if (!obj.has_value(attribute)) continue;
    if (category && lexicon.normalize(obj.name) != want) continue;
    ids.push_back(id);
  }
  return NodeResult::of_objects(std::move(ids));
}

NodeResult exec_query(const SceneGraph& g, const NodeResult& dep, std::string_view family) {
  return NodeResult::of_value(family_value(singleton(g, dep), family));
}

NodeResult exec_verify(const SceneGraph& g, const NodeResult& dep,
                       std::string_view attribute, Quantifier quantifier) {
  expect_nonempty(dep);
  auto objs = members(g, dep);
  auto has = [&](const SceneObject* o) { return o->has_value(attribute); };
  const bool result = quantifier == Quantifier::Universal
                          ? std::all_of(objs.begin(), objs.end(), has)
                          : std::any_of(objs.begin(), objs.end(), has);
  return NodeResult::of_boolean(result);
}

NodeResult exec_relate(const SceneGraph& g, const NodeResult& dep,
                       const RelationSpec& relation,
                       const std::optional<std::string>& category,
                       const Lexicon& lexicon) {
  expect(dep, NodeResult::Kind::Objects);
  const std::set<std::string> anchors(dep.objects.begin(), dep.objects.end());
  std::set<std::string> found;
  if (relation.direction == RelationDirection::Subject) {
    // candidate --predicate--> anchor
    for (const auto& [id, obj] : g.objects) {
      for (const auto& r : obj.relations) {
        if (r.predicate == relation.predicate && anchors.count(r.target)) found.insert(id);
      }
    }
  } else {
    // anchor --predicate--> candidate
    for (const auto& a : anchors) {
      for (const auto& r : g.at(a).relations) {
        if (r.predicate == relation.predicate) found.insert(r.target);
      }
    }
  }
  std::vector<std::string> ids;
  const std::string want = category ? lexicon.normalize(*category) : std::string();
  for (const auto& id : found) {
    if (category && lexicon.normalize(g.at(id).name) != want) continue;
    ids.push_back(id);
  }
  return NodeResult::of_objects(std::move(ids));
}

NodeResult exec_common(const SceneGraph& g, const NodeResult& a, const NodeResult& b) {
  expect_nonempty(a);
  expect_nonempty(b);
  auto objs = members(g, a);
  auto more = members(g, b);
  objs.insert(objs.end(), more.begin(), more.end());
  std::vector<Attribute> shared = objs.front()->attributes;
  for (auto* o : objs) {
    std::vector<Attribute> next;
    std::set_intersection(shared.begin(), shared.end(), o->attributes.begin(),
                          o->attributes.end(), std::back_inserter(next));
    shared = std::move(next);
  }
  return NodeResult::of_values(std::move(shared));
}

NodeResult exec_same(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                     const std::optional<std::string>& family, Quantifier quantifier) {
  expect_nonempty(a);
  expect_nonempty(b);
  auto as = members(g, a);
  auto bs = members(g, b);

  if (family) {
    std::map<const SceneObject*, std::string> value;
    for (auto* o : as) value[o] = family_value(*o, *family);
    for (auto* o : bs) value[o] = family_value(*o, *family);
    if (quantifier == Quantifier::Universal) {
      const auto& first = value.begin()->second;
      return NodeResult::of_boolean(std::all_of(
          value.begin(), value.end(), [&](const auto& kv) { return kv.second == first; }));
    }
    for (auto* x : as)
      for (auto* y : bs)
        if (value[x] == value[y]) return NodeResult::of_boolean(true);
    return NodeResult::of_boolean(false);
  }

  if (quantifier == Quantifier::Universal) {
    return NodeResult::of_boolean(!exec_common(g, a, b).values.empty());
  }
  const bool disjoint_everywhere =
      all_of_pairs(as, bs, [](const SceneObject& x, const SceneObject& y) {
        std::vector<Attribute> both;
        std::set_intersection(x.attributes.begin(), x.attributes.end(),
                              y.attributes.begin(), y.attributes.end(),
                              std::back_inserter(both));
        return both.empty();
      });
  return NodeResult::of_boolean(!disjoint_everywhere);
}

NodeResult exec_different(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                          const std::optional<std::string>& family, Quantifier quantifier) {
  auto r = exec_same(g, a, b, family, quantifier);
  r.boolean = !r.boolean;
  return r;
}

Comparison compare_objects(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                           std::string_view family, std::string_view comparator,
                           const Lexicon& lexicon) {
  const auto& oa = singleton(g, a);
  const auto& ob = singleton(g, b);
  const auto va = family_value(oa, family);
  const auto vb = family_value(ob, family);
  auto pol = lexicon.comparators.find(std::string(comparator));
  if (pol == lexicon.comparators.end()) {
    throw Error(ErrorKind::UnorderedValue,
                fmt::format("comparator '{}' is not in the comparator table", comparator));
  }
  auto ra = lexicon.rank(family, va);
  auto rb = lexicon.rank(family, vb);
  if (!ra || !rb) {
    throw Error(ErrorKind::UnorderedValue,
                fmt::format("value '{}' has no position in the {} order",
                            ra ? vb : va, family));
  }
  auto beats = [&](std::size_t x, std::size_t y) {
    return pol->second == Lexicon::Polarity::Greater ? x > y : x < y;
  };
  Comparison c;
  c.holds = beats(*ra, *rb);
  if (c.holds) c.winner_first = true;
  else if (beats(*rb, *ra)) c.winner_first = false;
  return c;
}

NodeResult exec_compare(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                        std::string_view family, std::string_view comparator, bool choose,
                        const Lexicon& lexicon) {
  const auto c = compare_objects(g, a, b, family, comparator, lexicon);
  if (!choose) return NodeResult::of_boolean(c.holds);
  if (!c.winner_first) {
    throw Error(ErrorKind::TiedComparison,
                fmt::format("both objects have the same {}", family));
  }
  const auto& winner = *c.winner_first ? a : b;
  return NodeResult::of_value(g.at(winner.objects.front()).name);
}

NodeResult exec_logical(AtomicOp op, const NodeResult& a, const NodeResult& b) {
  expect(a, NodeResult::Kind::Boolean);
  expect(b, NodeResult::Kind::Boolean);
  if (op == AtomicOp::And) return NodeResult::of_boolean(a.boolean && b.boolean);
  if (op == AtomicOp::Or) return NodeResult::of_boolean(a.boolean || b.boolean);
  throw Error(ErrorKind::KindMismatch,
              fmt::format("{} is not a logical operation", to_string(op)));
}

NodeResult exec_node(const OpNode& n, const std::vector<const NodeResult*>& deps,
                     const SceneGraph& g, const ExecConfig& config) {
  const auto& lx = config.lexicon;
  auto dep = [&](std::size_t i) -> const NodeResult& { return *deps.at(i); };
  switch (n.op) {
    case AtomicOp::Select: return exec_select(g, *n.category, lx);
    case AtomicOp::Exist: return exec_exist(dep(0));
    case AtomicOp::Filter: return exec_filter(g, dep(0), *n.attribute, n.category, lx);
    case AtomicOp::Query: return exec_query(g, dep(0), *n.attribute);
    case AtomicOp::Verify: return exec_verify(g, dep(0), *n.attribute, config.quantifier);
    case AtomicOp::Relate: return exec_relate(g, dep(0), *n.relation, n.category, lx);
    case AtomicOp::Common: return exec_common(g, dep(0), dep(1));
    case AtomicOp::Same:
      return exec_same(g, dep(0), dep(1), n.attribute, config.quantifier);
    case AtomicOp::Different:
      return exec_different(g, dep(0), dep(1), n.attribute, config.quantifier);
    case AtomicOp::Compare:
      return exec_compare(g, dep(0), dep(1), *n.attribute, *n.comparator, n.choose, lx);
    case AtomicOp::And:
    case AtomicOp::Or: return exec_logical(n.op, dep(0), dep(1));
  }
  throw Error(ErrorKind::ParseError, "unhandled operation");
}

std::string answer_of(const NodeResult& root, const SceneGraph& g) {
  auto join_unique = [](const std::vector<std::string>& items) {
    std::vector<std::string> seen;
    for (const auto& s : items) {
      if (std::find(seen.begin(), seen.end(), s) == seen.end()) seen.push_back(s);
    }
    if (seen.empty()) return std::string("none");
    return fmt::format("{}", fmt::join(seen, " and "));
  };
  switch (root.kind) {
    case NodeResult::Kind::Boolean: return root.boolean ? "yes" : "no";
    case NodeResult::Kind::Value: return root.value;
    case NodeResult::Kind::ValueList: {
      std::vector<std::string> families;
      for (const auto& a : root.values) families.emplace_back(to_string(a.family));
      return join_unique(families);
    }
    case NodeResult::Kind::Objects: {
      std::vector<std::string> names;
      for (const auto& id : root.objects) names.push_back(g.at(id).name);
      return join_unique(names);
    }
  }
  return {};
}

ExecutionTrace execute(const ReasoningProgram& p, const SceneGraph& g,
                       const ExecConfig& config) {
  ExecutionTrace trace;
  const auto order = topo_order(p);
  std::map<std::string, std::size_t> slot;
  trace.results.reserve(order.size());
  for (const auto& id : order) {
    const auto& n = p.node(id);
    std::vector<const NodeResult*> deps;
    for (const auto& d : n.deps) deps.push_back(&trace.results[slot.at(d)]);
    try {
      auto r = exec_node(n, deps, g, config);
      r.node_id = id;
      slot[id] = trace.results.size();
      trace.results.push_back(std::move(r));
    } catch (const Error& e) {
      throw e.at_node(id);
    }
  }
  const auto& root = trace.results[slot.at(p.root)];
  trace.answer = answer_of(root, g);
  trace.answer_kind =
      root.kind == NodeResult::Kind::Boolean ? AnswerKind::YesNo : AnswerKind::Value;
  return trace;
}

}  // namespace rex
