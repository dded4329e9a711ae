#include "rex/program.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "rex/error.hpp"

namespace rex {

using nlohmann::json;

namespace {

constexpr std::string_view kOpNames[kAtomicOpCount] = {
    "Select", "Exist",     "Filter",  "Query",  "Verify", "Common",
    "Same",   "Different", "Compare", "Relate", "And",    "Or"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void parse_fail(const std::string& what, const std::string& node = {}) {
  throw Error(ErrorKind::ParseError, what, node);
}

[[noreturn]] void arity_fail(const OpNode& n, const std::string& what) {
  throw Error(ErrorKind::ArityError,
              fmt::format("{} {}", to_string(n.op), what), n.node_id);
}

std::optional<std::string> optional_string(const json& doc, const char* key,
                                           const std::string& node) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) parse_fail(fmt::format("field '{}' must be a string", key), node);
  return it->get<std::string>();
}

std::string required_string(const json& doc, const char* key, const std::string& ctx) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) {
    parse_fail(fmt::format("{}: missing string field '{}'", ctx, key));
  }
  return it->get<std::string>();
}

void check_arity(const OpNode& n) {
  auto want_deps = [&](std::size_t k) {
    if (n.deps.size() != k) {
      arity_fail(n, fmt::format("needs exactly {} dependencies, has {}", k, n.deps.size()));
    }
  };
  auto want = [&](bool present, const char* field) {
    if (!present) arity_fail(n, fmt::format("requires field '{}'", field));
  };
  auto forbid = [&](bool present, const char* field) {
    if (present) arity_fail(n, fmt::format("does not take field '{}'", field));
  };

  if (n.op != AtomicOp::Relate) forbid(n.relation.has_value(), "relation");
  if (n.op != AtomicOp::Compare) {
    forbid(n.comparator.has_value(), "comparator");
    forbid(n.choose, "choose");
  }

  switch (n.op) {
    case AtomicOp::Select:
      want_deps(0);
      want(n.category.has_value(), "category");
      break;
    case AtomicOp::Exist:
      want_deps(1);
      break;
    case AtomicOp::Filter:
    case AtomicOp::Query:
    case AtomicOp::Verify:
      want_deps(1);
      want(n.attribute.has_value(), "attribute");
      break;
    case AtomicOp::Relate:
      want_deps(1);
      want(n.relation.has_value(), "relation");
      break;
    case AtomicOp::Common:
    case AtomicOp::Same:
    case AtomicOp::Different:
      want_deps(2);
      break;
    case AtomicOp::Compare:
      want_deps(2);
      want(n.attribute.has_value(), "attribute");
      want(n.comparator.has_value(), "comparator");
      break;
    case AtomicOp::And:
    case AtomicOp::Or:
      want_deps(2);
      break;
  }
}

// Kahn's algorithm with an ordered ready set. Returns the order produced
// before stalling; a short result means a cycle.
std::vector<std::string> kahn(const ReasoningProgram& p) {
  std::map<std::string, std::size_t> pending;
  std::map<std::string, std::vector<std::string>> dependents;
  for (const auto& [id, n] : p.nodes) {
    pending[id] = n.deps.size();
    for (const auto& d : n.deps) dependents[d].push_back(id);
  }
  std::set<std::string> ready;
  for (const auto& [id, count] : pending) {
    if (count == 0) ready.insert(id);
  }
  std::vector<std::string> order;
  order.reserve(p.nodes.size());
  while (!ready.empty()) {
    std::string id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    // A node listing the same dep twice decrements once per listing.
    for (const auto& next : dependents[id]) {
      if (--pending[next] == 0) ready.insert(next);
    }
  }
  return order;
}

}  // namespace

std::string_view to_string(AtomicOp op) { return kOpNames[static_cast<int>(op)]; }

AtomicOp parse_atomic_op(std::string_view name) {
  const std::string key = lower(name);
  for (int i = 0; i < kAtomicOpCount; ++i) {
    if (lower(kOpNames[i]) == key) return static_cast<AtomicOp>(i);
  }
  parse_fail(fmt::format("unknown atomic operation '{}'", name));
}

std::string_view to_string(RelationDirection dir) {
  return dir == RelationDirection::Subject ? "subject" : "object";
}

RelationDirection parse_direction(std::string_view name) {
  const std::string key = lower(trim(name));
  if (key == "subject" || key == "s") return RelationDirection::Subject;
  if (key == "object" || key == "o") return RelationDirection::Object;
  parse_fail(fmt::format("unknown relation direction '{}'", name));
}

const OpNode& ReasoningProgram::node(std::string_view id) const {
  auto it = nodes.find(std::string(id));
  if (it == nodes.end()) parse_fail(fmt::format("unknown node '{}'", id));
  return it->second;
}

void validate_program(const ReasoningProgram& p) {
  if (p.nodes.empty()) parse_fail(fmt::format("program '{}' has no nodes", p.question_id));

  for (const auto& [id, n] : p.nodes) {
    check_arity(n);
    for (const auto& d : n.deps) {
      if (!p.nodes.count(d)) parse_fail(fmt::format("unknown dependency '{}'", d), id);
    }
  }

  auto order = kahn(p);
  if (order.size() != p.nodes.size()) {
    std::set<std::string> done(order.begin(), order.end());
    for (const auto& [id, n] : p.nodes) {
      if (!done.count(id)) {
        throw Error(ErrorKind::CycleError, "dependency cycle", id);
      }
    }
  }

  std::set<std::string> used;
  for (const auto& [id, n] : p.nodes) used.insert(n.deps.begin(), n.deps.end());
  std::vector<std::string> sinks;
  for (const auto& [id, n] : p.nodes) {
    if (!used.count(id)) sinks.push_back(id);
  }
  if (!p.nodes.count(p.root)) parse_fail(fmt::format("root '{}' is not a node", p.root));
  if (used.count(p.root)) parse_fail("root has dependents", p.root);
  if (sinks.size() != 1) {
    parse_fail(fmt::format("program has {} final steps, expected one", sinks.size()),
               sinks.back() == p.root ? sinks.front() : sinks.back());
  }
}

ReasoningProgram parse_program(const json& doc) {
  if (!doc.is_object()) parse_fail("program document must be an object");
  ReasoningProgram p;
  p.question_id = required_string(doc, "question_id", "program");
  const std::string ctx = "program '" + p.question_id + "'";
  p.question = optional_string(doc, "question", {}).value_or("");
  p.image_id = optional_string(doc, "image_id", {}).value_or("");
  p.reasoning_type = optional_string(doc, "reasoning_type", {}).value_or("");
  p.root = required_string(doc, "root", ctx);

  auto nodes = doc.find("nodes");
  if (nodes == doc.end() || !nodes->is_object()) parse_fail(ctx + ": nodes must be a map");
  for (const auto& [id, nd] : nodes->items()) {
    if (!nd.is_object()) parse_fail("node must be an object", id);
    OpNode n;
    n.node_id = id;
    n.op = [&] {
      auto op = optional_string(nd, "op", id);
      if (!op) parse_fail("missing 'op'", id);
      try {
        return parse_atomic_op(*op);
      } catch (const Error& e) {
        throw e.at_node(id);
      }
    }();
    n.attribute = optional_string(nd, "attribute", id);
    n.category = optional_string(nd, "category", id);
    n.comparator = optional_string(nd, "comparator", id);
    if (auto it = nd.find("choose"); it != nd.end()) {
      if (!it->is_boolean()) parse_fail("'choose' must be a boolean", id);
      n.choose = it->get<bool>();
    }
    if (auto it = nd.find("relation"); it != nd.end() && !it->is_null()) {
      if (!it->is_object()) parse_fail("'relation' must be an object", id);
      RelationSpec rel;
      auto pred = optional_string(*it, "predicate", id);
      if (!pred) parse_fail("relation needs a predicate", id);
      rel.predicate = *pred;
      if (auto dir = optional_string(*it, "direction", id)) {
        try {
          rel.direction = parse_direction(*dir);
        } catch (const Error& e) {
          throw e.at_node(id);
        }
      }
      n.relation = rel;
    }
    if (auto it = nd.find("deps"); it != nd.end()) {
      if (!it->is_array()) parse_fail("'deps' must be a list", id);
      for (const auto& d : *it) {
        if (!d.is_string()) parse_fail("dependency ids must be strings", id);
        n.deps.push_back(d.get<std::string>());
      }
    }
    p.nodes.emplace(id, std::move(n));
  }
  validate_program(p);
  return p;
}

ReasoningProgram parse_program(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    parse_fail(e.what());
  }
  return parse_program(doc);
}

json program_to_json(const ReasoningProgram& p) {
  json nodes = json::object();
  for (const auto& [id, n] : p.nodes) {
    json nd = {{"op", to_string(n.op)}, {"deps", n.deps}};
    if (n.attribute) nd["attribute"] = *n.attribute;
    if (n.category) nd["category"] = *n.category;
    if (n.comparator) nd["comparator"] = *n.comparator;
    if (n.choose) nd["choose"] = true;
    if (n.relation) {
      nd["relation"] = {{"predicate", n.relation->predicate},
                        {"direction", to_string(n.relation->direction)}};
    }
    nodes[id] = std::move(nd);
  }
  return {{"question_id", p.question_id}, {"question", p.question},
          {"image_id", p.image_id},       {"reasoning_type", p.reasoning_type},
          {"root", p.root},               {"nodes", std::move(nodes)}};
}

std::vector<std::string> topo_order(const ReasoningProgram& p) {
  auto order = kahn(p);
  if (order.size() != p.nodes.size()) {
    throw Error(ErrorKind::CycleError, "dependency cycle in program " + p.question_id);
  }
  return order;
}

// ---------------------------------------------------------------------------
// Foreign programs

namespace {

const std::set<std::string> kExtractFields = {"attribute", "category", "predicate",
                                              "direction", "comparator", "choose"};

void check_rule(const std::string& source, const std::string& field,
                const std::string& rule) {
  if (!kExtractFields.count(field)) {
    throw Error(ErrorKind::ConfigError,
                fmt::format("mapping '{}': unknown extract field '{}'", source, field));
  }
  if (rule == "arg" || rule == "suffix" || (!rule.empty() && rule[0] == '=')) return;
  if (rule.rfind("arg:", 0) == 0 && rule.size() > 4 &&
      std::all_of(rule.begin() + 4, rule.end(), [](char c) { return std::isdigit(c); })) {
    return;
  }
  throw Error(ErrorKind::ConfigError,
              fmt::format("mapping '{}': bad extract rule '{}'", source, rule));
}

// "table (123)" -> "table"
std::string strip_object_ref(std::string_view arg) {
  std::string s = trim(arg);
  while (!s.empty() && s.back() == ')') {
    auto open = s.rfind('(');
    if (open == std::string::npos) break;
    s = trim(std::string_view(s).substr(0, open));
  }
  return s;
}

std::vector<std::string> split_commas(std::string_view s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto comma = s.find(',', start);
    parts.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

std::optional<std::string> apply_rule(const std::string& rule, std::string_view operation,
                                      std::string_view argument) {
  std::string out;
  if (rule == "arg") {
    out = strip_object_ref(argument);
  } else if (rule == "suffix") {
    std::string op = trim(operation);
    auto sp = op.find_last_of(' ');
    out = sp == std::string::npos ? op : op.substr(sp + 1);
  } else if (rule[0] == '=') {
    out = rule.substr(1);
  } else {
    const auto index = static_cast<std::size_t>(std::stoul(rule.substr(4)));
    auto parts = split_commas(argument);
    if (index >= parts.size()) return std::nullopt;
    out = strip_object_ref(parts[index]);
  }
  if (out.empty() || out == "_") return std::nullopt;
  return out;
}

}  // namespace

OpMappingTable::OpMappingTable(std::vector<OpMapping> entries) {
  for (auto& e : entries) {
    for (const auto& [field, rule] : e.extract) check_rule(e.source, field, rule);
    auto key = e.source;
    if (!entries_.emplace(key, std::move(e)).second) {
      throw Error(ErrorKind::ConfigError, "duplicate mapping for '" + key + "'");
    }
  }
}

OpMappingTable OpMappingTable::from_json(const json& doc) {
  if (!doc.is_array()) throw Error(ErrorKind::ConfigError, "mapping table must be a list");
  std::vector<OpMapping> entries;
  for (const auto& e : doc) {
    OpMapping m;
    m.source = required_string(e, "source", "mapping entry");
    m.op = parse_atomic_op(required_string(e, "op", "mapping '" + m.source + "'"));
    if (auto it = e.find("extract"); it != e.end()) {
      if (!it->is_object()) {
        throw Error(ErrorKind::ConfigError, "mapping '" + m.source + "': extract must be a map");
      }
      for (const auto& [field, rule] : it->items()) {
        if (!rule.is_string()) {
          throw Error(ErrorKind::ConfigError,
                      fmt::format("mapping '{}': rule for '{}' must be a string", m.source, field));
        }
        m.extract[field] = rule.get<std::string>();
      }
    }
    entries.push_back(std::move(m));
  }
  return OpMappingTable(std::move(entries));
}

OpMappingTable OpMappingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
}

const OpMapping* OpMappingTable::find(std::string_view source) const {
  auto it = entries_.find(source);
  return it == entries_.end() ? nullptr : &it->second;
}

ReasoningProgram map_source_program(const json& source, const OpMappingTable& table) {
  if (!source.is_object()) parse_fail("source program must be an object");
  ReasoningProgram p;
  p.question_id = required_string(source, "question_id", "source program");
  p.question = optional_string(source, "question", {}).value_or("");
  p.image_id = optional_string(source, "image_id", {}).value_or("");
  p.reasoning_type = optional_string(source, "reasoning_type", {}).value_or("");

  const json* steps = nullptr;
  for (const char* key : {"program", "semantic"}) {
    if (auto it = source.find(key); it != source.end()) steps = &*it;
  }
  if (!steps || !steps->is_array() || steps->empty()) {
    parse_fail(fmt::format("source program '{}' has no steps", p.question_id));
  }

  const std::size_t count = steps->size();
  const int width = static_cast<int>(fmt::format("{}", count - 1).size());
  auto id_of = [&](std::size_t i) { return fmt::format("{:0{}}", i, width); };

  std::set<std::size_t> used;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& step = (*steps)[i];
    const std::string id = id_of(i);
    const std::string operation = required_string(step, "operation", "step " + id);
    std::string argument;
    if (auto it = step.find("argument"); it != step.end() && it->is_string()) {
      argument = it->get<std::string>();
    }
    const OpMapping* m = table.find(operation);
    if (!m) throw Error(ErrorKind::UnmappedOperation, "'" + operation + "'", id);

    OpNode n;
    n.node_id = id;
    n.op = m->op;
    std::optional<std::string> predicate, direction;
    for (const auto& [field, rule] : m->extract) {
      auto value = apply_rule(rule, operation, argument);
      if (field == "attribute") n.attribute = value;
      else if (field == "category") n.category = value;
      else if (field == "comparator") n.comparator = value;
      else if (field == "choose") n.choose = value && lower(*value) == "true";
      else if (field == "predicate") predicate = value;
      else if (field == "direction") direction = value;
    }
    if (predicate) {
      RelationSpec rel{*predicate, RelationDirection::Subject};
      if (direction) {
        try {
          rel.direction = parse_direction(*direction);
        } catch (const Error& e) {
          throw e.at_node(id);
        }
      }
      n.relation = rel;
    }

    if (auto it = step.find("dependencies"); it != step.end()) {
      if (!it->is_array()) parse_fail("dependencies must be a list", id);
      for (const auto& d : *it) {
        if (!d.is_number_integer() || d.get<long long>() < 0 ||
            static_cast<std::size_t>(d.get<long long>()) >= count) {
          parse_fail("dependency index out of range", id);
        }
        const auto dep = d.get<std::size_t>();
        used.insert(dep);
        n.deps.push_back(id_of(dep));
      }
    }
    p.nodes.emplace(id, std::move(n));
  }

  p.root = id_of(count - 1);
  for (std::size_t i = count; i-- > 0;) {
    if (!used.count(i)) {
      p.root = id_of(i);
      break;
    }
  }
  validate_program(p);
  return p;
}

}  // namespace rex
