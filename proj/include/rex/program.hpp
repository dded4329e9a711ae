#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rex {

// The closed vocabulary of reasoning steps.
enum class AtomicOp {
  Select,
  Exist,
  Filter,
  Query,
  Verify,
  Common,
  Same,
  Different,
  Compare,
  Relate,
  And,
  Or,
};

inline constexpr int kAtomicOpCount = 12;

std::string_view to_string(AtomicOp op);
// Throws ParseError for names outside the vocabulary. Case-insensitive.
AtomicOp parse_atomic_op(std::string_view name);

// subject: the related object is the subject of the predicate (result -> dep).
// object: the dependency is the subject (dep -> result).
enum class RelationDirection { Subject, Object };

std::string_view to_string(RelationDirection dir);
RelationDirection parse_direction(std::string_view name);

struct RelationSpec {
  std::string predicate;
  RelationDirection direction = RelationDirection::Subject;

  friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

// One step of a program: the <operation, attribute, category> triplet plus
// the extra arguments some operations need.
struct OpNode {
  std::string node_id;
  AtomicOp op = AtomicOp::Select;
  // Attribute value (Filter, Verify) or family (Query, Same, Different, Compare).
  std::optional<std::string> attribute;
  std::optional<std::string> category;
  std::optional<RelationSpec> relation;
  // Compare only: the comparative word ("larger") and whether the step picks
  // the winning object instead of answering yes/no.
  std::optional<std::string> comparator;
  bool choose = false;
  std::vector<std::string> deps;

  friend bool operator==(const OpNode&, const OpNode&) = default;
};

struct ReasoningProgram {
  std::string question_id;
  std::string question;
  std::string image_id;
  std::string reasoning_type;
  std::map<std::string, OpNode> nodes;
  std::string root;

  const OpNode& node(std::string_view id) const;

  friend bool operator==(const ReasoningProgram&, const ReasoningProgram&) = default;
};

// Checks arity, dependency existence, acyclicity, and the single-root rule.
// Throws ArityError, ParseError or CycleError naming the offending node.
void validate_program(const ReasoningProgram& program);

ReasoningProgram parse_program(const nlohmann::json& doc);
ReasoningProgram parse_program(std::string_view text);
nlohmann::json program_to_json(const ReasoningProgram& program);

// Kahn order that always releases the smallest ready node id first.
std::vector<std::string> topo_order(const ReasoningProgram& program);

// Maps a foreign operation name onto an atomic op and says where each field
// of the triplet comes from. Rules:
//   "arg"       the whole argument, trailing "(id)" removed
//   "arg:N"     N-th comma-separated part of the argument
//   "suffix"    last word of the source operation name
//   "=text"     the literal text
struct OpMapping {
  std::string source;
  AtomicOp op = AtomicOp::Select;
  std::map<std::string, std::string> extract;
};

class OpMappingTable {
 public:
  OpMappingTable() = default;
  explicit OpMappingTable(std::vector<OpMapping> entries);

  static OpMappingTable from_json(const nlohmann::json& doc);
  static OpMappingTable load(const std::string& path);

  const OpMapping* find(std::string_view source) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, OpMapping, std::less<>> entries_;
};

// Rewrites a GQA-style program ({"program": [{"operation", "argument",
// "dependencies"}]}) into atomic-op form. Node i becomes a zero-padded id.
ReasoningProgram map_source_program(const nlohmann::json& source,
                                    const OpMappingTable& table);

}  // namespace rex
