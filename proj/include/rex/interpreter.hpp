#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rex/program.hpp"
#include "rex/scene.hpp"

namespace rex {

// How multi-object selections are quantified by Verify, Same and Different.
enum class Quantifier { Universal, Existential };

std::string_view to_string(Quantifier q);
Quantifier parse_quantifier(std::string_view name);

// Vocabulary data the interpreter consults: category synonyms, per-family
// value orders, and comparative words.
struct Lexicon {
  enum class Polarity { Greater, Less };

  std::map<std::string, std::string> synonyms;
  std::map<std::string, std::vector<std::string>> orders;
  std::map<std::string, Polarity> comparators;

  // Lowercased, then mapped through the synonym table.
  std::string normalize(std::string_view category) const;
  // Position of `value` in the family's order table.
  std::optional<std::size_t> rank(std::string_view family, std::string_view value) const;

  static Lexicon defaults();
  static Lexicon from_json(const nlohmann::json& doc);
  static Lexicon load(const std::string& path);
  nlohmann::json to_json() const;
};

struct ExecConfig {
  Quantifier quantifier = Quantifier::Universal;
  Lexicon lexicon = Lexicon::defaults();
};

struct NodeResult {
  enum class Kind { Objects, Boolean, Value, ValueList };

  std::string node_id;
  Kind kind = Kind::Objects;
  std::vector<std::string> objects;  // sorted object ids
  bool boolean = false;
  std::string value;
  std::vector<Attribute> values;  // sorted (family, value)

  static NodeResult of_objects(std::vector<std::string> ids);
  static NodeResult of_boolean(bool b);
  static NodeResult of_value(std::string v);
  static NodeResult of_values(std::vector<Attribute> vs);

  friend bool operator==(const NodeResult&, const NodeResult&) = default;
};

std::string_view to_string(NodeResult::Kind kind);

enum class AnswerKind { YesNo, Value };

struct ExecutionTrace {
  std::vector<NodeResult> results;  // topo order
  std::string answer;
  AnswerKind answer_kind = AnswerKind::Value;

  const NodeResult& result(std::string_view node_id) const;
};

NodeResult exec_select(const SceneGraph& g, std::string_view category,
                       const Lexicon& lexicon);
NodeResult exec_exist(const NodeResult& dep);
NodeResult exec_filter(const SceneGraph& g, const NodeResult& dep,
                       std::string_view attribute,
                       const std::optional<std::string>& category = std::nullopt,
                       const Lexicon& lexicon = Lexicon::defaults());
NodeResult exec_query(const SceneGraph& g, const NodeResult& dep, std::string_view family);
NodeResult exec_verify(const SceneGraph& g, const NodeResult& dep,
                       std::string_view attribute,
                       Quantifier quantifier = Quantifier::Universal);
NodeResult exec_relate(const SceneGraph& g, const NodeResult& dep,
                       const RelationSpec& relation,
                       const std::optional<std::string>& category,
                       const Lexicon& lexicon = Lexicon::defaults());
NodeResult exec_common(const SceneGraph& g, const NodeResult& a, const NodeResult& b);
NodeResult exec_same(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                     const std::optional<std::string>& family,
                     Quantifier quantifier = Quantifier::Universal);
NodeResult exec_different(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                          const std::optional<std::string>& family,
                          Quantifier quantifier = Quantifier::Universal);

// Outcome of comparing two singleton selections on an ordered family.
struct Comparison {
  bool holds = false;            // first is `comparator` than second
  std::optional<bool> winner_first;  // unset on a tie
};

Comparison compare_objects(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                           std::string_view family, std::string_view comparator,
                           const Lexicon& lexicon);
NodeResult exec_compare(const SceneGraph& g, const NodeResult& a, const NodeResult& b,
                        std::string_view family, std::string_view comparator,
                        bool choose, const Lexicon& lexicon = Lexicon::defaults());
NodeResult exec_logical(AtomicOp op, const NodeResult& a, const NodeResult& b);

// Runs one node given its dependency results (in dep order).
NodeResult exec_node(const OpNode& node, const std::vector<const NodeResult*>& deps,
                     const SceneGraph& g, const ExecConfig& config);

// Derives the answer string for a root result.
std::string answer_of(const NodeResult& root, const SceneGraph& g);

ExecutionTrace execute(const ReasoningProgram& program, const SceneGraph& g,
                       const ExecConfig& config = {});

}  // namespace rex
