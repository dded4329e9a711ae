#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rex/interpreter.hpp"
#include "rex/program.hpp"
#include "rex/scene.hpp"

namespace rex {

// What to do with an object whose best region overlaps less than min_iou.
enum class MissPolicy { DropToken, Fail };

std::string_view to_string(MissPolicy policy);
MissPolicy parse_miss_policy(std::string_view name);

struct Token {
  enum class Kind { Word, Region, Mention };

  Kind kind = Kind::Word;
  std::string text;       // Word only
  std::size_t region = 0; // Region and Mention
  std::string object_id;  // Mention only

  static Token word(std::string w) { return {Kind::Word, std::move(w), 0, {}}; }
  static Token region_token(std::size_t i) { return {Kind::Region, {}, i, {}}; }
  static Token mention(std::string object, std::size_t i) {
    return {Kind::Mention, {}, i, std::move(object)};
  }

  bool grounded() const { return kind != Kind::Word; }
  std::string surface() const;

  friend bool operator==(const Token&, const Token&) = default;
};

struct PartialExplanation {
  std::string node_id;
  std::vector<Token> tokens;

  std::string text() const;
};

struct GroundedExplanation {
  std::string question_id;
  std::string image_id;
  std::string question;
  std::string reasoning_type;
  std::vector<std::string> tokens;  // surface forms, `#i` for regions
  std::string answer;
  std::map<std::size_t, std::size_t> grounding;            // position -> region
  std::map<std::string, std::size_t> grounded_objects;     // object id -> region
  // Corpus metadata used by `stats` and attribute recall.
  std::vector<std::string> operations;
  std::vector<Attribute> attributes;
  std::map<std::string, std::string> categories;  // grounded object id -> name

  std::string text() const;
  // Region indices in token order, duplicates kept.
  std::vector<std::size_t> regions() const;

  nlohmann::json to_json() const;
  static GroundedExplanation from_json(const nlohmann::json& doc);
};

// Whitespace tokenization; `#<digits>` tokens become region tokens.
GroundedExplanation parse_explanation(std::string_view text, std::size_t region_count);

// Per-op surface patterns. Pattern text is whitespace-separated words and
// `{SLOT}` placeholders; every op has a fixed set of variants.
class TemplateTable {
 public:
  struct Piece {
    bool slot = false;
    std::string text;
  };
  using Pattern = std::vector<Piece>;

  static TemplateTable defaults();
  static TemplateTable from_json(const nlohmann::json& doc);
  static TemplateTable load(const std::string& path);
  nlohmann::json to_json() const;

  const Pattern& pattern(AtomicOp op, std::string_view variant) const;
  const Pattern& answer_pattern() const { return answer_; }

 private:
  std::map<AtomicOp, std::map<std::string, Pattern, std::less<>>> patterns_;
  Pattern answer_;
};

struct ExplainerConfig {
  double min_iou = 0.5;
  MissPolicy on_miss = MissPolicy::DropToken;
  std::size_t max_mentions = 5;
  ExecConfig exec;
};

class Explainer {
 public:
  explicit Explainer(TemplateTable templates = TemplateTable::defaults(),
                     ExplainerConfig config = {});

  const ExplainerConfig& config() const { return config_; }

  // `dep_partials` and `dep_results` follow node.deps order.
  PartialExplanation render_node(const OpNode& node, const NodeResult& result,
                                 const std::vector<const PartialExplanation*>& dep_partials,
                                 const std::vector<const NodeResult*>& dep_results,
                                 const SceneGraph& g, const RegionSet& regions) const;

  GroundedExplanation compile(const ExecutionTrace& trace, const ReasoningProgram& program,
                              const SceneGraph& g, const RegionSet& regions) const;

 private:
  std::vector<Token> mention(const SceneObject& obj, std::string_view qualifier,
                             const RegionSet& regions) const;
  std::vector<Token> objects_phrase(const SceneGraph& g, const std::vector<std::string>& ids,
                                    std::string_view qualifier, std::string_view empty_label,
                                    const RegionSet& regions) const;

  TemplateTable templates_;
  ExplainerConfig config_;
};

// Program execution followed by explanation compilation.
GroundedExplanation explain(const ReasoningProgram& program, const SceneGraph& g,
                            const RegionSet& regions, const Explainer& explainer);

}  // namespace rex
