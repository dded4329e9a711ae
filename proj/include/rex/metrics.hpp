#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rex/explainer.hpp"
#include "rex/scene.hpp"

namespace rex::metrics {

// Smoothing numerator used for BLEU n-gram orders with no matches.
inline constexpr double kBleuEpsilon = 1e-9;

struct EvalPair {
  std::string question_id;
  GroundedExplanation predicted;
  GroundedExplanation reference;
};

// Lowercased whitespace tokens.
std::vector<std::string> tokenize(std::string_view text);

// Exact area of a union of boxes by coordinate compression.
double union_area(std::span<const BBox> boxes);
// IoU between the union of `a` and the union of `b`; 0 when both are empty.
double union_iou(std::span<const BBox> a, std::span<const BBox> b);

// Fraction of exact answer matches after lowercase/trim. EmptyEvalSet if no pairs.
double answer_accuracy(std::span<const EvalPair> pairs);

struct GroundingTally {
  std::optional<double> score;  // unset when no question has reference grounding
  std::size_t eligible = 0;
};

// Macro average over questions of union_iou(predicted regions, reference
// regions); questions without reference grounding are skipped.
GroundingTally grounding_score(std::span<const EvalPair> pairs,
                               const std::map<std::string, RegionSet>& regions_by_image);

struct RecallTally {
  std::size_t eligible = 0;
  std::size_t hits = 0;

  std::optional<double> rate() const {
    if (eligible == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(eligible);
  }
};

// Reference attribute values of `family` that are absent from the question
// count as eligible; hits are those present in the prediction.
RecallTally attribute_recall(std::span<const EvalPair> pairs, AttributeFamily family);

// Corpus BLEU-4, uniform weights, brevity penalty, single reference.
double bleu4(std::span<const EvalPair> pairs);
double sentence_rouge_l(const std::vector<std::string>& candidate,
                        const std::vector<std::string>& reference);
// Mean sentence-level ROUGE-L F1.
double rouge_l(std::span<const EvalPair> pairs);

struct EvalReport {
  std::size_t questions = 0;
  double accuracy = 0;
  GroundingTally grounding;
  std::map<AttributeFamily, RecallTally> recall;
  double bleu4 = 0;
  double rouge_l = 0;

  nlohmann::json to_json() const;
  std::string table() const;
};

EvalReport evaluate(std::span<const EvalPair> pairs,
                    const std::map<std::string, RegionSet>& regions_by_image);

}  // namespace rex::metrics
