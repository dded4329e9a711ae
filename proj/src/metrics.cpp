#include "rex/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "rex/error.hpp"

namespace rex::metrics {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) {
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(std::move(w));
  }
  return out;
}

namespace {

std::vector<std::string> lowered(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto low = tokenize(t);
    out.insert(out.end(), low.begin(), low.end());
  }
  return out;
}

// Question words lose surrounding punctuation ("red?" -> "red").
std::vector<std::string> question_words(std::string_view question) {
  std::vector<std::string> out;
  for (auto& w : tokenize(question)) {
    auto b = std::find_if(w.begin(), w.end(), [](unsigned char c) { return std::isalnum(c); });
    auto e = std::find_if(w.rbegin(), w.rend(), [](unsigned char c) { return std::isalnum(c); });
    if (b == w.end()) continue;
    out.emplace_back(b, e.base());
  }
  return out;
}

bool contains_span(const std::vector<std::string>& haystack,
                   const std::vector<std::string>& needle) {
  if (needle.empty()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

std::string normalize_answer(std::string_view a) {
  auto words = tokenize(a);
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// Order-independent sum: permuting the inputs must not move the last bit.
double sorted_sum(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0);
}

// Area covered by the boxes selected by `inside`, over the compressed grid of
// every box edge.
template <typename Inside>
double covered_area(std::span<const BBox> all, Inside&& inside) {
  std::vector<double> xs, ys;
  for (const auto& b : all) {
    xs.insert(xs.end(), {b.x1, b.x2});
    ys.insert(ys.end(), {b.y1, b.y2});
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  double area = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      const double cx = 0.5 * (xs[i] + xs[i + 1]);
      const double cy = 0.5 * (ys[j] + ys[j + 1]);
      if (inside(cx, cy)) area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
    }
  }
  return area;
}

bool covers(std::span<const BBox> boxes, double x, double y) {
  return std::any_of(boxes.begin(), boxes.end(), [&](const BBox& b) {
    return b.x1 < x && x < b.x2 && b.y1 < y && y < b.y2;
  });
}

std::vector<BBox> boxes_for(const GroundedExplanation& e, const RegionSet& rs) {
  std::vector<BBox> out;
  for (const auto& [pos, region] : e.grounding) {
    if (region >= rs.size()) {
      throw Error(ErrorKind::RegionIndexOutOfRange,
                  fmt::format("question '{}' names region {} but image '{}' has {}",
                              e.question_id, region, rs.image_id, rs.size()));
    }
    out.push_back(rs.regions[region]);
  }
  return out;
}

}  // namespace

double union_area(std::span<const BBox> boxes) {
  return covered_area(boxes, [&](double x, double y) { return covers(boxes, x, y); });
}

double union_iou(std::span<const BBox> a, std::span<const BBox> b) {
  std::vector<BBox> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  const double inter =
      covered_area(all, [&](double x, double y) { return covers(a, x, y) && covers(b, x, y); });
  const double uni =
      covered_area(all, [&](double x, double y) { return covers(a, x, y) || covers(b, x, y); });
  return uni > 0 ? inter / uni : 0.0;
}

double answer_accuracy(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::EmptyEvalSet, "no question pairs to score");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    correct += normalize_answer(p.predicted.answer) == normalize_answer(p.reference.answer);
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

GroundingTally grounding_score(std::span<const EvalPair> pairs,
                               const std::map<std::string, RegionSet>& regions_by_image) {
  std::vector<double> scores;
  for (const auto& p : pairs) {
    if (p.reference.grounding.empty()) continue;
    const auto& image = p.reference.image_id.empty() ? p.predicted.image_id : p.reference.image_id;
    auto it = regions_by_image.find(image);
    if (it == regions_by_image.end()) {
      throw Error(ErrorKind::ConfigError,
                  fmt::format("no region set for image '{}' (question '{}')", image,
                              p.question_id));
    }
    const auto pred = boxes_for(p.predicted, it->second);
    const auto ref = boxes_for(p.reference, it->second);
    scores.push_back(union_iou(pred, ref));
  }
  GroundingTally t;
  t.eligible = scores.size();
  if (!scores.empty()) t.score = sorted_sum(scores) / static_cast<double>(scores.size());
  return t;
}

RecallTally attribute_recall(std::span<const EvalPair> pairs, AttributeFamily family) {
  RecallTally t;
  for (const auto& p : pairs) {
    const auto question = question_words(p.reference.question);
    const auto predicted = lowered(p.predicted.tokens);
    for (const auto& a : p.reference.attributes) {
      if (a.family != family) continue;
      const auto value = tokenize(a.value);
      if (value.empty() || contains_span(question, value)) continue;
      ++t.eligible;
      t.hits += contains_span(predicted, value);
    }
  }
  return t;
}

double bleu4(std::span<const EvalPair> pairs) {
  std::array<double, 4> matched{}, total{};
  double cand_len = 0, ref_len = 0;
  for (const auto& p : pairs) {
    const auto cand = lowered(p.predicted.tokens);
    const auto ref = lowered(p.reference.tokens);
    cand_len += static_cast<double>(cand.size());
    ref_len += static_cast<double>(ref.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      std::map<std::vector<std::string>, int> ref_counts, cand_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) {
        ++ref_counts[{ref.begin() + static_cast<long>(i), ref.begin() + static_cast<long>(i + n)}];
      }
      for (std::size_t i = 0; i + n <= cand.size(); ++i) {
        ++cand_counts[{cand.begin() + static_cast<long>(i), cand.begin() + static_cast<long>(i + n)}];
      }
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
        total[n - 1] += count;
      }
    }
  }
  if (cand_len == 0) return 0.0;
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  double log_sum = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double num = matched[n] > 0 ? matched[n] : kBleuEpsilon;
    log_sum += 0.25 * std::log(num / std::max(total[n], 1.0));
  }
  return bp * std::exp(log_sum);
}

double sentence_rouge_l(const std::vector<std::string>& candidate,
                        const std::vector<std::string>& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<std::size_t> prev(reference.size() + 1, 0), cur(reference.size() + 1, 0);
  for (const auto& c : candidate) {
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      cur[j] = c == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[reference.size()]);
  if (lcs == 0) return 0.0;
  const double precision = lcs / static_cast<double>(candidate.size());
  const double recall = lcs / static_cast<double>(reference.size());
  return 2 * precision * recall / (precision + recall);
}

double rouge_l(std::span<const EvalPair> pairs) {
  if (pairs.empty()) return 0.0;
  std::vector<double> scores;
  for (const auto& p : pairs) {
    scores.push_back(sentence_rouge_l(lowered(p.predicted.tokens), lowered(p.reference.tokens)));
  }
  return sorted_sum(scores) / static_cast<double>(scores.size());
}

EvalReport evaluate(std::span<const EvalPair> pairs,
                    const std::map<std::string, RegionSet>& regions_by_image) {
  EvalReport r;
  r.questions = pairs.size();
  r.accuracy = answer_accuracy(pairs);
  r.grounding = grounding_score(pairs, regions_by_image);
  for (auto f : kEvaluatedFamilies) r.recall[f] = attribute_recall(pairs, f);
  r.bleu4 = bleu4(pairs);
  r.rouge_l = rouge_l(pairs);
  return r;
}

namespace {

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? fmt::format("{:.4f}", *v) : std::string("n/a");
}

}  // namespace

json EvalReport::to_json() const {
  json recall_json = json::object(), eligible = json::object(), hits = json::object();
  for (const auto& [family, tally] : recall) {
    const std::string key(to_string(family));
    recall_json[key] = optional_number(tally.rate());
    eligible[key] = tally.eligible;
    hits[key] = tally.hits;
  }
  return {{"questions", questions},
          {"accuracy", accuracy},
          {"grounding", optional_number(grounding.score)},
          {"grounding_averaging", "macro over questions with reference grounding"},
          {"bleu4", bleu4},
          {"rouge_l", rouge_l},
          {"attribute_recall", std::move(recall_json)},
          {"counts",
           {{"grounding_eligible", grounding.eligible},
            {"recall_eligible", std::move(eligible)},
            {"recall_hits", std::move(hits)}}}};
}

std::string EvalReport::table() const {
  std::string out = "# grounding: macro-averaged over questions with reference grounding\n";
  out += fmt::format("{:<20} {:>10} {:>10}\n", "metric", "score", "count");
  out += fmt::format("{:<20} {:>10.4f} {:>10}\n", "accuracy", accuracy, questions);
  out += fmt::format("{:<20} {:>10} {:>10}\n", "grounding", format_optional(grounding.score),
                     grounding.eligible);
  out += fmt::format("{:<20} {:>10.4f} {:>10}\n", "bleu4", bleu4, questions);
  out += fmt::format("{:<20} {:>10.4f} {:>10}\n", "rouge_l", rouge_l, questions);
  for (const auto& [family, tally] : recall) {
    out += fmt::format("{:<20} {:>10} {:>10}\n", fmt::format("recall/{}", to_string(family)),
                       format_optional(tally.rate()), tally.eligible);
  }
  return out;
}

}  // namespace rex::metrics
