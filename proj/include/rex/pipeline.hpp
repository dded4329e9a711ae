#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rex/error.hpp"
#include "rex/explainer.hpp"
#include "rex/metrics.hpp"
#include "rex/program.hpp"
#include "rex/scene.hpp"

// Batch drivers behind the command-line subcommands.
namespace rex::pipeline {

// One line (or array element) of an input file. `doc` is unset when the line
// did not parse; `error` then says why.
struct Record {
  std::size_t line = 0;
  std::optional<nlohmann::json> doc;
  std::string error;
};

// Reads JSONL, or a single JSON array when the file starts with '['. Blank
// lines are skipped. Throws IoError when the file cannot be opened.
std::vector<Record> read_records(const std::string& path);
std::vector<Record> parse_records(const std::string& text);

// Scene and region data for every image the batch references, loaded up front
// so workers only read.
class ImageStore {
 public:
  struct Entry {
    std::optional<SceneGraph> scene;
    std::optional<RegionSet> regions;
    std::optional<Error> error;
  };

  ImageStore() = default;
  static ImageStore load(const std::string& scenes_dir, const std::string& regions_dir,
                         const std::vector<std::string>& image_ids);

  void add(SceneGraph scene, RegionSet regions);
  const Entry* find(const std::string& image_id) const;
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> warnings_;
};

std::vector<std::string> referenced_images(const std::vector<Record>& records);

struct CompileSummary {
  std::vector<std::string> lines;  // JSONL output, ordered by question_id
  std::size_t compiled = 0;
  std::map<std::string, std::size_t> skipped;  // error class -> count
  std::vector<std::string> failures;           // one message per skipped question

  std::string report() const;
};

// Compiles every record; `mapping` switches input to foreign programs.
// Per-question failures are tallied, never thrown. Output is independent of
// `workers`.
CompileSummary compile_records(const std::vector<Record>& records, const ImageStore& images,
                               const Explainer& explainer,
                               const OpMappingTable* mapping = nullptr,
                               std::size_t workers = 1);

struct CorpusStats {
  std::size_t questions = 0;
  std::map<std::string, std::size_t> operations;  // questions using the op
  std::map<std::string, std::size_t> categories;  // grounded objects per category
  std::size_t grounded_objects = 0;

  // "section,key,count,percent" rows: all operations, then the top-k categories.
  std::string csv(std::size_t top_k = 20) const;
};

CorpusStats corpus_stats(const std::vector<GroundedExplanation>& corpus);

// Nearest integer, ties to even.
std::size_t round_half_even(double x);

// Per reasoning type, picks round_half_even(fraction * count) members
// uniformly at random. Returns selected positions in ascending order.
std::vector<std::size_t> stratified_sample(const std::vector<std::string>& types,
                                           double fraction, std::uint64_t seed);

struct SampleResult {
  std::vector<std::string> lines;  // ordered by question_id
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_type;  // total, kept
  std::size_t unreadable = 0;
};

SampleResult sample_records(const std::vector<Record>& records, double fraction,
                            std::uint64_t seed);

// Pairs every reference with the prediction of the same question id; a
// missing prediction counts as an empty one.
std::vector<metrics::EvalPair> pair_records(const std::vector<GroundedExplanation>& predictions,
                                            const std::vector<GroundedExplanation>& references);

std::vector<GroundedExplanation> read_explanations(const std::string& path);

// Deterministic gradient-check report over `instances` random decoder heads.
struct GradientCheckSummary {
  std::string text;
  double max_rel_error = 0;
  bool passed = false;
};

GradientCheckSummary check_gradients_report(std::uint64_t seed, std::size_t instances,
                                            double tolerance = 1e-4);

}  // namespace rex::pipeline
