#include "rex/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "rex/decoder_math.hpp"

namespace rex::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<Record> parse_records(const std::string& text) {
  std::vector<Record> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return out;

  if (text[first] == '[') {
    try {
      auto doc = json::parse(text);
      std::size_t i = 0;
      for (auto& item : doc) out.push_back(Record{++i, std::move(item), {}});
    } catch (const json::exception& e) {
      out.push_back(Record{1, std::nullopt, e.what()});
    }
    return out;
  }

  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Record{n, json::parse(line), {}});
    } catch (const json::exception& e) {
      out.push_back(Record{n, std::nullopt, e.what()});
    }
  }
  return out;
}

std::vector<Record> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_records(buf.str());
}

// ---------------------------------------------------------------------------

ImageStore ImageStore::load(const std::string& scenes_dir, const std::string& regions_dir,
                            const std::vector<std::string>& image_ids) {
  ImageStore store;
  for (const auto& id : image_ids) {
    Entry entry;
    const auto scene_path = (fs::path(scenes_dir) / (id + ".json")).string();
    const auto region_path = (fs::path(regions_dir) / (id + ".json")).string();
    try {
      if (!fs::exists(scene_path)) {
        throw Error(ErrorKind::MissingScene, "no scene file " + scene_path);
      }
      if (!fs::exists(region_path)) {
        throw Error(ErrorKind::MissingScene, "no region file " + region_path);
      }
      entry.scene = load_scene(scene_path, &store.warnings_);
      entry.regions = load_regions(region_path);
    } catch (const Error& e) {
      entry.scene.reset();
      entry.regions.reset();
      entry.error = e;
    }
    store.entries_.emplace(id, std::move(entry));
  }
  return store;
}

void ImageStore::add(SceneGraph scene, RegionSet regions) {
  Entry entry;
  const auto id = scene.image_id;
  entry.scene = std::move(scene);
  entry.regions = std::move(regions);
  entries_[id] = std::move(entry);
}

const ImageStore::Entry* ImageStore::find(const std::string& image_id) const {
  auto it = entries_.find(image_id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> referenced_images(const std::vector<Record>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (!r.doc || !r.doc->is_object()) continue;
    auto it = r.doc->find("image_id");
    if (it != r.doc->end() && it->is_string()) ids.push_back(it->get<std::string>());
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------

namespace {

std::string question_id_of(const Record& r) {
  if (!r.doc || !r.doc->is_object()) return {};
  auto it = r.doc->find("question_id");
  return (it != r.doc->end() && it->is_string()) ? it->get<std::string>() : std::string();
}

struct Outcome {
  std::string question_id;
  std::optional<std::string> line;
  std::string error_class;
  std::string message;
};

Outcome compile_one(const Record& record, const ImageStore& images, const Explainer& explainer,
                    const OpMappingTable* mapping) {
  Outcome out;
  out.question_id = question_id_of(record);
  auto fail = [&](std::string_view cls, const std::string& msg) {
    out.error_class = std::string(cls);
    out.message = fmt::format("line {} ({}): {}", record.line,
                              out.question_id.empty() ? "?" : out.question_id, msg);
    return out;
  };
  if (!record.doc) return fail(to_string(ErrorKind::ParseError), record.error);
  try {
    const auto program = mapping ? map_source_program(*record.doc, *mapping)
                                 : parse_program(*record.doc);
    const auto* entry = images.find(program.image_id);
    if (!entry) {
      throw Error(ErrorKind::MissingScene, "no scene loaded for image '" + program.image_id + "'");
    }
    if (entry->error) throw *entry->error;
    const auto e = explain(program, *entry->scene, *entry->regions, explainer);
    out.line = e.to_json().dump();
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what());
  } catch (const json::exception& e) {
    return fail(to_string(ErrorKind::ParseError), e.what());
  }
  return out;
}

}  // namespace

std::string CompileSummary::report() const {
  std::size_t total_skipped = 0;
  for (const auto& [cls, n] : skipped) total_skipped += n;
  std::string out = fmt::format("compiled {} question(s), skipped {}\n", compiled, total_skipped);
  for (const auto& [cls, n] : skipped) out += fmt::format("  {}: {}\n", cls, n);
  return out;
}

CompileSummary compile_records(const std::vector<Record>& records, const ImageStore& images,
                               const Explainer& explainer, const OpMappingTable* mapping,
                               std::size_t workers) {
  std::vector<Outcome> outcomes(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      outcomes[i] = compile_one(records[i], images, explainer, mapping);
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(records.size(), 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return outcomes[a].question_id < outcomes[b].question_id;
  });

  CompileSummary summary;
  for (auto i : order) {
    auto& o = outcomes[i];
    if (o.line) {
      summary.lines.push_back(std::move(*o.line));
      ++summary.compiled;
    } else {
      ++summary.skipped[o.error_class];
      summary.failures.push_back(std::move(o.message));
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------

CorpusStats corpus_stats(const std::vector<GroundedExplanation>& corpus) {
  CorpusStats s;
  s.questions = corpus.size();
  for (int i = 0; i < kAtomicOpCount; ++i) {
    s.operations[std::string(to_string(static_cast<AtomicOp>(i)))] = 0;
  }
  for (const auto& e : corpus) {
    std::vector<std::string> ops = e.operations;
    std::sort(ops.begin(), ops.end());
    ops.erase(std::unique(ops.begin(), ops.end()), ops.end());
    for (const auto& op : ops) ++s.operations[op];
    for (const auto& [id, name] : e.categories) {
      ++s.categories[name];
      ++s.grounded_objects;
    }
  }
  return s;
}

std::string CorpusStats::csv(std::size_t top_k) const {
  auto pct = [](std::size_t n, std::size_t total) {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(n) / static_cast<double>(total);
  };
  std::string out = "section,key,count,percent\n";
  for (int i = 0; i < kAtomicOpCount; ++i) {
    const std::string name(to_string(static_cast<AtomicOp>(i)));
    const auto it = operations.find(name);
    const std::size_t n = it == operations.end() ? 0 : it->second;
    out += fmt::format("operation,{},{},{:.4f}\n", name, n, pct(n, questions));
  }
  std::vector<std::pair<std::string, std::size_t>> cats(categories.begin(), categories.end());
  std::stable_sort(cats.begin(), cats.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (cats.size() > top_k) cats.resize(top_k);
  for (const auto& [name, n] : cats) {
    out += fmt::format("category,{},{},{:.4f}\n", name, n, pct(n, grounded_objects));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t round_half_even(double x) {
  return static_cast<std::size_t>(std::nearbyint(x));
}

namespace {

// Uniform draw in [0, bound) from raw 64-bit output; same sequence on every
// standard library.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

}  // namespace

std::vector<std::size_t> stratified_sample(const std::vector<std::string>& types,
                                           double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::FractionOutOfRange,
                fmt::format("fraction {} is outside (0, 1]", fraction));
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < types.size(); ++i) groups[types[i]].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& [type, members] : groups) {
    const std::size_t k =
        std::min(members.size(), round_half_even(fraction * static_cast<double>(members.size())));
    for (std::size_t j = 0; j < k; ++j) {
      const auto pick = j + bounded(rng, members.size() - j);
      std::swap(members[j], members[pick]);
    }
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<long>(k));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SampleResult sample_records(const std::vector<Record>& records, double fraction,
                            std::uint64_t seed) {
  SampleResult result;
  std::vector<const json*> docs;
  std::vector<std::string> types;
  for (const auto& r : records) {
    if (!r.doc || !r.doc->is_object() || question_id_of(r).empty()) {
      ++result.unreadable;
      continue;
    }
    docs.push_back(&*r.doc);
    types.push_back(r.doc->value("reasoning_type", ""));
  }
  auto picked = stratified_sample(types, fraction, seed);
  for (const auto& t : types) ++result.per_type[t].first;
  for (auto i : picked) ++result.per_type[types[i]].second;

  std::stable_sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
    return (*docs[a])["question_id"].get<std::string>() <
           (*docs[b])["question_id"].get<std::string>();
  });
  for (auto i : picked) result.lines.push_back(docs[i]->dump());
  return result;
}

// ---------------------------------------------------------------------------

std::vector<metrics::EvalPair> pair_records(const std::vector<GroundedExplanation>& predictions,
                                            const std::vector<GroundedExplanation>& references) {
  std::map<std::string, const GroundedExplanation*> by_id;
  for (const auto& p : predictions) by_id[p.question_id] = &p;
  std::vector<const GroundedExplanation*> refs;
  for (const auto& r : references) refs.push_back(&r);
  std::stable_sort(refs.begin(), refs.end(),
                   [](auto* a, auto* b) { return a->question_id < b->question_id; });

  std::vector<metrics::EvalPair> pairs;
  for (const auto* ref : refs) {
    metrics::EvalPair pair;
    pair.question_id = ref->question_id;
    pair.reference = *ref;
    if (auto it = by_id.find(ref->question_id); it != by_id.end()) {
      pair.predicted = *it->second;
    } else {
      pair.predicted.question_id = ref->question_id;
      pair.predicted.image_id = ref->image_id;
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<GroundedExplanation> read_explanations(const std::string& path) {
  std::vector<GroundedExplanation> out;
  for (const auto& r : read_records(path)) {
    if (!r.doc) {
      throw Error(ErrorKind::ParseError, fmt::format("{}:{}: {}", path, r.line, r.error));
    }
    try {
      out.push_back(GroundedExplanation::from_json(*r.doc));
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, fmt::format("{}:{}: {}", path, r.line, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

GradientCheckSummary check_gradients_report(std::uint64_t seed, std::size_t instances,
                                            double tolerance) {
  std::mt19937_64 rng(seed);
  auto draw = [&](std::size_t lo, std::size_t hi) { return lo + bounded(rng, hi - lo + 1); };

  GradientCheckSummary summary;
  std::string& text = summary.text;
  text += fmt::format("gradient check: seed={} instances={} h=1e-05 tolerance={:.1e}\n", seed,
                      instances, tolerance);
  text += fmt::format("{:>4} {:>2} {:>3} {:>2} {:>2} {:>12} {:>12} {:>12} {:>12}\n", "id", "N",
                      "K", "D", "L", "rel(T)", "rel(W_g)", "rel(W_f)", "abs");
  for (std::size_t i = 0; i < instances; ++i) {
    decoder::InstanceShape shape;
    shape.regions = draw(1, 5);
    shape.vocab = draw(shape.regions + 1, 12);
    shape.features = draw(1, 8);
    shape.steps = draw(2, 5);
    const auto inst = decoder::random_instance(rng, shape);
    const auto targets = decoder::random_targets(rng, inst);
    const auto r = decoder::check_gradients(inst, targets);
    summary.max_rel_error = std::max(summary.max_rel_error, r.max_rel_error);
    text += fmt::format("{:>4} {:>2} {:>3} {:>2} {:>2} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}\n", i,
                        shape.regions, shape.vocab, shape.features, shape.steps, r.max_rel_text,
                        r.max_rel_gate_weights, r.max_rel_output_weights, r.max_abs_error);
  }
  summary.passed = summary.max_rel_error < tolerance;
  text += fmt::format("max relative error {:.3e}: {}\n", summary.max_rel_error,
                      summary.passed ? "PASS" : "FAIL");
  return summary;
}

}  // namespace rex::pipeline
