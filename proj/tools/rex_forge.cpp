// rex-forge: compile reasoning programs into grounded explanations, score
// predictions, and inspect corpora.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "rex/error.hpp"
#include "rex/explainer.hpp"
#include "rex/interpreter.hpp"
#include "rex/metrics.hpp"
#include "rex/pipeline.hpp"

namespace {

constexpr int kExitFatal = 2;

struct Options {
  std::string scenes, regions, programs, templates, mapping, lexicon, out;
  std::string predictions, references, explanations;
  double min_iou = 0.5;
  std::string quantifier = "universal";
  std::string on_miss = "drop-token";
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t instances = 50;
  std::size_t top_k = 20;
};

void require_path(const std::string& path, const char* flag) {
  if (path.empty()) throw rex::Error(rex::ErrorKind::ConfigError, fmt::format("{} is required", flag));
  if (!std::filesystem::exists(path)) {
    throw rex::Error(rex::ErrorKind::IoError, fmt::format("{}: no such file or directory: {}", flag, path));
  }
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rex::Error(rex::ErrorKind::IoError, "cannot write " + path);
  out << content;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

rex::Explainer make_explainer(const Options& o) {
  rex::ExplainerConfig config;
  config.min_iou = o.min_iou;
  config.on_miss = rex::parse_miss_policy(o.on_miss);
  config.exec.quantifier = rex::parse_quantifier(o.quantifier);
  if (!o.lexicon.empty()) {
    require_path(o.lexicon, "--lexicon");
    config.exec.lexicon = rex::Lexicon::load(o.lexicon);
  }
  auto templates = rex::TemplateTable::defaults();
  if (!o.templates.empty()) {
    require_path(o.templates, "--templates");
    templates = rex::TemplateTable::load(o.templates);
  }
  return rex::Explainer(std::move(templates), std::move(config));
}

void run_compile(const Options& o) {
  require_path(o.scenes, "--scenes");
  require_path(o.regions, "--regions");
  require_path(o.programs, "--programs");
  const auto explainer = make_explainer(o);
  std::optional<rex::OpMappingTable> mapping;
  if (!o.mapping.empty()) {
    require_path(o.mapping, "--mapping");
    mapping = rex::OpMappingTable::load(o.mapping);
  }

  const auto records = rex::pipeline::read_records(o.programs);
  const auto images = rex::pipeline::ImageStore::load(
      o.scenes, o.regions, rex::pipeline::referenced_images(records));
  for (const auto& w : images.warnings()) std::cerr << "warning: " << w << '\n';

  const auto summary = rex::pipeline::compile_records(
      records, images, explainer, mapping ? &*mapping : nullptr, o.workers);
  write_output(o.out, join_lines(summary.lines));
  for (const auto& f : summary.failures) std::cerr << "skipped " << f << '\n';
  std::cerr << summary.report();
}

void run_eval(const Options& o) {
  require_path(o.predictions, "--predictions");
  require_path(o.references, "--references");
  require_path(o.regions, "--regions");
  const auto predictions = rex::pipeline::read_explanations(o.predictions);
  const auto references = rex::pipeline::read_explanations(o.references);
  const auto pairs = rex::pipeline::pair_records(predictions, references);

  std::map<std::string, rex::RegionSet> regions;
  std::set<std::string> images;
  for (const auto& p : pairs) images.insert(p.reference.image_id);
  for (const auto& id : images) {
    const auto path = (std::filesystem::path(o.regions) / (id + ".json")).string();
    require_path(path, "--regions");
    regions.emplace(id, rex::load_regions(path));
  }

  const auto report = rex::metrics::evaluate(pairs, regions);
  write_output(o.out, report.to_json().dump(2) + "\n");
  (o.out.empty() ? std::cerr : std::cout) << report.table();
}

void run_stats(const Options& o) {
  require_path(o.explanations, "--explanations");
  const auto corpus = rex::pipeline::read_explanations(o.explanations);
  write_output(o.out, rex::pipeline::corpus_stats(corpus).csv(o.top_k));
}

void run_sample(const Options& o) {
  require_path(o.programs, "--programs");
  const auto records = rex::pipeline::read_records(o.programs);
  const auto result = rex::pipeline::sample_records(records, o.fraction, o.seed);
  write_output(o.out, join_lines(result.lines));
  for (const auto& [type, counts] : result.per_type) {
    std::cerr << fmt::format("{}: kept {} of {}\n", type.empty() ? "(untyped)" : type,
                             counts.second, counts.first);
  }
  if (result.unreadable) std::cerr << fmt::format("skipped {} unreadable record(s)\n", result.unreadable);
}

int run_check_grads(const Options& o) {
  const auto summary = rex::pipeline::check_gradients_report(o.seed, o.instances);
  write_output(o.out, summary.text);
  return summary.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reasoning-program compiler and explanation evaluation toolkit", "rex-forge"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (TOML/INI); flags override it")
      ->envname("REX_FORGE_CONFIG");

  Options o;
  app.add_option("--scenes", o.scenes, "Directory of <image_id>.json scene graphs");
  app.add_option("--regions", o.regions, "Directory of <image_id>.json region sets");
  app.add_option("--programs", o.programs, "Programs file (JSONL or JSON array)");
  app.add_option("--templates", o.templates, "Template table (JSON)");
  app.add_option("--mapping", o.mapping, "Operation mapping table; input programs are GQA-style");
  app.add_option("--lexicon", o.lexicon, "Synonyms, value orders and comparators (JSON)");
  app.add_option("--out", o.out, "Output file (default: stdout)");
  app.add_option("--predictions", o.predictions, "Predicted explanations (JSONL)");
  app.add_option("--references", o.references, "Reference explanations (JSONL)");
  app.add_option("--explanations", o.explanations, "Compiled explanations (JSONL)");
  app.add_option("--min-iou", o.min_iou, "Minimum IoU for a region token")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--quantifier", o.quantifier, "Multi-object quantification")
      ->check(CLI::IsMember({"universal", "existential"}))
      ->capture_default_str();
  app.add_option("--on-miss", o.on_miss, "Policy for objects below --min-iou")
      ->check(CLI::IsMember({"drop-token", "fail"}))
      ->capture_default_str();
  app.add_option("--fraction", o.fraction, "Sampling fraction in (0, 1]")->capture_default_str();
  app.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--instances", o.instances, "Random instances for check-grads")->capture_default_str();
  app.add_option("--top-k", o.top_k, "Categories listed by stats")->capture_default_str();

  auto* compile = app.add_subcommand("compile", "Execute programs and emit grounded explanations");
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  auto* stats = app.add_subcommand("stats", "Operation and grounded-category distributions (CSV)");
  auto* sample = app.add_subcommand("sample", "Proportional subset per reasoning type");
  auto* grads = app.add_subcommand("check-grads", "Verify decoder-head gradients");

  CLI11_PARSE(app, argc, argv);

  try {
    if (compile->parsed()) run_compile(o);
    else if (eval->parsed()) run_eval(o);
    else if (stats->parsed()) run_stats(o);
    else if (sample->parsed()) run_sample(o);
    else if (grads->parsed()) return run_check_grads(o);
  } catch (const rex::Error& e) {
    std::cerr << "rex-forge: " << e.what() << '\n';
    return kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "rex-forge: " << e.what() << '\n';
    return kExitFatal;
  }
  return 0;
}
