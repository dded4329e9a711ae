#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "rex/error.hpp"
#include "rex/explainer.hpp"
#include "support/world.hpp"

using namespace rex;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = REX_TEST_FIXTURES;
const std::filesystem::path kGolden = REX_TEST_GOLDEN;

struct Fig2 {
  SceneGraph g = load_scene((kFixtures / "fig2" / "scenes" / "fig2.json").string());
  RegionSet rs = load_regions((kFixtures / "fig2" / "regions" / "fig2.json").string());
  ReasoningProgram p = parse_program(
      std::string_view(rex::testing::slurp(kFixtures / "fig2" / "programs.jsonl")));
};

std::string golden_text() {
  auto s = rex::testing::slurp(kGolden / "fig2_explanation.txt");
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

ReasoningProgram program_of(const char* text) { return parse_program(std::string_view(text)); }

// Random (scene, regions, program) triples that compile.
struct Compiled {
  SceneGraph g;
  RegionSet rs;
  ReasoningProgram p;
  ExecutionTrace trace;
  GroundedExplanation e;
};

std::vector<Compiled> compiled_corpus(std::uint64_t seed, std::size_t want,
                                      const Explainer& ex = Explainer()) {
  std::mt19937_64 rng(seed);
  std::vector<Compiled> out;
  while (out.size() < want) {
    Compiled c;
    c.g = rex::testing::random_scene(rng, 8);
    c.rs = rex::testing::random_regions(rng, c.g);
    c.p = rex::testing::random_program(rng, 6, "q" + std::to_string(out.size()));
    try {
      c.trace = execute(c.p, c.g, ex.config().exec);
      c.e = ex.compile(c.trace, c.p, c.g, c.rs);
    } catch (const Error&) {
      continue;
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

TEST_CASE("fig2 compiles to the golden explanation") {
  Fig2 f;
  // regions 1 and 3 are the table and plate by IoU
  CHECK(align_object(f.g.at("t1"), f.rs).region == 1);
  CHECK(align_object(f.g.at("p1"), f.rs).region == 3);
  auto e = explain(f.p, f.g, f.rs, Explainer());
  CHECK(e.text() == golden_text());
  CHECK(e.answer == "no");
  const auto region_list = e.regions();
  std::set<std::size_t> distinct(region_list.begin(), region_list.end());
  CHECK(distinct == std::set<std::size_t>{1, 3});
  CHECK(e.grounded_objects == std::map<std::string, std::size_t>{{"p1", 3}, {"t1", 1}});
  CHECK(e.operations == std::vector<std::string>{"Select", "Verify", "Relate", "And"});
}

TEST_CASE("fig2 partials step by step") {
  Fig2 f;
  Explainer ex;
  auto trace = execute(f.p, f.g);
  std::map<std::string, PartialExplanation> partials;
  for (const auto& id : topo_order(f.p)) {
    const auto& n = f.p.node(id);
    std::vector<const PartialExplanation*> dp;
    std::vector<const NodeResult*> dr;
    for (const auto& d : n.deps) {
      dp.push_back(&partials.at(d));
      dr.push_back(&trace.result(d));
    }
    partials[id] = ex.render_node(n, trace.result(id), dp, dr, f.g, f.rs);
  }
  CHECK(partials["0"].text() == "the table #1");
  CHECK(partials["1"].text() == "the plate #3 on the table #1");
  CHECK(partials["2"].text() == "the plate #3 on the table #1 is dirty");
  CHECK(partials["3"].text() == "the plate #3 on the table #1 is not silver");
}

TEST_CASE("single select program") {
  Fig2 f;
  auto p = program_of(R"({"question_id": "s", "root": "0", "nodes": {"0": {"op": "Select", "category": "fork"}}})");
  auto e = explain(p, f.g, f.rs, Explainer());
  CHECK(e.text() == "the fork #2 so the answer is fork");
}

TEST_CASE("render variants") {
  Fig2 f;
  auto run = [&](const char* text) { return explain(program_of(text), f.g, f.rs, Explainer()).text(); };
  CHECK(run(R"({"question_id": "x", "root": "e", "nodes": {
      "s": {"op": "Select", "category": "unicorn"}, "e": {"op": "Exist", "deps": ["s"]}}})") ==
        "there is no unicorn so the answer is no");
  CHECK(run(R"({"question_id": "x", "root": "k", "nodes": {
      "s": {"op": "Select", "category": "fork"}, "k": {"op": "Query", "attribute": "color", "deps": ["s"]}}})") ==
        "the fork #2 is silver so the answer is silver");
  CHECK(run(R"({"question_id": "x", "root": "r", "nodes": {
      "s": {"op": "Select", "category": "fork"},
      "r": {"op": "Relate", "category": "table", "relation": {"predicate": "on", "direction": "object"}, "deps": ["s"]}}})") ==
        "the table #1 that the fork #2 is on so the answer is table");
  CHECK(run(R"({"question_id": "x", "root": "d", "nodes": {
      "a": {"op": "Select", "category": "fork"}, "b": {"op": "Select", "category": "plate"},
      "d": {"op": "Same", "attribute": "color", "deps": ["a", "b"]}}})") ==
        "the fork #2 is silver and the plate #3 is white so the answer is no");
  CHECK(run(R"({"question_id": "x", "root": "d", "nodes": {
      "a": {"op": "Select", "category": "table"}, "b": {"op": "Select", "category": "chair"},
      "d": {"op": "Common", "deps": ["a", "b"]}}})") ==
        "both the table #1 and the chair #4 are wooden so the answer is material");
  CHECK(run(R"({"question_id": "x", "root": "f", "nodes": {
      "a": {"op": "Select", "category": "table"},
      "r": {"op": "Relate", "relation": {"predicate": "on", "direction": "subject"}, "deps": ["a"]},
      "f": {"op": "Filter", "attribute": "metal", "deps": ["r"]}}})") ==
        "the metal fork #2 so the answer is fork");
}

TEST_CASE("multi-object mentions are capped") {
  SceneGraph g;
  g.image_id = "m";
  g.width = g.height = 1000;
  RegionSet rs;
  for (int i = 0; i < 7; ++i) {
    SceneObject o;
    o.id = "a" + std::to_string(i);
    o.name = "apple";
    o.box = {i * 100.0, 0, i * 100.0 + 50, 50};
    g.objects[o.id] = o;
    rs.regions.push_back(o.box);
  }
  auto p = program_of(R"({"question_id": "m", "root": "0", "nodes": {"0": {"op": "Select", "category": "apple"}}})");
  auto e = explain(p, g, rs, Explainer());
  CHECK(e.text() ==
        "the apple #0 and the apple #1 and the apple #2 and the apple #3 and the apple #4 "
        "and others so the answer is apple");
}

TEST_CASE("miss policy") {
  Fig2 f;
  RegionSet far{"fig2", {{0, 0, 5, 5}}};
  auto p = program_of(R"({"question_id": "s", "root": "0", "nodes": {"0": {"op": "Select", "category": "fork"}}})");
  CHECK(explain(p, f.g, far, Explainer()).text() == "the fork so the answer is fork");
  ExplainerConfig strict;
  strict.on_miss = MissPolicy::Fail;
  try {
    explain(p, f.g, far, Explainer(TemplateTable::defaults(), strict));
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AlignmentBelowThreshold);
    CHECK(e.node_id() == "0");
  }
  CHECK(parse_miss_policy("drop-token") == MissPolicy::DropToken);
  CHECK_THROWS_AS(parse_miss_policy("ignore"), Error);
}

TEST_CASE("parse_explanation") {
  auto e = parse_explanation("the dog #2 is brown", 4);
  CHECK(e.grounding == std::map<std::size_t, std::size_t>{{2, 2}});
  CHECK(e.tokens.size() == 5);
  try {
    parse_explanation("#9", 4);
    FAIL("no throw");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::RegionIndexOutOfRange);
  }
  CHECK(parse_explanation("issue #x is open", 1).grounding.empty());
}

TEST_CASE("template table validation and shipped file") {
  auto shipped = TemplateTable::load(std::string(REX_DATA_DIR) + "/templates.json");
  CHECK(shipped.to_json() == TemplateTable::defaults().to_json());

  auto doc = TemplateTable::defaults().to_json();
  doc["Exist"]["default"] = "there {CHECK_EXISTENCE} {OBJ}";
  try {
    TemplateTable::from_json(doc);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TemplateSlotError);
  }
  auto missing = TemplateTable::defaults().to_json();
  missing["Relate"].erase("object");
  CHECK_THROWS_AS(TemplateTable::from_json(missing), Error);

  // a custom wording flows through
  auto custom = TemplateTable::defaults().to_json();
  custom["Answer"]["default"] = "answer : {ANSWER}";
  Fig2 f;
  auto e = explain(f.p, f.g, f.rs, Explainer(TemplateTable::from_json(custom)));
  CHECK(e.text().ends_with("is not silver answer : no"));
}

TEST_CASE("compiled explanations: grounding, consistency, round trips") {
  const auto corpus = compiled_corpus(77, 150);
  for (const auto& c : corpus) {
    const auto& e = c.e;
    CHECK(e.answer == c.trace.answer);
    // grounding keys are exactly the #i positions
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      const bool region_word = e.tokens[i].size() > 1 && e.tokens[i][0] == '#';
      CHECK(e.grounding.count(i) == (region_word ? 1u : 0u));
    }
    for (const auto& [pos, region] : e.grounding) CHECK(region < c.rs.size());

    // argmax faithfulness and no hallucinated mentions
    std::set<std::string> selected;
    for (const auto& r : c.trace.results) selected.insert(r.objects.begin(), r.objects.end());
    for (const auto& [id, region] : e.grounded_objects) {
      CHECK(selected.count(id) == 1);
      const auto& box = c.g.at(id).box;
      for (const auto& other : c.rs.regions) CHECK(iou(box, c.rs.regions[region]) >= iou(box, other));
    }
    // every region token sits right after the name of an object grounded there
    std::set<std::size_t> grounded_regions;
    for (const auto& [id, region] : e.grounded_objects) grounded_regions.insert(region);
    for (const auto& [pos, region] : e.grounding) {
      CHECK(grounded_regions.count(region) == 1);
      REQUIRE(pos > 0);
      bool named = false;
      for (const auto& [id, r] : e.grounded_objects)
        named = named || (r == region && c.g.at(id).name == e.tokens[pos - 1]);
      CHECK(named);
    }

    // compile . parse keeps the grounding map
    auto parsed = parse_explanation(e.text(), c.rs.size());
    CHECK(parsed.grounding == e.grounding);
    CHECK(parsed.tokens == e.tokens);

    auto back = GroundedExplanation::from_json(json::parse(e.to_json().dump()));
    CHECK(back.to_json() == e.to_json());

    // deterministic
    CHECK(Explainer().compile(c.trace, c.p, c.g, c.rs).to_json().dump() == e.to_json().dump());
  }
}
