#include <algorithm>
#include <filesystem>
#include <functional>
#include <random>
#include <set>

#include "doctest.h"
#include "rex/error.hpp"
#include "rex/program.hpp"
#include "support/world.hpp"

using namespace rex;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = REX_TEST_FIXTURES;
const std::filesystem::path kData = REX_DATA_DIR;

ReasoningProgram fig2() {
  auto line = rex::testing::slurp(kFixtures / "fig2" / "programs.jsonl");
  return parse_program(std::string_view(line));
}

ErrorKind kind_of(const std::function<void()>& f, std::string* node = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (node) *node = e.node_id();
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::ConfigError;
}

json minimal(json nodes, std::string root) {
  return {{"question_id", "q"}, {"question", "?"}, {"reasoning_type", "t"},
          {"root", root}, {"nodes", nodes}};
}

// Every topological order of a small DAG, by brute force.
void all_orders(const ReasoningProgram& p, std::vector<std::string>& cur,
                std::set<std::string>& done, std::vector<std::vector<std::string>>& out) {
  if (cur.size() == p.nodes.size()) {
    out.push_back(cur);
    return;
  }
  for (const auto& [id, n] : p.nodes) {
    if (done.count(id)) continue;
    if (!std::all_of(n.deps.begin(), n.deps.end(), [&](auto& d) { return done.count(d) > 0; }))
      continue;
    done.insert(id);
    cur.push_back(id);
    all_orders(p, cur, done, out);
    cur.pop_back();
    done.erase(id);
  }
}

}  // namespace

TEST_CASE("fig2 program parses into five nodes rooted at And") {
  auto p = fig2();
  CHECK(p.nodes.size() == 5);
  CHECK(p.root == "4");
  CHECK(p.node("4").op == AtomicOp::And);
  CHECK(p.node("1").relation->direction == RelationDirection::Subject);
  CHECK(topo_order(p) == std::vector<std::string>{"0", "1", "2", "3", "4"});
}

TEST_CASE("single select is a valid program") {
  auto p = parse_program(minimal({{"s", {{"op", "Select"}, {"category", "dog"}, {"deps", json::array()}}}}, "s"));
  CHECK(p.root == "s");
  CHECK(topo_order(p) == std::vector<std::string>{"s"});
}

TEST_CASE("arity, cycle and parse errors name the node") {
  std::string node;
  auto one_dep_and = minimal({{"s", {{"op", "Select"}, {"category", "dog"}}},
                              {"e", {{"op", "Exist"}, {"deps", {"s"}}}},
                              {"x", {{"op", "And"}, {"deps", {"e"}}}}},
                             "x");
  CHECK(kind_of([&] { parse_program(one_dep_and); }, &node) == ErrorKind::ArityError);
  CHECK(node == "x");

  auto select_without_category = minimal({{"s", {{"op", "Select"}}}}, "s");
  CHECK(kind_of([&] { parse_program(select_without_category); }) == ErrorKind::ArityError);

  auto verify_without_attr = minimal({{"s", {{"op", "Select"}, {"category", "dog"}}},
                                      {"v", {{"op", "Verify"}, {"deps", {"s"}}}}},
                                     "v");
  CHECK(kind_of([&] { parse_program(verify_without_attr); }, &node) == ErrorKind::ArityError);
  CHECK(node == "v");

  auto cyclic = minimal({{"a", {{"op", "Filter"}, {"attribute", "red"}, {"deps", {"b"}}}},
                         {"b", {{"op", "Filter"}, {"attribute", "red"}, {"deps", {"a"}}}},
                         {"c", {{"op", "Exist"}, {"deps", {"a"}}}}},
                        "c");
  CHECK(kind_of([&] { parse_program(cyclic); }, &node) == ErrorKind::CycleError);
  CHECK(node == "a");

  auto unknown_op = minimal({{"s", {{"op", "Teleport"}, {"category", "dog"}}}}, "s");
  CHECK(kind_of([&] { parse_program(unknown_op); }) == ErrorKind::ParseError);

  auto dangling = minimal({{"e", {{"op", "Exist"}, {"deps", {"nope"}}}}}, "e");
  CHECK(kind_of([&] { parse_program(dangling); }) == ErrorKind::ParseError);

  auto two_roots = minimal({{"s", {{"op", "Select"}, {"category", "dog"}}},
                            {"t", {{"op", "Select"}, {"category", "cat"}}}},
                           "s");
  CHECK_THROWS_AS(parse_program(two_roots), Error);

  CHECK(kind_of([] { parse_program(std::string_view("{not json")); }) == ErrorKind::ParseError);
}

TEST_CASE("diamond topo order is the lexicographically smallest valid order") {
  auto p = parse_program(minimal({{"A", {{"op", "Select"}, {"category", "dog"}}},
                                  {"C", {{"op", "Verify"}, {"attribute", "red"}, {"deps", {"A"}}}},
                                  {"B", {{"op", "Verify"}, {"attribute", "big"}, {"deps", {"A"}}}},
                                  {"D", {{"op", "And"}, {"deps", {"C", "B"}}}}},
                                 "D"));
  std::vector<std::vector<std::string>> orders;
  std::vector<std::string> cur;
  std::set<std::string> done;
  all_orders(p, cur, done, orders);
  REQUIRE(orders.size() == 2);
  const auto smallest = *std::min_element(orders.begin(), orders.end());
  CHECK(topo_order(p) == smallest);
  CHECK(topo_order(p) == std::vector<std::string>{"A", "B", "C", "D"});
}

TEST_CASE("topo order respects every edge on random programs") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    auto p = rex::testing::random_program(rng, 1 + rex::testing::pick(rng, 8));
    auto order = topo_order(p);
    CHECK(order.size() == p.nodes.size());
    std::map<std::string, std::size_t> pos;
    for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = k;
    CHECK(pos.size() == p.nodes.size());
    for (const auto& [id, n] : p.nodes)
      for (const auto& d : n.deps) CHECK(pos.at(d) < pos.at(id));
    CHECK(order.back() == p.root);
  }
}

TEST_CASE("parse of serialize is the identity") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 500; ++i) {
    auto p = rex::testing::random_program(rng, 6, "q" + std::to_string(i));
    auto text = program_to_json(p).dump();
    auto back = parse_program(std::string_view(text));
    CHECK(back == p);
    CHECK(program_to_json(back).dump() == text);
  }
}

TEST_CASE("source programs map through the shipped table") {
  auto table = OpMappingTable::load((kData / "gqa_mapping.json").string());
  json src = {{"question_id", "g1"},
              {"image_id", "fig2"},
              {"semantic",
               {{{"operation", "select"}, {"argument", "table (722)"}, {"dependencies", json::array()}},
                {{"operation", "relate"}, {"argument", "plate,on,s (724)"}, {"dependencies", {0}}},
                {{"operation", "filter color"}, {"argument", "red"}, {"dependencies", {1}}},
                {{"operation", "verify material"}, {"argument", "metal"}, {"dependencies", {2}}},
                {{"operation", "query color"}, {"argument", ""}, {"dependencies", {2}}},
                {{"operation", "choose larger"}, {"argument", ""}, {"dependencies", {0, 2}}},
                {{"operation", "exist"}, {"argument", "?"}, {"dependencies", {1}}},
                {{"operation", "or"}, {"argument", ""}, {"dependencies", {3, 6}}},
                {{"operation", "same color"}, {"argument", ""}, {"dependencies", {0, 1}}},
                {{"operation", "and"}, {"argument", ""}, {"dependencies", {7, 8}}}}}};
  // 4, 5 and the top-level `and` are all sinks; keep one sink by dropping 4 and 5
  src["semantic"].erase(4);
  src["semantic"].erase(4);
  for (auto& step : src["semantic"])
    for (auto& d : step["dependencies"])
      if (d.get<int>() > 5) d = d.get<int>() - 2;
  auto p = map_source_program(src, table);
  CHECK(p.nodes.size() == 8);
  CHECK(p.node("0").op == AtomicOp::Select);
  CHECK(*p.node("0").category == "table");
  CHECK(p.node("1").op == AtomicOp::Relate);
  CHECK(*p.node("1").category == "plate");
  CHECK(p.node("1").relation == RelationSpec{"on", RelationDirection::Subject});
  CHECK(p.node("2").op == AtomicOp::Filter);
  CHECK(*p.node("2").attribute == "red");
  CHECK(*p.node("3").attribute == "metal");
  CHECK(*p.node("6").attribute == "color");
  CHECK(p.root == "7");

  // graph shape is preserved under i <-> zero-padded id
  for (std::size_t i = 0; i < src["semantic"].size(); ++i) {
    std::vector<std::string> want;
    for (const auto& d : src["semantic"][i]["dependencies"]) want.push_back(std::to_string(d.get<int>()));
    CHECK(p.node(std::to_string(i)).deps == want);
  }

  json choose = {{"question_id", "g2"},
                 {"program",
                  {{{"operation", "select"}, {"argument", "dog"}, {"dependencies", json::array()}},
                   {{"operation", "select"}, {"argument", "cat"}, {"dependencies", json::array()}},
                   {{"operation", "choose larger"}, {"argument", ""}, {"dependencies", {0, 1}}}}}};
  auto c = map_source_program(choose, table);
  CHECK(c.node("2").op == AtomicOp::Compare);
  CHECK(c.node("2").choose);
  CHECK(*c.node("2").comparator == "larger");
  CHECK(*c.node("2").attribute == "size");
}

TEST_CASE("mapping shape preservation on random programs") {
  // A table mapping lowercase op names straight through.
  auto table = OpMappingTable::from_json(json::parse(R"([
    {"source": "select", "op": "Select", "extract": {"category": "arg"}},
    {"source": "exist", "op": "Exist"},
    {"source": "filter", "op": "Filter", "extract": {"attribute": "arg:0", "category": "arg:1"}},
    {"source": "query", "op": "Query", "extract": {"attribute": "arg"}},
    {"source": "verify", "op": "Verify", "extract": {"attribute": "arg"}},
    {"source": "relate", "op": "Relate", "extract": {"category": "arg:0", "predicate": "arg:1", "direction": "arg:2"}},
    {"source": "common", "op": "Common"},
    {"source": "same", "op": "Same", "extract": {"attribute": "arg"}},
    {"source": "different", "op": "Different", "extract": {"attribute": "arg"}},
    {"source": "compare", "op": "Compare", "extract": {"attribute": "arg:0", "comparator": "arg:1", "choose": "arg:2"}},
    {"source": "and", "op": "And"},
    {"source": "or", "op": "Or"}
  ])"));
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    auto p = rex::testing::random_program(rng, 6);
    auto order = topo_order(p);
    std::map<std::string, int> index;
    for (std::size_t k = 0; k < order.size(); ++k) index[order[k]] = static_cast<int>(k);
    json steps = json::array();
    for (const auto& id : order) {
      const auto& n = p.node(id);
      std::string op(to_string(n.op));
      std::transform(op.begin(), op.end(), op.begin(), ::tolower);
      std::string arg;
      if (n.op == AtomicOp::Select) arg = *n.category;
      else if (n.op == AtomicOp::Relate)
        arg = (n.category ? *n.category : "_") + "," + n.relation->predicate + "," +
              std::string(to_string(n.relation->direction));
      else if (n.op == AtomicOp::Compare)
        arg = *n.attribute + "," + *n.comparator + "," + (n.choose ? "true" : "false");
      else if (n.op == AtomicOp::Filter) arg = *n.attribute + "," + (n.category ? *n.category : "_");
      else if (n.attribute) arg = *n.attribute;
      json deps = json::array();
      for (const auto& d : n.deps) deps.push_back(index[d]);
      steps.push_back({{"operation", op}, {"argument", arg}, {"dependencies", deps}});
    }
    auto mapped = map_source_program({{"question_id", p.question_id}, {"program", steps}}, table);
    REQUIRE(mapped.nodes.size() == p.nodes.size());
    const int width = static_cast<int>(std::to_string(order.size() - 1).size());
    auto padded = [&](int k) {
      auto s = std::to_string(k);
      return std::string(width - s.size(), '0') + s;
    };
    for (const auto& id : order) {
      const auto& orig = p.node(id);
      const auto& m = mapped.node(padded(index[id]));
      CHECK(m.op == orig.op);
      CHECK(m.attribute == orig.attribute);
      CHECK(m.category == orig.category);
      CHECK(m.relation == orig.relation);
      CHECK(m.choose == orig.choose);
      std::vector<std::string> want;
      for (const auto& d : orig.deps) want.push_back(padded(index[d]));
      CHECK(m.deps == want);
    }
    CHECK(mapped.root == padded(index[p.root]));
  }
}

TEST_CASE("empty and unmapped source programs are rejected") {
  auto table = OpMappingTable::load((kData / "gqa_mapping.json").string());
  CHECK(kind_of([&] {
          map_source_program({{"question_id", "e"}, {"semantic", json::array()}}, table);
        }) == ErrorKind::ParseError);
  std::string node;
  CHECK(kind_of(
            [&] {
              map_source_program(
                  {{"question_id", "u"},
                   {"semantic",
                    {{{"operation", "select"}, {"argument", "dog"}, {"dependencies", json::array()}},
                     {{"operation", "teleport"}, {"argument", ""}, {"dependencies", {0}}}}}},
                  table);
            },
            &node) == ErrorKind::UnmappedOperation);
  CHECK(node == "1");
  CHECK_THROWS_AS(OpMappingTable::from_json(json::parse(R"([{"source": "x", "op": "Select", "extract": {"category": "argh"}}])")),
                  Error);
}
