#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>

#include "ample/graph_io.hpp"
#include "ample/metrics.hpp"
#include "ample/simplify.hpp"
#include "test_util.hpp"

using namespace ample;
using graph::EdgeKind;
using graph::Node;
using graph::NodeId;

namespace {

graph::CodeStructureGraph load_fixture(const std::string& name) {
  return io::parse_graph(test_util::read_file(test_util::fixture_path(name)));
}

} // namespace

TEST_CASE("match_rule finds the declaration rule") {
  const simplify::MergeRuleTable table = simplify::default_merge_rules();
  Node parent{0, "IdentifierDeclStatement", "char * first = malloc ( 10 ) ;", {}, true};
  Node child{1, "IdentifierDecl", "* first = malloc ( 10 )", {}, false};
  CHECK(simplify::match_rule(table, parent, child) == 1);  // second rule

  Node fn{0, "FunctionDef", "f", {}, false};
  Node param{1, "Parameter", "int a", {}, false};
  CHECK_FALSE(simplify::match_rule(table, fn, param).has_value());

  // the wildcard rule requires equal code
  Node arg{0, "Argument", "buf", {}, false};
  Node same{1, "Identifier", "buf", {}, false};
  Node different{2, "Identifier", "other", {}, false};
  CHECK(simplify::match_rule(table, arg, same) == 5);
  CHECK_FALSE(simplify::match_rule(table, arg, different).has_value());
}

TEST_CASE("tgs merges the fig3 declaration into its statement") {
  graph::CodeStructureGraph g = load_fixture("fig3.json");
  auto [simplified, trace] = simplify::tgs(g, simplify::default_merge_rules());
  CHECK(simplified.num_nodes() == 4);
  CHECK(simplified.node(0).node_type == "IdentifierDeclStatement");
  CHECK(graph::ast_children(simplified, 0) == std::vector<NodeId>{1, 2, 3});
  REQUIRE(trace.events.size() == 1);
  CHECK(trace.events[0].kept == 0);
  CHECK(trace.events[0].removed == 1);
  CHECK(trace.events[0].rule_index == 1);
  CHECK(trace.resolve(1) == 0);
}

TEST_CASE("tgs re-examines re-parented children against the absorbing node") {
  // chain: statement -> expression -> expression -> identifier
  std::vector<Node> nodes = {
      {0, "ExpressionStatement", "a + b ;", {}, true},
      {1, "Expression", "a + b", {}, false},
      {2, "Expression", "a", {}, false},
      {3, "Identifier", "a", {}, false},
  };
  std::vector<graph::Edge> edges = {
      {0, 1, EdgeKind::ast(), std::nullopt},
      {1, 2, EdgeKind::ast(), std::nullopt},
      {2, 3, EdgeKind::ast(), std::nullopt},
  };
  graph::CodeStructureGraph g = graph::build_graph(nodes, edges);
  auto [simplified, trace] = simplify::tgs(g, simplify::default_merge_rules());
  // both expressions merged; the identifier becomes the statement's child
  CHECK(simplified.num_nodes() == 2);
  CHECK(simplified.node(1).node_type == "Identifier");
  CHECK(graph::ast_children(simplified, 0) == std::vector<NodeId>{1});
  CHECK(trace.events.size() == 2);
  CHECK(trace.resolve(1) == 0);
  CHECK(trace.resolve(2) == 0);
}

TEST_CASE("tgs re-targets non-AST edges onto the absorbing node") {
  std::vector<Node> nodes = {
      {0, "ExpressionStatement", "a ;", {}, true},
      {1, "Expression", "a", {}, false},
      {2, "ExpressionStatement", "b ;", {}, true},
  };
  std::vector<graph::Edge> edges = {
      {0, 1, EdgeKind::ast(), std::nullopt},
      {1, 2, EdgeKind::dfg(), std::string("a")},  // from the merged node
      {2, 1, EdgeKind::cfg(), std::nullopt},      // into the merged node
  };
  graph::CodeStructureGraph g = graph::build_graph(nodes, edges);
  auto [simplified, trace] = simplify::tgs(g, simplify::default_merge_rules());
  CHECK(simplified.num_nodes() == 2);
  bool saw_dfg = false, saw_cfg = false;
  for (const graph::Edge& e : simplified.edges()) {
    if (e.kind == EdgeKind::dfg()) { saw_dfg = true; CHECK(e.src == 0); CHECK(e.dst == 1); }
    if (e.kind == EdgeKind::cfg()) { saw_cfg = true; CHECK(e.src == 1); CHECK(e.dst == 0); }
  }
  CHECK(saw_dfg);
  CHECK(saw_cfg);
}

TEST_CASE("no-op when no rule matches") {
  std::mt19937_64 rng(3);
  graph::CodeStructureGraph g = test_util::random_rule_matching_graph(rng, 30);
  simplify::MergeRuleTable empty_table;
  auto [simplified, trace] = simplify::tgs(g, empty_table);
  CHECK(simplified.num_nodes() == g.num_nodes());
  CHECK(trace.events.empty());
}

TEST_CASE("vgs merges the two duplicate leaves of fig4") {
  graph::CodeStructureGraph g = load_fixture("fig4.json");
  auto [simplified, trace] = simplify::vgs(g);
  CHECK(simplified.num_nodes() == 12);
  REQUIRE(trace.events.size() == 1);
  CHECK(trace.events[0].phase == simplify::MergePhase::VGS);
  CHECK(trace.events[0].kept == 2);
  CHECK(trace.events[0].removed == 12);
  const NodeId kept = trace.resolve(12);
  CHECK(simplified.node(kept).code == "str");
  CHECK(simplified.ast_parents(kept).size() == 2);
}

TEST_CASE("vgs leaves distinct identifiers alone") {
  std::vector<Node> nodes = {
      {0, "Expression", "a b", {}, false},
      {1, "Identifier", "a", {}, false},
      {2, "Identifier", "b", {}, false},
  };
  std::vector<graph::Edge> edges = {{0, 1, EdgeKind::ast(), std::nullopt},
                                    {0, 2, EdgeKind::ast(), std::nullopt}};
  graph::CodeStructureGraph g = graph::build_graph(nodes, edges);
  auto [simplified, trace] = simplify::vgs(g);
  CHECK(simplified.num_nodes() == 3);
  CHECK(trace.events.empty());
}

TEST_CASE("three identical leaves contract onto the first") {
  std::vector<Node> nodes;
  std::vector<graph::Edge> edges;
  for (int s = 0; s < 3; ++s) {
    const NodeId stmt = static_cast<NodeId>(nodes.size());
    nodes.push_back({stmt, "ExpressionStatement2", "x ;", {}, true});
    const NodeId leaf = static_cast<NodeId>(nodes.size());
    nodes.push_back({leaf, "Identifier", "x", {}, false});
    edges.push_back({stmt, leaf, EdgeKind::ast(), std::nullopt});
  }
  graph::CodeStructureGraph g = graph::build_graph(nodes, edges);
  auto [simplified, trace] = simplify::vgs(g);
  CHECK(simplified.num_nodes() == 4);
  CHECK(trace.events.size() == 2);
  const NodeId kept = trace.resolve(5);
  CHECK(simplified.ast_parents(kept).size() == 3);
}

TEST_CASE("gs composes tgs then vgs and reaches a fixpoint") {
  graph::CodeStructureGraph g = load_fixture("fig3.json");
  const simplify::MergeRuleTable table = simplify::default_merge_rules();
  auto first = simplify::gs(g, table);
  auto second = simplify::gs(first.graph, table);
  CHECK(graph::structurally_equal(first.graph, second.graph));
  CHECK(second.trace.events.empty());

  // gs equals vgs(tgs(g)) structurally
  auto via_phases = simplify::vgs(simplify::tgs(g, table).graph);
  CHECK(graph::structurally_equal(first.graph, via_phases.graph));

  auto empty = simplify::gs(graph::build_graph({}, {}), table);
  CHECK(empty.graph.num_nodes() == 0);
}

TEST_CASE("idempotence, monotonicity, trace partition over random graphs") {
  const simplify::MergeRuleTable table = simplify::default_merge_rules();
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    graph::CodeStructureGraph g = test_util::random_rule_matching_graph(rng, 60);
    auto first = simplify::gs(g, table);
    CHECK(first.graph.num_nodes() <= g.num_nodes());
    CHECK(first.graph.num_edges() <= g.num_edges());
    auto second = simplify::gs(first.graph, table);
    CHECK(graph::structurally_equal(first.graph, second.graph));

    // every removed node appears exactly once; kept/removed partition V
    std::vector<int> removed_count(static_cast<size_t>(g.num_nodes()), 0);
    for (const simplify::MergeEvent& e : first.trace.events)
      ++removed_count[static_cast<size_t>(e.removed)];
    int removed_total = 0;
    for (int c : removed_count) {
      CHECK(c <= 1);
      removed_total += c;
    }
    CHECK(removed_total + first.graph.num_nodes() == g.num_nodes());
    for (const simplify::MergeEvent& e : first.trace.events)
      CHECK(removed_count[static_cast<size_t>(e.kept)] == 0);
  }
}

TEST_CASE("reachability preservation and distance contraction") {
  const simplify::MergeRuleTable table = simplify::default_merge_rules();
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    graph::CodeStructureGraph g = test_util::random_rule_matching_graph(rng, 40);
    auto [simplified, trace] = simplify::gs(g, table);
    for (NodeId a = 0; a < g.num_nodes(); ++a) {
      const std::vector<int> before = metrics::bfs_distances(g, a);
      if (trace.survivor[static_cast<size_t>(a)] != a) continue;  // removed
      const std::vector<int> after =
          metrics::bfs_distances(simplified, trace.resolve(a));
      for (NodeId b = 0; b < g.num_nodes(); ++b) {
        if (trace.survivor[static_cast<size_t>(b)] != b || a == b) continue;
        if (before[static_cast<size_t>(b)] < 0) continue;
        const int d_after = after[static_cast<size_t>(trace.resolve(b))];
        CHECK(d_after >= 0);  // reachability preserved
        CHECK(d_after <= before[static_cast<size_t>(b)]);
      }
    }
  }
}

TEST_CASE("AST stays acyclic through both phases") {
  // build_graph validates acyclicity, so surviving a rebuild is the check
  const simplify::MergeRuleTable table = simplify::default_merge_rules();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    graph::CodeStructureGraph g = test_util::random_rule_matching_graph(rng, 50);
    CHECK_NOTHROW(simplify::gs(g, table));
  }
}

TEST_CASE("rule table JSON round-trip rejects duplicates") {
  const simplify::MergeRuleTable table = simplify::default_merge_rules();
  const std::string text = simplify::serialize_merge_rules(table);
  simplify::MergeRuleTable back = simplify::parse_merge_rules(text);
  REQUIRE(back.rules.size() == table.rules.size());
  for (size_t i = 0; i < table.rules.size(); ++i) {
    CHECK(back.rules[i].ptype == table.rules[i].ptype);
    CHECK(back.rules[i].ctype == table.rules[i].ctype);
    CHECK(back.rules[i].require_equal_code == table.rules[i].require_equal_code);
  }
  CHECK_THROWS_AS(simplify::parse_merge_rules(
                      R"([{"ptype":"A","ctype":"B"},{"ptype":"A","ctype":"B"}])"),
                  io::IoError);
}
