#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "ample/metrics.hpp"
#include "ample/simplify.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace ample;
using graph::EdgeKind;
using graph::Node;

namespace {

graph::CodeStructureGraph path_graph(int n) {
  std::vector<Node> nodes;
  std::vector<graph::Edge> edges;
  for (int i = 0; i < n; ++i) nodes.push_back({i, "N", "", {}, false});
  for (int i = 0; i + 1 < n; ++i)
    edges.push_back({i, i + 1, EdgeKind::cfg(), std::nullopt});
  return graph::build_graph(nodes, edges);
}

} // namespace

TEST_CASE("simplification rates") {
  std::mt19937_64 rng(1);
  graph::CodeStructureGraph g = test_util::random_rule_matching_graph(rng, 30);
  metrics::SimplificationStats same = metrics::simplification_rates(g, g);
  CHECK(same.node_rate == 0.0);
  CHECK(same.edge_rate == 0.0);

  graph::CodeStructureGraph ten = path_graph(10);
  graph::CodeStructureGraph six = path_graph(6);
  metrics::SimplificationStats stats = metrics::simplification_rates(ten, six);
  CHECK(stats.node_rate == doctest::Approx(0.4).epsilon(1e-12));

  CHECK_THROWS_AS(metrics::simplification_rates(six, ten), metrics::MetricsError);
}

TEST_CASE("node distances on tiny graphs") {
  metrics::DistanceStats single = metrics::node_distances(path_graph(1));
  CHECK(single.avg_distance == 0.0);
  CHECK(single.max_distance == 0);

  metrics::DistanceStats path3 = metrics::node_distances(path_graph(3));
  CHECK(path3.avg_distance == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  CHECK(path3.max_distance == 2);

  // two disconnected nodes: no reachable pairs
  graph::CodeStructureGraph two =
      graph::build_graph({{0, "N", "", {}, false}, {1, "N", "", {}, false}}, {});
  metrics::DistanceStats stats = metrics::node_distances(two);
  CHECK(stats.avg_distance == 0.0);
  CHECK(stats.max_distance == 0);
}

TEST_CASE("node distances agree exactly with the all-pairs oracle") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 120; ++trial) {
    graph::CodeStructureGraph g = test_util::random_rule_matching_graph(rng, 50);
    metrics::DistanceStats mine = metrics::node_distances(g);
    oracle::FwResult ref = oracle::floyd_warshall_distances(g);
    CHECK(mine.max_distance == ref.max);
    CHECK(mine.avg_distance == doctest::Approx(ref.avg).epsilon(1e-12));
  }
}

TEST_CASE("classification metrics formulas") {
  // all correct
  metrics::ClassificationScores perfect =
      metrics::classification_metrics({1, 0, 1, 0}, {1, 0, 1, 0});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1 == 1.0);

  // one of each cell
  metrics::ClassificationScores mixed =
      metrics::classification_metrics({1, 1, 0, 0}, {1, 0, 1, 0});
  CHECK(mixed.precision == 0.5);
  CHECK(mixed.recall == 0.5);
  CHECK(mixed.f1 == 0.5);
  CHECK(mixed.accuracy == 0.5);

  // degenerate: no positives anywhere
  metrics::ClassificationScores none =
      metrics::classification_metrics({0, 0, 0}, {0, 0, 0});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.accuracy == 1.0);

  CHECK_THROWS_AS(metrics::classification_metrics({1}, {1, 0}),
                  metrics::MetricsError);
  CHECK_THROWS_AS(metrics::classification_metrics({}, {}), metrics::MetricsError);
}

TEST_CASE("classification metrics are permutation invariant") {
  std::vector<int> preds = {1, 0, 1, 1, 0, 0, 1, 0, 1, 1};
  std::vector<int> labels = {1, 1, 0, 1, 0, 1, 1, 0, 0, 1};
  metrics::ClassificationScores base = metrics::classification_metrics(preds, labels);
  std::mt19937_64 rng(9);
  std::vector<size_t> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> p, l;
    for (size_t i : order) { p.push_back(preds[i]); l.push_back(labels[i]); }
    metrics::ClassificationScores shuffled = metrics::classification_metrics(p, l);
    CHECK(shuffled.accuracy == base.accuracy);
    CHECK(shuffled.precision == base.precision);
    CHECK(shuffled.recall == base.recall);
    CHECK(shuffled.f1 == base.f1);
  }
}

TEST_CASE("csv report shape and summary formatting") {
  std::mt19937_64 rng(4);
  std::vector<metrics::GraphReportRow> rows;
  const simplify::MergeRuleTable table = simplify::default_merge_rules();
  for (int i = 0; i < 5; ++i) {
    graph::CodeStructureGraph g = test_util::random_rule_matching_graph(rng, 30);
    auto simplified = simplify::gs(g, table);
    rows.push_back(metrics::report_row("g" + std::to_string(i), g, simplified.graph));
  }
  const std::string csv = metrics::render_csv_report(rows);
  CHECK(csv.rfind("id,nodes_before,nodes_after,edges_before,edges_after,"
                  "node_rate,edge_rate,avg_dist_before,avg_dist_after,"
                  "max_dist_before,max_dist_after\n", 0) == 0);
  // one line per graph + header + summary
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  // summary rates are percentages with two decimals
  const size_t summary = csv.find("\nsummary,");
  REQUIRE(summary != std::string::npos);
  const size_t pct = csv.find('%', summary);
  REQUIRE(pct != std::string::npos);
  CHECK(csv[pct - 3] == '.');
}
