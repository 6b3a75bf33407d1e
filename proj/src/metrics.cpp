#include "ample/metrics.hpp"

#include <cstdio>
#include <deque>
#include <sstream>

namespace ample::metrics {

SimplificationStats simplification_rates(const graph::CodeStructureGraph& original,
                                         const graph::CodeStructureGraph& simplified) {
  if (simplified.num_nodes() > original.num_nodes() ||
      simplified.num_edges() > original.num_edges())
    throw MetricsError(MetricsErrorKind::NegativeRate,
                       "simplified graph is larger than the original");
  SimplificationStats stats;
  if (original.num_nodes() > 0)
    stats.node_rate = static_cast<double>(original.num_nodes() - simplified.num_nodes()) /
                      static_cast<double>(original.num_nodes());
  if (original.num_edges() > 0)
    stats.edge_rate = static_cast<double>(original.num_edges() - simplified.num_edges()) /
                      static_cast<double>(original.num_edges());
  return stats;
}

std::vector<int> bfs_distances(const graph::CodeStructureGraph& g,
                               graph::NodeId source) {
  const int n = g.num_nodes();
  g.node(source);
  std::vector<std::vector<int>> adjacency(static_cast<size_t>(n));
  for (const graph::Edge& e : g.edges()) {
    adjacency[static_cast<size_t>(e.src)].push_back(e.dst);
    adjacency[static_cast<size_t>(e.dst)].push_back(e.src);
  }
  std::vector<int> dist(static_cast<size_t>(n), -1);
  dist[static_cast<size_t>(source)] = 0;
  std::deque<int> queue{source};
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : adjacency[static_cast<size_t>(u)]) {
      if (dist[static_cast<size_t>(v)] >= 0) continue;
      dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
      queue.push_back(v);
    }
  }
  return dist;
}

DistanceStats node_distances(const graph::CodeStructureGraph& g) {
  DistanceStats stats;
  const int n = g.num_nodes();
  long long total = 0;
  long long pairs = 0;
  for (int s = 0; s < n; ++s) {
    std::vector<int> dist = bfs_distances(g, s);
    for (int t = 0; t < n; ++t) {
      if (t == s || dist[static_cast<size_t>(t)] < 0) continue;
      total += dist[static_cast<size_t>(t)];
      ++pairs;
      if (dist[static_cast<size_t>(t)] > stats.max_distance)
        stats.max_distance = dist[static_cast<size_t>(t)];
    }
  }
  if (pairs > 0)
    stats.avg_distance = static_cast<double>(total) / static_cast<double>(pairs);
  return stats;
}

ClassificationScores classification_metrics(const std::vector<int>& predictions,
                                            const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw MetricsError(MetricsErrorKind::LengthMismatch,
                       "predictions and labels differ in length");
  if (predictions.empty())
    throw MetricsError(MetricsErrorKind::EmptyInput, "no samples");

  long long tp = 0, fp = 0, tn = 0, fn = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const bool predicted = predictions[i] != 0;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++tp;
    else if (predicted && !actual) ++fp;
    else if (!predicted && actual) ++fn;
    else ++tn;
  }

  ClassificationScores scores;
  scores.accuracy = static_cast<double>(tp + tn) /
                    static_cast<double>(tp + tn + fp + fn);
  if (tp + fp > 0)
    scores.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0)
    scores.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (scores.precision + scores.recall > 0)
    scores.f1 = 2.0 * scores.precision * scores.recall /
                (scores.precision + scores.recall);
  return scores;
}

GraphReportRow report_row(const std::string& id,
                          const graph::CodeStructureGraph& original,
                          const graph::CodeStructureGraph& simplified) {
  GraphReportRow row;
  row.id = id;
  row.nodes_before = original.num_nodes();
  row.nodes_after = simplified.num_nodes();
  row.edges_before = original.num_edges();
  row.edges_after = simplified.num_edges();
  SimplificationStats rates = simplification_rates(original, simplified);
  row.node_rate = rates.node_rate;
  row.edge_rate = rates.edge_rate;
  DistanceStats before = node_distances(original);
  DistanceStats after = node_distances(simplified);
  row.avg_dist_before = before.avg_distance;
  row.avg_dist_after = after.avg_distance;
  row.max_dist_before = before.max_distance;
  row.max_dist_after = after.max_distance;
  return row;
}

std::string render_csv_report(const std::vector<GraphReportRow>& rows) {
  std::ostringstream out;
  out << "id,nodes_before,nodes_after,edges_before,edges_after,node_rate,"
         "edge_rate,avg_dist_before,avg_dist_after,max_dist_before,"
         "max_dist_after\n";
  char buf[256];
  double sum_node_rate = 0, sum_edge_rate = 0;
  double sum_avg_before = 0, sum_avg_after = 0;
  double sum_max_before = 0, sum_max_after = 0;
  for (const GraphReportRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%d,%.6f,%.6f,%.4f,%.4f,%d,%d\n",
                  r.id.c_str(), r.nodes_before, r.nodes_after, r.edges_before,
                  r.edges_after, r.node_rate, r.edge_rate, r.avg_dist_before,
                  r.avg_dist_after, r.max_dist_before, r.max_dist_after);
    out << buf;
    sum_node_rate += r.node_rate;
    sum_edge_rate += r.edge_rate;
    sum_avg_before += r.avg_dist_before;
    sum_avg_after += r.avg_dist_after;
    sum_max_before += r.max_dist_before;
    sum_max_after += r.max_dist_after;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  std::snprintf(buf, sizeof(buf),
                "summary,,,,,%.2f%%,%.2f%%,%.4f,%.4f,%.2f,%.2f\n",
                100.0 * sum_node_rate / n, 100.0 * sum_edge_rate / n,
                sum_avg_before / n, sum_avg_after / n, sum_max_before / n,
                sum_max_after / n);
  out << buf;
  return out.str();
}

} // namespace ample::metrics
