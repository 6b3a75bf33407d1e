#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ample/graph.hpp"

namespace ample::metrics {

enum class MetricsErrorKind { NegativeRate, LengthMismatch, EmptyInput };

class MetricsError : public std::runtime_error {
 public:
  MetricsError(MetricsErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  MetricsErrorKind kind() const { return kind_; }

 private:
  MetricsErrorKind kind_;
};

struct SimplificationStats {
  double node_rate = 0.0;  // (orig - simplified) / orig, 0 when orig == 0
  double edge_rate = 0.0;
};

struct DistanceStats {
  double avg_distance = 0.0;  // over reachable ordered pairs, 0 when none
  int max_distance = 0;
};

struct ClassificationScores {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Fraction of nodes/edges removed by simplification. Throws NegativeRate when
/// the "simplified" graph is larger than the original.
SimplificationStats simplification_rates(const graph::CodeStructureGraph& original,
                                         const graph::CodeStructureGraph& simplified);

/// Shortest-path statistics over the undirected view of all edge kinds:
/// breadth-first search from every node; average over reachable ordered pairs
/// (a != b), maximum over finite distances. Unreachable pairs are excluded,
/// so both values are 0 for singletons and fully disconnected graphs.
DistanceStats node_distances(const graph::CodeStructureGraph& g);

/// Distances from one source to every node (-1 where unreachable), over the
/// undirected view. Shared by node_distances and the corpus report.
std::vector<int> bfs_distances(const graph::CodeStructureGraph& g,
                               graph::NodeId source);

/// Counting convention: 1 = vulnerable = positive. Precision/recall/F1 are 0
/// when their denominator is 0. Throws LengthMismatch / EmptyInput.
ClassificationScores classification_metrics(const std::vector<int>& predictions,
                                            const std::vector<int>& labels);

struct GraphReportRow {
  std::string id;
  int nodes_before = 0;
  int nodes_after = 0;
  int edges_before = 0;
  int edges_after = 0;
  double node_rate = 0.0;
  double edge_rate = 0.0;
  double avg_dist_before = 0.0;
  double avg_dist_after = 0.0;
  int max_dist_before = 0;
  int max_dist_after = 0;
};

GraphReportRow report_row(const std::string& id,
                          const graph::CodeStructureGraph& original,
                          const graph::CodeStructureGraph& simplified);

/// CSV with one row per graph plus a trailing summary row of corpus means;
/// summary rates are printed as percentages with two decimals (e.g. "41.64%").
std::string render_csv_report(const std::vector<GraphReportRow>& rows);

} // namespace ample::metrics
