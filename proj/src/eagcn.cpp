#include "ample/eagcn.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace ample::eagcn {

void EaGcnConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("layers must be >= 1");
  if (heads < 1) throw std::invalid_argument("heads must be >= 1");
  if (hidden < 1 || hidden % heads != 0)
    throw std::invalid_argument("hidden width must be a positive multiple of heads");
}

int RelationSet::index_of(const graph::EdgeKind& kind) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == kind.name()) return static_cast<int>(i);
  return -1;
}

RelationSet RelationSet::builtin() { return RelationSet{{"AST", "CFG", "DFG", "NCS"}}; }

GraphTopology build_topology(const graph::CodeStructureGraph& g,
                             const RelationSet& relations, bool reverse_edges) {
  GraphTopology topo;
  topo.num_nodes = g.num_nodes();
  topo.num_relations = relations.size();
  topo.in_neighbors.assign(static_cast<size_t>(topo.num_relations),
                           std::vector<std::vector<int>>(
                               static_cast<size_t>(topo.num_nodes)));
  topo.in_edges.resize(static_cast<size_t>(topo.num_nodes));

  for (const graph::Edge& e : g.edges()) {
    const int r = relations.index_of(e.kind);
    if (r < 0) continue;  // unregistered relation: no message passing
    const int src = reverse_edges ? e.dst : e.src;
    const int dst = reverse_edges ? e.src : e.dst;
    topo.in_neighbors[static_cast<size_t>(r)][static_cast<size_t>(dst)]
        .push_back(src);
    topo.in_edges[static_cast<size_t>(dst)].push_back(
        {src, r, e.label.value_or("")});
  }
  for (auto& per_node : topo.in_neighbors)
    for (auto& nbrs : per_node) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
  for (auto& edges : topo.in_edges)
    std::sort(edges.begin(), edges.end(),
              [](const GraphTopology::InEdge& a, const GraphTopology::InEdge& b) {
                if (a.relation != b.relation) return a.relation < b.relation;
                if (a.label != b.label) return a.label < b.label;
                return a.src < b.src;
              });
  return topo;
}

namespace {

// The floating-point result of every per-node reduction must not depend on
// node numbering or edge list order, so summands are folded in an order
// determined by their values alone (ties are bit-identical and fold equal).
bool row_less(const Matrix& m, int a, int b, Index begin, Index len) {
  for (Index k = 0; k < len; ++k) {
    const double va = m(a, begin + k);
    const double vb = m(b, begin + k);
    if (va < vb) return true;
    if (va > vb) return false;
  }
  return false;
}

std::vector<int> value_sorted(const Matrix& m, std::vector<int> rows,
                              Index begin, Index len) {
  std::sort(rows.begin(), rows.end(),
            [&](int a, int b) { return row_less(m, a, b, begin, len); });
  return rows;
}

/// out.row(i) = mean over nbrs[i] of m rows (zero row when empty).
Matrix neighbor_mean(const Matrix& m, const std::vector<std::vector<int>>& nbrs) {
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (size_t i = 0; i < nbrs.size(); ++i) {
    if (nbrs[i].empty()) continue;
    RowVector acc = RowVector::Zero(m.cols());
    for (int j : value_sorted(m, nbrs[i], 0, m.cols())) acc += m.row(j);
    out.row(static_cast<Index>(i)) = acc / static_cast<double>(nbrs[i].size());
  }
  return out;
}

struct AttentionForward {
  Matrix concat;                        // n x d
  std::vector<Matrix> weights;          // per node: |in_edges| x heads, topology order
};

AttentionForward multi_head_attention(const Matrix& h, const GraphTopology& topo,
                                      int heads) {
  const Index d = h.cols();
  const Index hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  AttentionForward fwd;
  fwd.concat = Matrix::Zero(h.rows(), d);
  fwd.weights.resize(static_cast<size_t>(topo.num_nodes));

  std::vector<int> order;
  std::vector<double> scores;
  for (int t = 0; t < topo.num_nodes; ++t) {
    const auto& edges = topo.in_edges[static_cast<size_t>(t)];
    const int m = static_cast<int>(edges.size());
    fwd.weights[static_cast<size_t>(t)] = Matrix::Zero(m, heads);
    if (m == 0) continue;
    for (int k = 0; k < heads; ++k) {
      const Index begin = static_cast<Index>(k) * hd;
      scores.assign(static_cast<size_t>(m), 0.0);
      double max_score = -std::numeric_limits<double>::infinity();
      for (int r = 0; r < m; ++r) {
        scores[static_cast<size_t>(r)] =
            h.row(edges[static_cast<size_t>(r)].src).segment(begin, hd)
                .dot(h.row(t).segment(begin, hd)) * inv_sqrt;
        max_score = std::max(max_score, scores[static_cast<size_t>(r)]);
      }
      order.resize(static_cast<size_t>(m));
      for (int r = 0; r < m; ++r) order[static_cast<size_t>(r)] = r;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
          return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)];
        return row_less(h, edges[static_cast<size_t>(a)].src,
                        edges[static_cast<size_t>(b)].src, begin, hd);
      });
      double z = 0.0;
      for (int r : order) z += std::exp(scores[static_cast<size_t>(r)] - max_score);
      RowVector acc = RowVector::Zero(hd);
      for (int r : order) {
        const double w = std::exp(scores[static_cast<size_t>(r)] - max_score) / z;
        fwd.weights[static_cast<size_t>(t)](r, k) = w;
        acc += w * h.row(edges[static_cast<size_t>(r)].src).segment(begin, hd);
      }
      fwd.concat.row(t).segment(begin, hd) = acc;
    }
  }
  return fwd;
}

Matrix relational_values(const Matrix& h, const GraphTopology& topo,
                         const LayerParams& params) {
  const Matrix hv = stable_product_nt(h, params.shared_transform);
  Matrix acc = stable_product_nt(h, params.self_transform);
  for (int r = 0; r < topo.num_relations; ++r) {
    const Matrix agg = neighbor_mean(hv, topo.in_neighbors[static_cast<size_t>(r)]);
    acc = acc + params.relation_coeff(r, 0) * agg;
  }
  return acc.cwiseMax(0.0);
}

} // namespace

Matrix relational_propagate(const Matrix& h, const GraphTopology& topology,
                            const LayerParams& params) {
  if (h.rows() != topology.num_nodes ||
      h.cols() != params.shared_transform.rows())
    throw std::invalid_argument("relational_propagate: dimension mismatch");
  if (params.relation_coeff.rows() != topology.num_relations)
    throw std::invalid_argument("relational_propagate: relation count mismatch");
  return relational_values(h, topology, params);
}

std::vector<std::vector<double>> edge_attention_scores(
    const Matrix& h, const GraphTopology& topology, int head, int heads) {
  if (head < 0 || head >= heads)
    throw std::invalid_argument("head index out of range");
  AttentionForward fwd = multi_head_attention(h, topology, heads);
  std::vector<std::vector<double>> out(static_cast<size_t>(topology.num_nodes));
  for (int t = 0; t < topology.num_nodes; ++t) {
    const Matrix& w = fwd.weights[static_cast<size_t>(t)];
    out[static_cast<size_t>(t)].assign(static_cast<size_t>(w.rows()), 0.0);
    for (Index r = 0; r < w.rows(); ++r)
      out[static_cast<size_t>(t)][static_cast<size_t>(r)] = w(r, head);
  }
  return out;
}

Matrix attention_aggregate(const Matrix& h, const GraphTopology& topology,
                           const LayerParams& params, const Matrix& h_prev,
                           int heads) {
  if (h.rows() != h_prev.rows() || h.cols() != h_prev.cols())
    throw std::invalid_argument("attention_aggregate: shape mismatch");
  AttentionForward fwd = multi_head_attention(h, topology, heads);
  const Matrix a = stable_product_nt(fwd.concat, params.attn_proj) + h_prev;
  Matrix z = stable_product_nt(a, params.ff_w1);
  z.rowwise() += params.ff_b1.row(0);
  Matrix f = stable_product_nt(Matrix(z.cwiseMax(0.0)), params.ff_w2);
  f.rowwise() += params.ff_b2.row(0);
  return f + a;
}

Matrix eagcn_forward(const Matrix& h0, const GraphTopology& topology,
                     const EaGcnConfig& config,
                     const std::vector<LayerParams>& layers) {
  config.validate();
  if (static_cast<int>(layers.size()) != config.layers)
    throw std::invalid_argument("eagcn_forward: layer parameter count mismatch");
  Matrix h = h0;
  for (const LayerParams& params : layers) {
    Matrix mid = relational_propagate(h, topology, params);
    h = attention_aggregate(mid, topology, params, h, config.heads);
  }
  return h;
}

LayerVars push_layer(ad::Tape& tape, const LayerParams& params) {
  LayerVars vars;
  vars.relation_coeff = tape.leaf(params.relation_coeff);
  vars.shared_transform = tape.leaf(params.shared_transform);
  vars.self_transform = tape.leaf(params.self_transform);
  vars.attn_proj = tape.leaf(params.attn_proj);
  vars.ff_w1 = tape.leaf(params.ff_w1);
  vars.ff_b1 = tape.leaf(params.ff_b1);
  vars.ff_w2 = tape.leaf(params.ff_w2);
  vars.ff_b2 = tape.leaf(params.ff_b2);
  return vars;
}

namespace {

/// Tape node for the per-relation neighbor mean.
ad::Var neighbor_mean_op(ad::Tape& tape, ad::Var m,
                         const std::vector<std::vector<int>>* nbrs) {
  Matrix out = neighbor_mean(tape.value(m), *nbrs);
  return tape.push(std::move(out), [m, nbrs](ad::Tape& t, const Matrix& up) {
    Matrix& gm = t.grad_ref(m);
    for (size_t i = 0; i < nbrs->size(); ++i) {
      const auto& row_nbrs = (*nbrs)[i];
      if (row_nbrs.empty()) continue;
      const double inv = 1.0 / static_cast<double>(row_nbrs.size());
      for (int j : row_nbrs)
        gm.row(j) += inv * up.row(static_cast<Index>(i));
    }
  });
}

/// Tape node for the fused multi-head attention gather.
ad::Var attention_op(ad::Tape& tape, ad::Var h, const GraphTopology* topo,
                     int heads) {
  AttentionForward fwd = multi_head_attention(tape.value(h), *topo, heads);
  auto weights = std::make_shared<std::vector<Matrix>>(std::move(fwd.weights));
  return tape.push(
      std::move(fwd.concat),
      [h, topo, heads, weights](ad::Tape& t, const Matrix& up) {
        const Matrix& hv = t.value(h);
        Matrix& gh = t.grad_ref(h);
        const Index d = hv.cols();
        const Index hd = d / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
        for (int tgt = 0; tgt < topo->num_nodes; ++tgt) {
          const auto& edges = topo->in_edges[static_cast<size_t>(tgt)];
          const int m = static_cast<int>(edges.size());
          if (m == 0) continue;
          const Matrix& w = (*weights)[static_cast<size_t>(tgt)];
          for (int k = 0; k < heads; ++k) {
            const Index begin = static_cast<Index>(k) * hd;
            const auto g = up.row(tgt).segment(begin, hd);
            // dL/dw_r, then softmax and score backward.
            double sum_w_dw = 0.0;
            std::vector<double> dw(static_cast<size_t>(m));
            for (int r = 0; r < m; ++r) {
              dw[static_cast<size_t>(r)] =
                  g.dot(hv.row(edges[static_cast<size_t>(r)].src).segment(begin, hd));
              sum_w_dw += w(r, k) * dw[static_cast<size_t>(r)];
            }
            for (int r = 0; r < m; ++r) {
              const int src = edges[static_cast<size_t>(r)].src;
              const double wr = w(r, k);
              const double de = wr * (dw[static_cast<size_t>(r)] - sum_w_dw);
              gh.row(src).segment(begin, hd) +=
                  wr * g + (de * inv_sqrt) * hv.row(tgt).segment(begin, hd);
              gh.row(tgt).segment(begin, hd) +=
                  (de * inv_sqrt) * hv.row(src).segment(begin, hd);
            }
          }
        }
      });
}

} // namespace

ad::Var relational_propagate_op(ad::Tape& tape, ad::Var h,
                                const GraphTopology& topology,
                                const LayerVars& vars) {
  ad::Var hv = tape.linear_nt(h, vars.shared_transform);
  ad::Var acc = tape.linear_nt(h, vars.self_transform);
  for (int r = 0; r < topology.num_relations; ++r) {
    ad::Var agg = neighbor_mean_op(
        tape, hv, &topology.in_neighbors[static_cast<size_t>(r)]);
    acc = tape.add(acc, tape.scale_coeff(agg, vars.relation_coeff, r));
  }
  return tape.relu(acc);
}

ad::Var attention_aggregate_op(ad::Tape& tape, ad::Var h,
                               const GraphTopology& topology,
                               const LayerVars& vars, ad::Var h_prev,
                               int heads) {
  ad::Var att = attention_op(tape, h, &topology, heads);
  ad::Var a = tape.add(tape.linear_nt(att, vars.attn_proj), h_prev);
  ad::Var z = tape.add_rowvec(tape.linear_nt(a, vars.ff_w1), vars.ff_b1);
  ad::Var f = tape.add_rowvec(tape.linear_nt(tape.relu(z), vars.ff_w2), vars.ff_b2);
  return tape.add(f, a);
}

ad::Var eagcn_forward_op(ad::Tape& tape, ad::Var h0,
                         const GraphTopology& topology,
                         const EaGcnConfig& config,
                         const std::vector<LayerVars>& layers) {
  config.validate();
  ad::Var h = h0;
  for (const LayerVars& vars : layers) {
    ad::Var mid = relational_propagate_op(tape, h, topology, vars);
    h = attention_aggregate_op(tape, mid, topology, vars, h, config.heads);
  }
  return h;
}

} // namespace ample::eagcn
