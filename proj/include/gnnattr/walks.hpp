#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "gnnattr/forward.hpp"

namespace gnnattr::paths {

/// Maximal computation-graph walk (j_0, ..., j_L), j_L = target, with its
/// relevance toward the target-class logit.
template <typename Scalar>
struct Walk {
  std::vector<int> nodes;
  Scalar score = Scalar(0);
};

/// Shared per-(node, class) state for walk scoring: pruned computation
/// graph, cached forward pass, activation gates, and the target seed row.
template <typename Scalar>
struct WalkContext {
  const engine::GnnModel<Scalar>* model = nullptr;
  const core::Graph<Scalar>* graph = nullptr;
  int target_class = 0;
  core::ComputationGraph comp;
  engine::CompForward<Scalar> fwd;
  std::vector<MatrixX<Scalar>> gate;  // gate[l] aligned layer_nodes[l]; [0] unused
  RowVectorX<Scalar> seed;
};

template <typename Scalar>
inline WalkContext<Scalar> make_walk_context(const engine::GnnModel<Scalar>& m,
                                             const core::Graph<Scalar>& g, int v,
                                             int target_class = -1) {
  WalkContext<Scalar> ctx;
  ctx.model = &m;
  ctx.graph = &g;
  ctx.target_class = engine::resolve_class(m, g, v, target_class);
  ctx.comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  ctx.fwd = engine::run_forward(m, g, ctx.comp);
  ctx.gate.resize(static_cast<std::size_t>(ctx.comp.depth) + 1);
  for (int l = 1; l <= ctx.comp.depth; ++l)
    ctx.gate[static_cast<std::size_t>(l)] = engine::activation_gate(
        m.activations[static_cast<std::size_t>(l - 1)], ctx.fwd.z[static_cast<std::size_t>(l)]);
  ctx.seed = engine::class_seed<Scalar>(m.output_dim(), ctx.target_class);
  return ctx;
}

namespace detail {

/// Index of the edge (src at layer-1 -> dst at layer) inside layer_edges, or
/// -1. Self steps resolve to the self-edge copy.
inline int find_layer_edge(const core::ComputationGraph& comp, int layer, int src, int dst) {
  const auto& edges = comp.layer_edges[static_cast<std::size_t>(layer)];
  for (std::size_t k = 0; k < edges.size(); ++k)
    if (edges[k].src == src && edges[k].dst == dst) return static_cast<int>(k);
  return -1;
}

}  // namespace detail

/// Relevance of one walk: seed composed with the gated Jacobian of every
/// step, applied to the source feature vector.
template <typename Scalar>
inline Scalar node_walk_score(const WalkContext<Scalar>& ctx, const std::vector<int>& nodes) {
  const auto& comp = ctx.comp;
  const auto& m = *ctx.model;
  if (static_cast<int>(nodes.size()) != comp.depth + 1)
    throw ArgumentError("walk score: walk must have depth+1 nodes");
  if (nodes.back() != comp.target)
    throw ArgumentError("walk score: walk must end at the target");

  RowVectorX<Scalar> grad = ctx.seed;
  for (int l = comp.depth; l >= 1; --l) {
    int src = nodes[static_cast<std::size_t>(l - 1)];
    int dst = nodes[static_cast<std::size_t>(l)];
    int idx = detail::find_layer_edge(comp, l, src, dst);
    if (idx < 0) throw ArgumentError("walk score: step is not a computation-graph edge");
    const auto& e = comp.layer_edges[static_cast<std::size_t>(l)][static_cast<std::size_t>(idx)];
    grad = grad.cwiseProduct(ctx.gate[static_cast<std::size_t>(l)].row(e.dst_pos));
    grad = grad * (e.base_edge >= 0 ? m.weights[static_cast<std::size_t>(l - 1)]
                                    : m.root_weights[static_cast<std::size_t>(l - 1)]);
  }
  int src_pos = comp.node_pos(0, nodes.front());
  return grad.dot(ctx.fwd.x[0].row(src_pos));
}

/// All maximal walks, in lexicographic order of their node sequences. Throws
/// ResourceError when more than max_walks exist.
template <typename Scalar>
inline std::vector<std::vector<int>> enumerate_walks(const WalkContext<Scalar>& ctx,
                                                     std::size_t max_walks) {
  const auto& comp = ctx.comp;
  std::vector<std::vector<int>> walks;
  if (comp.empty()) return walks;

  // out-adjacency per layer: edges grouped by src copy, dst ascending
  std::vector<std::vector<std::vector<int>>> out(static_cast<std::size_t>(comp.depth) + 1);
  for (int l = 1; l <= comp.depth; ++l) {
    const auto& edges = comp.layer_edges[static_cast<std::size_t>(l)];
    out[static_cast<std::size_t>(l)].resize(comp.layer_nodes[static_cast<std::size_t>(l - 1)].size());
    for (const auto& e : edges)  // (dst, src) order keeps each bucket dst-ascending
      out[static_cast<std::size_t>(l)][static_cast<std::size_t>(e.src_pos)].push_back(e.dst);
  }

  std::vector<int> current(static_cast<std::size_t>(comp.depth) + 1);
  auto extend = [&](auto&& self, int layer, int node) -> void {
    current[static_cast<std::size_t>(layer)] = node;
    if (layer == comp.depth) {
      if (walks.size() >= max_walks) throw ResourceError("walk enumeration limit exceeded");
      walks.push_back(current);
      return;
    }
    int pos = comp.node_pos(layer, node);
    for (int next : out[static_cast<std::size_t>(layer) + 1][static_cast<std::size_t>(pos)])
      self(self, layer + 1, next);
  };
  for (int source : comp.layer_nodes[0]) extend(extend, 0, source);
  return walks;
}

/// Exhaustive argmax over all maximal walks, scored independently of the
/// dynamic program; ties resolve to the lexicographically smallest node
/// sequence.
template <typename Scalar>
inline Walk<Scalar> brute_force_top_walk(const WalkContext<Scalar>& ctx,
                                         std::size_t max_walks = std::size_t{1} << 20) {
  auto walks = enumerate_walks(ctx, max_walks);
  if (walks.empty()) throw ArgumentError("top walk: empty computation graph");
  Walk<Scalar> best;
  best.score = -std::numeric_limits<Scalar>::infinity();
  for (auto& nodes : walks) {
    Scalar s = node_walk_score(ctx, nodes);
    if (s > best.score) {  // first maximum wins: lexicographic tie-break
      best.score = s;
      best.nodes = std::move(nodes);
    }
  }
  return best;
}

/// Most relevant walk by dynamic programming over the layered DAG: each copy
/// keeps the best known suffix score, the gradient row accumulated along the
/// chosen suffix, and its parent. Exactly one candidate is evaluated per
/// computation-graph edge (count reported via candidate_evals).
template <typename Scalar>
inline Walk<Scalar> dag_top_walk(const WalkContext<Scalar>& ctx,
                                 std::size_t* candidate_evals = nullptr) {
  const auto& comp = ctx.comp;
  const auto& m = *ctx.model;
  if (!comp.pruned) throw ArgumentError("top walk: computation graph must be pruned");
  if (comp.empty()) throw ArgumentError("top walk: empty computation graph");

  const Scalar ninf = -std::numeric_limits<Scalar>::infinity();
  std::vector<std::vector<Scalar>> score(static_cast<std::size_t>(comp.depth) + 1);
  std::vector<std::vector<int>> parent(score.size());     // dst_pos of the chosen edge
  std::vector<std::vector<RowVectorX<Scalar>>> grad(score.size());
  for (int l = 0; l <= comp.depth; ++l) {
    std::size_t count = comp.layer_nodes[static_cast<std::size_t>(l)].size();
    score[static_cast<std::size_t>(l)].assign(count, ninf);
    parent[static_cast<std::size_t>(l)].assign(count, -1);
    grad[static_cast<std::size_t>(l)].resize(count);
  }
  int target_pos = comp.node_pos(comp.depth, comp.target);
  grad[static_cast<std::size_t>(comp.depth)][static_cast<std::size_t>(target_pos)] = ctx.seed;

  std::size_t evals = 0;
  for (int l = comp.depth; l >= 1; --l) {
    const auto& edges = comp.layer_edges[static_cast<std::size_t>(l)];
    const auto& gates = ctx.gate[static_cast<std::size_t>(l)];
    RowVectorX<Scalar> gated;  // grad(dst) . gate(dst), hoisted per dst group
    int gated_dst = -1;
    for (const auto& e : edges) {
      if (e.dst_pos != gated_dst) {
        gated = grad[static_cast<std::size_t>(l)][static_cast<std::size_t>(e.dst_pos)]
                    .cwiseProduct(gates.row(e.dst_pos));
        gated_dst = e.dst_pos;
      }
      const auto& rows = e.base_edge >= 0 ? ctx.fwd.msg[static_cast<std::size_t>(l)]
                                          : ctx.fwd.msg_root[static_cast<std::size_t>(l)];
      Scalar cand = gated.dot(rows.row(e.src_pos));
      ++evals;
      auto& s = score[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(e.src_pos)];
      if (cand > s) {  // strict: first (smallest dst) wins on ties
        s = cand;
        parent[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(e.src_pos)] = e.dst_pos;
        grad[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(e.src_pos)] =
            gated * (e.base_edge >= 0 ? m.weights[static_cast<std::size_t>(l - 1)]
                                      : m.root_weights[static_cast<std::size_t>(l - 1)]);
      }
    }
  }
  if (candidate_evals) *candidate_evals = evals;

  const auto& sources = comp.layer_nodes[0];
  int best_pos = 0;
  for (std::size_t r = 1; r < sources.size(); ++r)
    if (score[0][r] > score[0][static_cast<std::size_t>(best_pos)]) best_pos = static_cast<int>(r);

  Walk<Scalar> walk;
  walk.score = score[0][static_cast<std::size_t>(best_pos)];
  walk.nodes.resize(static_cast<std::size_t>(comp.depth) + 1);
  int pos = best_pos;
  walk.nodes[0] = sources[static_cast<std::size_t>(pos)];
  for (int l = 1; l <= comp.depth; ++l) {
    pos = parent[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(pos)];
    walk.nodes[static_cast<std::size_t>(l)] = comp.layer_nodes[static_cast<std::size_t>(l)][static_cast<std::size_t>(pos)];
  }
  return walk;
}

/// Approximate top walk: the same traversal as dag_top_walk with the per-copy
/// gradient row collapsed to its neuron average, so every state is a scalar.
/// The output-layer step keeps the exact seed row, so the averaging never
/// discards which class is being explained. Width-1 models reduce to the
/// exact program.
template <typename Scalar>
inline Walk<Scalar> amp_ave_basic(const WalkContext<Scalar>& ctx,
                                  std::size_t* candidate_evals = nullptr) {
  const auto& comp = ctx.comp;
  const auto& m = *ctx.model;
  if (!comp.pruned) throw ArgumentError("top walk: computation graph must be pruned");
  if (comp.empty()) throw ArgumentError("top walk: empty computation graph");

  const Scalar ninf = -std::numeric_limits<Scalar>::infinity();
  std::vector<std::vector<Scalar>> score(static_cast<std::size_t>(comp.depth) + 1);
  std::vector<std::vector<int>> parent(score.size());
  std::vector<std::vector<Scalar>> avg(score.size());  // mean of the gradient row
  for (int l = 0; l <= comp.depth; ++l) {
    std::size_t count = comp.layer_nodes[static_cast<std::size_t>(l)].size();
    score[static_cast<std::size_t>(l)].assign(count, ninf);
    parent[static_cast<std::size_t>(l)].assign(count, -1);
    avg[static_cast<std::size_t>(l)].assign(count, Scalar(0));
  }
  std::size_t evals = 0;
  for (int l = comp.depth; l >= 1; --l) {
    const auto& edges = comp.layer_edges[static_cast<std::size_t>(l)];
    const auto& gates = ctx.gate[static_cast<std::size_t>(l)];
    const Scalar width = static_cast<Scalar>(m.dim(l));
    const Scalar width_prev = static_cast<Scalar>(m.dim(l - 1));
    const MatrixX<Scalar>& w = m.weights[static_cast<std::size_t>(l - 1)];
    VectorX<Scalar> wsums = w.rowwise().sum();
    VectorX<Scalar> rsums;
    if (m.has_root()) rsums = m.root_weights[static_cast<std::size_t>(l - 1)].rowwise().sum();

    RowVectorX<Scalar> gated;  // avg(dst) . gate(dst), hoisted per dst group
    int gated_dst = -1;
    for (const auto& e : edges) {
      if (e.dst_pos != gated_dst) {
        // top layer: exact seed row, so class marginalization weights survive
        if (l == comp.depth)
          gated = ctx.seed.cwiseProduct(gates.row(e.dst_pos));
        else
          gated = avg[static_cast<std::size_t>(l)][static_cast<std::size_t>(e.dst_pos)] *
                  gates.row(e.dst_pos);
        gated_dst = e.dst_pos;
      }
      const auto& rows = e.base_edge >= 0 ? ctx.fwd.msg[static_cast<std::size_t>(l)]
                                          : ctx.fwd.msg_root[static_cast<std::size_t>(l)];
      Scalar cand = gated.dot(rows.row(e.src_pos)) / width;
      ++evals;
      auto& s = score[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(e.src_pos)];
      if (cand > s) {
        s = cand;
        parent[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(e.src_pos)] = e.dst_pos;
        avg[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(e.src_pos)] =
            gated.dot(e.base_edge >= 0 ? wsums : rsums) / width_prev;
      }
    }
  }
  if (candidate_evals) *candidate_evals = evals;

  const auto& sources = comp.layer_nodes[0];
  int best_pos = 0;
  for (std::size_t r = 1; r < sources.size(); ++r)
    if (score[0][r] > score[0][static_cast<std::size_t>(best_pos)]) best_pos = static_cast<int>(r);

  Walk<Scalar> walk;
  walk.score = score[0][static_cast<std::size_t>(best_pos)];
  walk.nodes.resize(static_cast<std::size_t>(comp.depth) + 1);
  int pos = best_pos;
  walk.nodes[0] = sources[static_cast<std::size_t>(pos)];
  for (int l = 1; l <= comp.depth; ++l) {
    pos = parent[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(pos)];
    walk.nodes[static_cast<std::size_t>(l)] = comp.layer_nodes[static_cast<std::size_t>(l)][static_cast<std::size_t>(pos)];
  }
  return walk;
}

}  // namespace gnnattr::paths
