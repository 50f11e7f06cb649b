#pragma once

#include <vector>

#include "gnnattr/errors.hpp"
#include "gnnattr/graph.hpp"
#include "gnnattr/model.hpp"
#include "gnnattr/types.hpp"

namespace gnnattr::engine {

template <typename Scalar>
inline MatrixX<Scalar> apply_activation(Activation a, const MatrixX<Scalar>& z) {
  if (a == Activation::kRelu) return z.cwiseMax(Scalar(0));
  return z;
}

/// Derivative gate of an activation: relu is the 0/1 indicator of a positive
/// pre-activation (0 exactly at the kink), identity is 1.
template <typename Scalar>
inline MatrixX<Scalar> activation_gate(Activation a, const MatrixX<Scalar>& z) {
  if (a == Activation::kRelu)
    return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
  return MatrixX<Scalar>::Ones(z.rows(), z.cols());
}

/// In-adjacency as a sparse matrix: A(j, i) = mask weight of edge (i, j).
template <typename Scalar>
inline SparseMatrixX<Scalar> build_in_adjacency(const core::Graph<Scalar>& g,
                                                const VectorX<Scalar>* edge_weights = nullptr) {
  if (edge_weights && edge_weights->size() != g.edge_count())
    throw ArgumentError("forward: edge mask size != edge count");
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(g.edges.size());
  for (int e = 0; e < g.edge_count(); ++e) {
    auto [i, j] = g.edges[static_cast<std::size_t>(e)];
    Scalar w = edge_weights ? (*edge_weights)[e] : Scalar(1);
    trips.emplace_back(j, i, w);
  }
  SparseMatrixX<Scalar> a(g.n, g.n);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

/// Whole-graph propagation states: x[0] is the feature matrix, x[l] the
/// layer-l embeddings, z[l] the pre-activations (z[0] unused).
template <typename Scalar>
struct FullForward {
  std::vector<MatrixX<Scalar>> x;
  std::vector<MatrixX<Scalar>> z;
};

template <typename Scalar>
inline FullForward<Scalar> forward_all(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                       const VectorX<Scalar>* edge_weights = nullptr,
                                       const SparseMatrixX<Scalar>* prebuilt_adjacency = nullptr) {
  m.validate();
  if (!g.finalized()) throw ArgumentError("forward: graph not finalized");
  if (g.feature_dim() != m.input_dim())
    throw ArgumentError("forward: feature dimension != model input dimension");

  SparseMatrixX<Scalar> local;
  const SparseMatrixX<Scalar>* a = prebuilt_adjacency;
  if (!a) {
    local = build_in_adjacency(g, edge_weights);
    a = &local;
  }

  const int depth = m.layers();
  FullForward<Scalar> f;
  f.x.resize(static_cast<std::size_t>(depth) + 1);
  f.z.resize(static_cast<std::size_t>(depth) + 1);
  f.x[0] = g.features;
  for (int l = 1; l <= depth; ++l) {
    const auto& w = m.weights[static_cast<std::size_t>(l - 1)];
    MatrixX<Scalar> agg = (*a) * (f.x[static_cast<std::size_t>(l - 1)] * w.transpose());
    if (m.has_root())
      agg += f.x[static_cast<std::size_t>(l - 1)] *
             m.root_weights[static_cast<std::size_t>(l - 1)].transpose();
    f.z[static_cast<std::size_t>(l)] = std::move(agg);
    f.x[static_cast<std::size_t>(l)] = apply_activation(
        m.activations[static_cast<std::size_t>(l - 1)], f.z[static_cast<std::size_t>(l)]);
  }
  return f;
}

/// Per-layer states over one computation graph. Row r of x[l] is the
/// embedding of layer_nodes[l][r]; msg[l] = x[l-1] W_l^T holds the neighbor
/// messages and msg_root[l] the root messages (models with a root weight).
template <typename Scalar>
struct CompForward {
  std::vector<MatrixX<Scalar>> x;
  std::vector<MatrixX<Scalar>> z;
  std::vector<MatrixX<Scalar>> msg;
  std::vector<MatrixX<Scalar>> msg_root;

  RowVectorX<Scalar> target_output(const core::ComputationGraph& comp) const {
    int pos = comp.node_pos(comp.depth, comp.target);
    if (pos < 0) throw ArgumentError("forward: target copy missing from computation graph");
    return x.back().row(pos);
  }
};

namespace detail {

template <typename Scalar>
inline void check_comp_compatible(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                  const core::ComputationGraph& comp) {
  if (comp.depth != m.layers())
    throw ArgumentError("forward: computation-graph depth != model depth");
  if (comp.self_edges != m.has_root())
    throw ArgumentError("forward: computation graph must carry self edges iff the model has a root weight");
  if (g.feature_dim() != m.input_dim())
    throw ArgumentError("forward: feature dimension != model input dimension");
}

// Mask weight of one computation-graph edge. Input-level masks never scale
// self edges (the root term is an unmasked contribution).
template <typename Scalar>
inline Scalar comp_edge_weight(const core::ComputationGraph::Edge& e, int layer,
                               int edge_idx, const VectorX<Scalar>* input_mask,
                               const std::vector<VectorX<Scalar>>* layer_mask) {
  if (input_mask) return e.base_edge >= 0 ? (*input_mask)[e.base_edge] : Scalar(1);
  if (layer_mask) return (*layer_mask)[static_cast<std::size_t>(layer)][edge_idx];
  return Scalar(1);
}

}  // namespace detail

/// Forward over a computation graph. At most one of input_mask (size = base
/// edge count) and layer_mask (aligned with layer_edges) may be given. Mask
/// values are taken as-is, so oracle code may evaluate slightly outside
/// [0,1]; the public mask types enforce the range.
template <typename Scalar>
inline CompForward<Scalar> run_forward(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                       const core::ComputationGraph& comp,
                                       const VectorX<Scalar>* input_mask = nullptr,
                                       const std::vector<VectorX<Scalar>>* layer_mask = nullptr) {
  m.validate();
  detail::check_comp_compatible(m, g, comp);
  if (input_mask && layer_mask)
    throw ArgumentError("forward: at most one mask scope per call");
  if (input_mask && input_mask->size() != g.edge_count())
    throw ArgumentError("forward: input mask size != edge count");
  if (layer_mask) {
    if (layer_mask->size() != comp.layer_edges.size())
      throw ArgumentError("forward: layerwise mask layer count mismatch");
    for (std::size_t l = 1; l < layer_mask->size(); ++l)
      if ((*layer_mask)[l].size() != static_cast<int>(comp.layer_edges[l].size()))
        throw ArgumentError("forward: layerwise mask entry count mismatch");
  }

  const int depth = comp.depth;
  CompForward<Scalar> f;
  f.x.resize(static_cast<std::size_t>(depth) + 1);
  f.z.resize(static_cast<std::size_t>(depth) + 1);
  f.msg.resize(static_cast<std::size_t>(depth) + 1);
  f.msg_root.resize(static_cast<std::size_t>(depth) + 1);

  const auto& base_nodes = comp.layer_nodes[0];
  f.x[0].resize(static_cast<int>(base_nodes.size()), g.feature_dim());
  for (std::size_t r = 0; r < base_nodes.size(); ++r)
    f.x[0].row(static_cast<int>(r)) = g.features.row(base_nodes[r]);

  for (int l = 1; l <= depth; ++l) {
    const auto& w = m.weights[static_cast<std::size_t>(l - 1)];
    const auto& prev = f.x[static_cast<std::size_t>(l - 1)];
    f.msg[static_cast<std::size_t>(l)] = prev * w.transpose();
    if (m.has_root())
      f.msg_root[static_cast<std::size_t>(l)] =
          prev * m.root_weights[static_cast<std::size_t>(l - 1)].transpose();

    const auto& edges = comp.layer_edges[static_cast<std::size_t>(l)];
    MatrixX<Scalar> z = MatrixX<Scalar>::Zero(
        static_cast<int>(comp.layer_nodes[static_cast<std::size_t>(l)].size()),
        w.rows());
    for (std::size_t idx = 0; idx < edges.size(); ++idx) {
      const auto& e = edges[idx];
      Scalar wgt = detail::comp_edge_weight(e, l, static_cast<int>(idx), input_mask, layer_mask);
      const auto& rows = e.base_edge >= 0 ? f.msg[static_cast<std::size_t>(l)]
                                          : f.msg_root[static_cast<std::size_t>(l)];
      z.row(e.dst_pos) += wgt * rows.row(e.src_pos);
    }
    f.z[static_cast<std::size_t>(l)] = std::move(z);
    f.x[static_cast<std::size_t>(l)] = apply_activation(
        m.activations[static_cast<std::size_t>(l - 1)], f.z[static_cast<std::size_t>(l)]);
  }
  return f;
}

/// Re-runs a baseline forward from `layer` onward with one layerwise edge
/// forced to zero; layers below are reused. Equivalent to a full pass with
/// that single mask entry zeroed, at roughly half the cost.
template <typename Scalar>
inline CompForward<Scalar> run_forward_drop_edge(const GnnModel<Scalar>& m,
                                                 const core::ComputationGraph& comp,
                                                 const CompForward<Scalar>& base, int layer,
                                                 int edge_idx) {
  const int depth = comp.depth;
  if (layer < 1 || layer > depth) throw ArgumentError("forward: drop layer out of range");
  const auto& edges = comp.layer_edges[static_cast<std::size_t>(layer)];
  if (edge_idx < 0 || edge_idx >= static_cast<int>(edges.size()))
    throw ArgumentError("forward: drop edge index out of range");

  CompForward<Scalar> f = base;
  const auto& e = edges[static_cast<std::size_t>(edge_idx)];
  const auto& rows = e.base_edge >= 0 ? f.msg[static_cast<std::size_t>(layer)]
                                      : f.msg_root[static_cast<std::size_t>(layer)];
  f.z[static_cast<std::size_t>(layer)].row(e.dst_pos) -= rows.row(e.src_pos);
  f.x[static_cast<std::size_t>(layer)] = apply_activation(
      m.activations[static_cast<std::size_t>(layer - 1)], f.z[static_cast<std::size_t>(layer)]);

  for (int l = layer + 1; l <= depth; ++l) {
    const auto& w = m.weights[static_cast<std::size_t>(l - 1)];
    const auto& prev = f.x[static_cast<std::size_t>(l - 1)];
    f.msg[static_cast<std::size_t>(l)] = prev * w.transpose();
    if (m.has_root())
      f.msg_root[static_cast<std::size_t>(l)] =
          prev * m.root_weights[static_cast<std::size_t>(l - 1)].transpose();
    const auto& es = comp.layer_edges[static_cast<std::size_t>(l)];
    MatrixX<Scalar> z = MatrixX<Scalar>::Zero(f.z[static_cast<std::size_t>(l)].rows(),
                                              f.z[static_cast<std::size_t>(l)].cols());
    for (const auto& e2 : es) {
      const auto& r2 = e2.base_edge >= 0 ? f.msg[static_cast<std::size_t>(l)]
                                         : f.msg_root[static_cast<std::size_t>(l)];
      z.row(e2.dst_pos) += r2.row(e2.src_pos);
    }
    f.z[static_cast<std::size_t>(l)] = std::move(z);
    f.x[static_cast<std::size_t>(l)] = apply_activation(
        m.activations[static_cast<std::size_t>(l - 1)], f.z[static_cast<std::size_t>(l)]);
  }
  return f;
}

/// Logit rows for a set of nodes, optionally under an input-level mask.
template <typename Scalar>
inline MatrixX<Scalar> forward(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                               const std::vector<int>& nodes,
                               const EdgeMask<Scalar>* mask = nullptr) {
  for (int v : nodes)
    if (v < 0 || v >= g.n) throw ArgumentError("forward: node id out of range");
  FullForward<Scalar> f = forward_all(m, g, mask ? &mask->values : nullptr);
  MatrixX<Scalar> out(static_cast<int>(nodes.size()), m.output_dim());
  for (std::size_t r = 0; r < nodes.size(); ++r)
    out.row(static_cast<int>(r)) = f.x.back().row(nodes[r]);
  return out;
}

/// Logit row of a single node under a layerwise mask aligned with `comp`.
template <typename Scalar>
inline RowVectorX<Scalar> forward(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                  const core::ComputationGraph& comp,
                                  const LayerwiseMask<Scalar>& mask) {
  CompForward<Scalar> f = run_forward<Scalar>(m, g, comp, nullptr, &mask.values);
  return f.target_output(comp);
}

/// Model's prediction at v: sign of the scalar logit for binary models,
/// argmax logit otherwise (ties resolve to the smallest class index).
template <typename Scalar>
inline int predicted_class(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g, int v) {
  m.validate();
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  RowVectorX<Scalar> out = run_forward(m, g, comp).target_output(comp);
  if (m.output_dim() == 1) return out[0] > Scalar(0) ? 1 : 0;
  Eigen::Index best = 0;
  out.maxCoeff(&best);
  return static_cast<int>(best);
}

/// target_class = -1 resolves to the model's prediction at v.
template <typename Scalar>
inline int resolve_class(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g, int v,
                         int target_class) {
  if (target_class < 0) return predicted_class(m, g, v);
  check_target_class(m.output_dim(), target_class);
  return target_class;
}

}  // namespace gnnattr::engine
