#pragma once

#include <algorithm>
#include <vector>

#include "gnnattr/forward.hpp"

namespace gnnattr::engine {

/// Reverse-mode adjoints over a computation graph. lambda[l] holds the
/// derivative of the seeded output with respect to x[l] per copy row;
/// edge_grads[l][idx] is the derivative with respect to the layer-l mask
/// entry of layer_edges[l][idx], evaluated at the mask the forward ran with.
template <typename Scalar>
struct CompBackward {
  std::vector<MatrixX<Scalar>> lambda;
  std::vector<VectorX<Scalar>> edge_grads;
};

template <typename Scalar>
inline CompBackward<Scalar> run_backward(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                         const core::ComputationGraph& comp,
                                         const CompForward<Scalar>& fwd,
                                         const RowVectorX<Scalar>& seed,
                                         const VectorX<Scalar>* input_mask = nullptr,
                                         const std::vector<VectorX<Scalar>>* layer_mask = nullptr) {
  detail::check_comp_compatible(m, g, comp);
  if (seed.size() != m.output_dim())
    throw ArgumentError("backward: seed size != model output dimension");
  int target_pos = comp.node_pos(comp.depth, comp.target);
  if (target_pos < 0) throw ArgumentError("backward: target copy missing");

  const int depth = comp.depth;
  CompBackward<Scalar> b;
  b.lambda.resize(static_cast<std::size_t>(depth) + 1);
  b.edge_grads.resize(static_cast<std::size_t>(depth) + 1);
  b.lambda[static_cast<std::size_t>(depth)] = MatrixX<Scalar>::Zero(
      static_cast<int>(comp.layer_nodes[static_cast<std::size_t>(depth)].size()), m.output_dim());
  b.lambda[static_cast<std::size_t>(depth)].row(target_pos) = seed;

  for (int l = depth; l >= 1; --l) {
    const auto& z = fwd.z[static_cast<std::size_t>(l)];
    MatrixX<Scalar> mu = b.lambda[static_cast<std::size_t>(l)].cwiseProduct(
        activation_gate(m.activations[static_cast<std::size_t>(l - 1)], z));
    const auto& w = m.weights[static_cast<std::size_t>(l - 1)];
    MatrixX<Scalar> grad_prev = mu * w;  // rows follow layer l copies
    MatrixX<Scalar> grad_prev_root;
    if (m.has_root()) grad_prev_root = mu * m.root_weights[static_cast<std::size_t>(l - 1)];

    const auto& edges = comp.layer_edges[static_cast<std::size_t>(l)];
    b.edge_grads[static_cast<std::size_t>(l)].resize(static_cast<int>(edges.size()));
    MatrixX<Scalar> lam_prev = MatrixX<Scalar>::Zero(
        static_cast<int>(comp.layer_nodes[static_cast<std::size_t>(l - 1)].size()),
        m.dim(l - 1));
    for (std::size_t idx = 0; idx < edges.size(); ++idx) {
      const auto& e = edges[idx];
      bool self = e.base_edge < 0;
      const auto& msg = self ? fwd.msg_root[static_cast<std::size_t>(l)]
                             : fwd.msg[static_cast<std::size_t>(l)];
      b.edge_grads[static_cast<std::size_t>(l)][static_cast<int>(idx)] =
          mu.row(e.dst_pos).dot(msg.row(e.src_pos));
      Scalar wgt = detail::comp_edge_weight(e, l, static_cast<int>(idx), input_mask, layer_mask);
      const auto& gp = self ? grad_prev_root : grad_prev;
      lam_prev.row(e.src_pos) += wgt * gp.row(e.dst_pos);
    }
    b.lambda[static_cast<std::size_t>(l - 1)] = std::move(lam_prev);
  }
  return b;
}

/// Input-level gradient vector over all base edges: the derivative of the
/// seeded output with respect to each edge's shared weight. Self edges are
/// unmasked at input level and do not contribute.
template <typename Scalar>
inline VectorX<Scalar> accumulate_input_gradients(const core::Graph<Scalar>& g,
                                                  const core::ComputationGraph& comp,
                                                  const CompBackward<Scalar>& b) {
  VectorX<Scalar> out = VectorX<Scalar>::Zero(g.edge_count());
  for (int l = 1; l <= comp.depth; ++l) {
    const auto& edges = comp.layer_edges[static_cast<std::size_t>(l)];
    for (std::size_t idx = 0; idx < edges.size(); ++idx)
      if (edges[idx].base_edge >= 0)
        out[edges[idx].base_edge] += b.edge_grads[static_cast<std::size_t>(l)][static_cast<int>(idx)];
  }
  return out;
}

/// Derivative of the target-class logit of v with respect to every base
/// edge's input-level weight, evaluated at the given mask (default all-ones).
/// Edges outside the computation graph get exactly 0.
template <typename Scalar>
inline VectorX<Scalar> edge_gradients(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                      int v, int target_class,
                                      const EdgeMask<Scalar>* mask = nullptr) {
  m.validate();
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  const VectorX<Scalar>* raw = mask ? &mask->values : nullptr;
  auto fwd = run_forward(m, g, comp, raw);
  RowVectorX<Scalar> seed = class_seed<Scalar>(m.output_dim(), target_class);
  auto bwd = run_backward(m, g, comp, fwd, seed, raw);
  return accumulate_input_gradients(g, comp, bwd);
}

/// Layerwise gradients C at the all-ones mask, aligned with the pruned
/// computation graph's layer_edges (self edges included for root models).
template <typename Scalar>
inline std::vector<VectorX<Scalar>> layerwise_edge_gradients(const GnnModel<Scalar>& m,
                                                             const core::Graph<Scalar>& g, int v,
                                                             int target_class,
                                                             core::ComputationGraph* comp_out = nullptr) {
  m.validate();
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  auto fwd = run_forward(m, g, comp);
  RowVectorX<Scalar> seed = class_seed<Scalar>(m.output_dim(), target_class);
  auto bwd = run_backward(m, g, comp, fwd, seed);
  if (comp_out) *comp_out = std::move(comp);
  return std::move(bwd.edge_grads);
}

/// Post/pre-activation ratios for every (layer, node, neuron) of the whole
/// graph; exactly 0 where the pre-activation is 0.
template <typename Scalar>
inline ActivationPattern<Scalar> activation_patterns(const GnnModel<Scalar>& m,
                                                     const core::Graph<Scalar>& g) {
  FullForward<Scalar> f = forward_all(m, g);
  ActivationPattern<Scalar> p;
  p.layers.resize(f.x.size());
  for (std::size_t l = 1; l < f.x.size(); ++l) {
    const auto& x = f.x[l];
    const auto& z = f.z[l];
    MatrixX<Scalar> r(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        r(i, j) = z(i, j) == Scalar(0) ? Scalar(0) : x(i, j) / z(i, j);
    p.layers[l] = std::move(r);
  }
  return p;
}

namespace detail {

template <typename Scalar, class Eval>
inline Scalar central_difference(Scalar at, Scalar h, Eval&& eval) {
  // evaluation points clamped to [0, 1+h]; the divisor follows the points
  Scalar lo = std::max(at - h, Scalar(0));
  Scalar hi = std::min(at + h, Scalar(1) + h);
  return (eval(hi) - eval(lo)) / (hi - lo);
}

}  // namespace detail

/// Central-difference derivative of the target logit with respect to one
/// edge's input-level weight, around the base mask (default all-ones).
template <typename Scalar>
inline Scalar finite_difference_gradient(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                         int v, int target_class, int edge_id, Scalar h,
                                         const EdgeMask<Scalar>* base = nullptr) {
  m.validate();
  if (h <= Scalar(0)) throw ArgumentError("finite_difference_gradient: h must be positive");
  if (edge_id < 0 || edge_id >= g.edge_count())
    throw ArgumentError("finite_difference_gradient: edge id out of range");
  check_target_class(m.output_dim(), target_class);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  VectorX<Scalar> raw =
      base ? base->values : VectorX<Scalar>::Ones(g.edge_count());
  Scalar at = raw[edge_id];
  return detail::central_difference(at, h, [&](Scalar w) {
    raw[edge_id] = w;
    RowVectorX<Scalar> out = run_forward(m, g, comp, &raw).target_output(comp);
    return class_logit(out, target_class);
  });
}

/// Central-difference derivative with respect to a single layerwise mask
/// entry (layer, edge position), around the all-ones mask.
template <typename Scalar>
inline Scalar finite_difference_gradient(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                                         int v, int target_class, int layer, int edge_pos,
                                         Scalar h) {
  m.validate();
  if (h <= Scalar(0)) throw ArgumentError("finite_difference_gradient: h must be positive");
  check_target_class(m.output_dim(), target_class);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  if (layer < 1 || layer > comp.depth)
    throw ArgumentError("finite_difference_gradient: layer out of range");
  if (edge_pos < 0 ||
      edge_pos >= static_cast<int>(comp.layer_edges[static_cast<std::size_t>(layer)].size()))
    throw ArgumentError("finite_difference_gradient: edge position out of range");
  std::vector<VectorX<Scalar>> raw(comp.layer_edges.size());
  for (std::size_t l = 0; l < raw.size(); ++l)
    raw[l] = VectorX<Scalar>::Ones(static_cast<int>(comp.layer_edges[l].size()));
  return detail::central_difference(Scalar(1), h, [&](Scalar w) {
    raw[static_cast<std::size_t>(layer)][edge_pos] = w;
    RowVectorX<Scalar> out = run_forward<Scalar>(m, g, comp, nullptr, &raw).target_output(comp);
    return class_logit(out, target_class);
  });
}

}  // namespace gnnattr::engine
