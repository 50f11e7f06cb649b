#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnattr/errors.hpp"
#include "gnnattr/graph.hpp"
#include "gnnattr/types.hpp"

namespace gnnattr::engine {

enum class Activation { kIdentity, kRelu };

inline std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

/// Sum-aggregation message-passing model without biases:
///   x_v^(l) = act_l( sum_{u in N_in(v)} W_l x_u^(l-1) [+ R_l x_v^(l-1)] )
/// The final layer is always identity. The optional root weights R_l add the
/// node's own previous embedding, unscaled by any input-level edge mask.
template <typename Scalar>
struct GnnModel {
  std::vector<MatrixX<Scalar>> weights;       // W_l is dims[l] x dims[l-1]
  std::vector<MatrixX<Scalar>> root_weights;  // empty, or same shapes as weights
  std::vector<Activation> activations;        // one per layer

  int layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  bool has_root() const { return !root_weights.empty(); }

  int dim(int layer) const {  // width after `layer` layers; dim(0) = input
    return layer == 0 ? input_dim() : static_cast<int>(weights[static_cast<std::size_t>(layer - 1)].rows());
  }

  void validate() const {
    if (weights.empty()) throw ArgumentError("model: needs at least one layer");
    if (activations.size() != weights.size())
      throw ArgumentError("model: one activation flag per layer required");
    for (std::size_t l = 1; l < weights.size(); ++l)
      if (weights[l].cols() != weights[l - 1].rows())
        throw ArgumentError("model: weight dimension chain mismatch");
    if (activations.back() != Activation::kIdentity)
      throw ArgumentError("model: final layer must be identity");
    if (has_root()) {
      if (root_weights.size() != weights.size())
        throw ArgumentError("model: root weights must cover every layer");
      for (std::size_t l = 0; l < weights.size(); ++l)
        if (root_weights[l].rows() != weights[l].rows() ||
            root_weights[l].cols() != weights[l].cols())
          throw ArgumentError("model: root weight shape mismatch");
    }
  }
};

/// Scalar-output models expose two logical classes over one logit: class 1 is
/// the logit itself and class 0 its negation. Multiclass indexes the logits.
inline void check_target_class(int output_dim, int target_class) {
  int limit = output_dim == 1 ? 2 : output_dim;
  if (target_class < 0 || target_class >= limit)
    throw ArgumentError("target class out of range");
}

/// Seed row t such that t . z equals the target-class logit.
template <typename Scalar>
inline RowVectorX<Scalar> class_seed(int output_dim, int target_class) {
  check_target_class(output_dim, target_class);
  RowVectorX<Scalar> s = RowVectorX<Scalar>::Zero(output_dim);
  if (output_dim == 1)
    s[0] = target_class == 1 ? Scalar(1) : Scalar(-1);
  else
    s[target_class] = Scalar(1);
  return s;
}

/// Target-class logit from an output row (binary: signed scalar logit).
template <typename Scalar>
inline Scalar class_logit(const RowVectorX<Scalar>& out, int target_class) {
  check_target_class(static_cast<int>(out.size()), target_class);
  if (out.size() == 1) return target_class == 1 ? out[0] : -out[0];
  return out[target_class];
}

/// Architecture description used by training: dims chain and activation of
/// the hidden layers (the final layer is always identity).
struct ArchSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 1;
  Activation hidden_activation = Activation::kRelu;
  bool root_weight = false;

  std::vector<int> dims() const {
    std::vector<int> d{input_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(output_dim);
    return d;
  }
};

/// Input-level edge weights: one value per base-graph edge, applied in every
/// layer simultaneously. Unset edges default to 1.
template <typename Scalar>
struct EdgeMask {
  VectorX<Scalar> values;

  EdgeMask() = default;
  explicit EdgeMask(const core::Graph<Scalar>& g)
      : values(VectorX<Scalar>::Ones(g.edge_count())) {}

  void set(const core::Graph<Scalar>& g, int src, int dst, Scalar w) {
    int e = g.edge_index(src, dst);
    if (e < 0) throw ArgumentError("edge mask: (src,dst) is not a graph edge");
    set(e, w);
  }

  void set(int edge_id, Scalar w) {
    if (edge_id < 0 || edge_id >= values.size())
      throw ArgumentError("edge mask: edge id out of range");
    if (!(w >= Scalar(0) && w <= Scalar(1)))
      throw ArgumentError("edge mask: weights must lie in [0,1]");
    values[edge_id] = w;
  }
};

/// Per-(layer, edge) weights over the computation-graph edges of one target
/// node, aligned with ComputationGraph::layer_edges.
template <typename Scalar>
struct LayerwiseMask {
  std::vector<VectorX<Scalar>> values;  // values[l] matches layer_edges[l]; [0] empty

  LayerwiseMask() = default;
  explicit LayerwiseMask(const core::ComputationGraph& comp) {
    values.resize(comp.layer_edges.size());
    for (std::size_t l = 0; l < comp.layer_edges.size(); ++l)
      values[l] = VectorX<Scalar>::Ones(static_cast<int>(comp.layer_edges[l].size()));
  }

  void set(int layer, int edge_pos, Scalar w) {
    if (layer < 1 || layer >= static_cast<int>(values.size()))
      throw ArgumentError("layerwise mask: layer out of range");
    if (edge_pos < 0 || edge_pos >= values[static_cast<std::size_t>(layer)].size())
      throw ArgumentError("layerwise mask: edge position out of range");
    if (!(w >= Scalar(0) && w <= Scalar(1)))
      throw ArgumentError("layerwise mask: weights must lie in [0,1]");
    values[static_cast<std::size_t>(layer)][edge_pos] = w;
  }
};

/// Post/pre-activation ratios per (layer, node, neuron) from a full-graph
/// forward pass; exactly 0 where the pre-activation is 0. For relu layers the
/// entries are the 0/1 gates that make the network locally linear.
template <typename Scalar>
struct ActivationPattern {
  std::vector<MatrixX<Scalar>> layers;  // layers[l] is n x dims[l]; [0] empty

  Scalar at(int layer, int node, int neuron) const {
    return layers[static_cast<std::size_t>(layer)](node, neuron);
  }
};

struct TrainConfig {
  enum class Optimizer { kSgd, kAdam };
  Optimizer optimizer = Optimizer::kAdam;
  double learning_rate = 0.005;
  int epochs = 100;
  double weight_decay = 0.0;  // L2, added to gradients
  double l1_weight = 0.0;     // L1 on all parameters
  std::uint64_t seed = 0;
};

}  // namespace gnnattr::engine
