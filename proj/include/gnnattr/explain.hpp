#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gnnattr/gradients.hpp"
#include "gnnattr/rng.hpp"

namespace gnnattr::explainers {

enum class Scope { kInput, kLayerwise };

inline const char* scope_name(Scope s) { return s == Scope::kInput ? "input" : "layerwise"; }

/// One attributed edge. Input-scope entries carry layer = -1 and identify a
/// base-graph edge; layerwise entries name a computation-graph edge copy
/// (src at layer-1, dst at layer; src == dst for self edges).
struct ExplanationEntry {
  int layer = -1;
  int src = -1;
  int dst = -1;
};

template <typename Scalar>
struct Explanation {
  std::string method;
  int node = -1;
  int target_class = -1;
  Scope scope = Scope::kInput;
  std::vector<ExplanationEntry> entries;
  VectorX<Scalar> values;  // aligned with entries
  std::vector<std::pair<std::string, std::string>> config;
};

/// Distinct base-edge ids covered by the computation graph, ascending: the
/// common support of all input-scope explanations of its target.
inline std::vector<int> input_support(const core::ComputationGraph& comp) {
  std::vector<int> ids;
  for (const auto& layer : comp.layer_edges)
    for (const auto& e : layer)
      if (e.base_edge >= 0) ids.push_back(e.base_edge);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

namespace detail {

inline std::string fmt_num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

template <typename Scalar>
inline void fill_input_entries(Explanation<Scalar>& ex, const core::Graph<Scalar>& g,
                               const std::vector<int>& ids) {
  ex.entries.reserve(ids.size());
  for (int id : ids) {
    const auto& [src, dst] = g.edges[static_cast<std::size_t>(id)];
    ex.entries.push_back({-1, src, dst});
  }
}

/// Copies a layerwise mask can scale: the self term is never masked, so
/// self-edge copies (base_edge < 0) get no entry.
inline std::size_t layerwise_entry_count(const core::ComputationGraph& comp) {
  std::size_t n = 0;
  for (int l = 1; l <= comp.depth; ++l)
    for (const auto& e : comp.layer_edges[static_cast<std::size_t>(l)])
      if (e.base_edge >= 0) ++n;
  return n;
}

template <typename Scalar>
inline void fill_layerwise_entries(Explanation<Scalar>& ex, const core::ComputationGraph& comp) {
  ex.entries.reserve(layerwise_entry_count(comp));
  for (int l = 1; l <= comp.depth; ++l)
    for (const auto& e : comp.layer_edges[static_cast<std::size_t>(l)])
      if (e.base_edge >= 0) ex.entries.push_back({l, e.src, e.dst});
}

/// Target logit with the listed base edges' input-level weights set to w.
template <typename Scalar>
inline Scalar masked_logit(const engine::GnnModel<Scalar>& m, const core::Graph<Scalar>& g,
                           const core::ComputationGraph& comp, std::span<const int> edge_ids,
                           Scalar w, int target_class) {
  VectorX<Scalar> mask = VectorX<Scalar>::Ones(g.edge_count());
  for (int id : edge_ids) mask[id] = w;
  RowVectorX<Scalar> out = engine::run_forward(m, g, comp, &mask).target_output(comp);
  return engine::class_logit(out, target_class);
}

}  // namespace detail

/// The class opposite to `target_class`; only scalar-logit models have one.
inline int opposite_class(int output_dim, int target_class) {
  if (output_dim != 1)
    throw ArgumentError("reversed target requires a scalar-logit model");
  engine::check_target_class(output_dim, target_class);
  return 1 - target_class;
}

/// Raw edge gradients over the computation-graph support at the all-ones
/// mask.
template <typename Scalar>
inline Explanation<Scalar> explain_edge_gradients(const engine::GnnModel<Scalar>& m,
                                                  const core::Graph<Scalar>& g, int v,
                                                  int target_class = -1) {
  int cls = engine::resolve_class(m, g, v, target_class);
  VectorX<Scalar> grads = engine::edge_gradients(m, g, v, cls);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  auto ids = input_support(comp);

  Explanation<Scalar> ex;
  ex.method = "grad";
  ex.node = v;
  ex.target_class = cls;
  detail::fill_input_entries(ex, g, ids);
  ex.values.resize(static_cast<int>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) ex.values[static_cast<int>(k)] = grads[ids[k]];
  return ex;
}

/// Output drop when one edge's input-level weight is forced to 0, per edge.
template <typename Scalar>
inline Explanation<Scalar> explain_occlusion(const engine::GnnModel<Scalar>& m,
                                             const core::Graph<Scalar>& g, int v,
                                             int target_class = -1) {
  int cls = engine::resolve_class(m, g, v, target_class);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  auto ids = input_support(comp);
  Scalar base = engine::class_logit(
      engine::run_forward(m, g, comp).target_output(comp), cls);

  Explanation<Scalar> ex;
  ex.method = "occ";
  ex.node = v;
  ex.target_class = cls;
  detail::fill_input_entries(ex, g, ids);
  ex.values.resize(static_cast<int>(ids.size()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    int id = ids[k];
    ex.values[static_cast<int>(k)] =
        base - detail::masked_logit(m, g, comp, std::span<const int>(&id, 1), Scalar(0), cls);
  }
  return ex;
}

/// Binary mask: 1 where the edge gradient strictly exceeds eps, else 0.
template <typename Scalar>
inline Explanation<Scalar> explain_positive_gradients(const engine::GnnModel<Scalar>& m,
                                                      const core::Graph<Scalar>& g, int v,
                                                      Scalar eps, int target_class = -1) {
  if (!(eps >= Scalar(0)))
    throw ArgumentError("positive gradients: threshold must be >= 0");
  Explanation<Scalar> ex = explain_edge_gradients(m, g, v, target_class);
  ex.method = "posgrad";
  ex.config.emplace_back("eps", detail::fmt_num(static_cast<double>(eps)));
  for (int k = 0; k < ex.values.size(); ++k)
    ex.values[k] = ex.values[k] > eps ? Scalar(1) : Scalar(0);
  return ex;
}

namespace detail {

/// Size + entropy penalty: alpha * sum(omega) plus beta times the mean
/// element entropy, with omega clamped away from {0,1} inside the logs.
template <typename Scalar>
inline Scalar mask_regularizer_loss(const VectorX<Scalar>& omega, Scalar alpha, Scalar beta) {
  const Scalar lo = Scalar(1e-12), hi = Scalar(1) - Scalar(1e-12);
  const Scalar inv_m = Scalar(1) / static_cast<Scalar>(omega.size());
  Scalar loss = Scalar(0);
  for (int k = 0; k < omega.size(); ++k) {
    Scalar w = omega[k];
    Scalar wc = std::clamp(w, lo, hi);
    loss += alpha * w;
    loss -= beta * inv_m * ((Scalar(1) - wc) * std::log(Scalar(1) - wc) + wc * std::log(wc));
  }
  return loss;
}

/// d/d omega_k of mask_regularizer_loss with m mask entries total.
template <typename Scalar>
inline Scalar mask_regularizer_grad(Scalar omega_k, Scalar alpha, Scalar beta, std::size_t m) {
  const Scalar lo = Scalar(1e-12), hi = Scalar(1) - Scalar(1e-12);
  Scalar wc = std::clamp(omega_k, lo, hi);
  return alpha - beta / static_cast<Scalar>(m) * std::log(wc / (Scalar(1) - wc));
}

}  // namespace detail

struct GnnExplainerConfig {
  int epochs = 100;
  double learning_rate = 0.003;
  double size_weight = 0.005;   // weight of the mask L1 norm
  double entropy_weight = 1.0;  // weight of the element entropy
  int target_class = -1;        // -1: explain the model's prediction
  bool reversed = false;        // explain the class opposite the resolved one
  bool adam = false;            // plain gradient descent by default
  std::uint64_t seed = 0;
};

/// Gradient-descent soft edge mask: omega = sigmoid(theta) minimizing
/// cross-entropy toward the target class plus size and entropy penalties.
/// Input scope trains one weight per base edge (root terms stay unmasked);
/// layerwise scope trains an independent weight per computation-graph edge.
template <typename Scalar>
inline Explanation<Scalar> explain_gnnexplainer(const engine::GnnModel<Scalar>& m,
                                                const core::Graph<Scalar>& g, int v,
                                                const GnnExplainerConfig& config,
                                                Scope scope = Scope::kInput) {
  if (config.epochs < 0) throw ArgumentError("gnnexplainer: epochs must be >= 0");
  if (config.learning_rate <= 0)
    throw ArgumentError("gnnexplainer: learning rate must be positive");
  if (config.size_weight < 0 || config.entropy_weight < 0)
    throw ArgumentError("gnnexplainer: penalty weights must be >= 0");
  m.validate();

  int cls = engine::resolve_class(m, g, v, config.target_class);
  if (config.reversed) cls = opposite_class(m.output_dim(), cls);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());

  Explanation<Scalar> ex;
  ex.method = config.reversed ? "gnnx-reversed" : "gnnx";
  ex.node = v;
  ex.target_class = cls;
  ex.scope = scope;
  ex.config = {{"epochs", std::to_string(config.epochs)},
               {"lr", detail::fmt_num(config.learning_rate)},
               {"alpha", detail::fmt_num(config.size_weight)},
               {"beta", detail::fmt_num(config.entropy_weight)},
               {"optimizer", config.adam ? "adam" : "gd"},
               {"seed", std::to_string(config.seed)}};

  std::vector<int> ids;
  std::size_t param_count = 0;
  if (scope == Scope::kInput) {
    ids = input_support(comp);
    param_count = ids.size();
    detail::fill_input_entries(ex, g, ids);
  } else {
    param_count = detail::layerwise_entry_count(comp);
    detail::fill_layerwise_entries(ex, comp);
  }
  ex.values.resize(static_cast<int>(param_count));
  if (param_count == 0) return ex;

  // mean-zero init keeps E[sigmoid(theta)] = 1/2; spread scales with the
  // fan-in of the masked neighborhood
  std::size_t fan = scope == Scope::kInput
                        ? [&] {
                            std::vector<int> nodes;
                            for (const auto& layer : comp.layer_nodes)
                              nodes.insert(nodes.end(), layer.begin(), layer.end());
                            std::sort(nodes.begin(), nodes.end());
                            nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
                            return nodes.size();
                          }()
                        : comp.copy_count();
  Rng rng(config.seed);
  Scalar init_std = std::sqrt(Scalar(2) / static_cast<Scalar>(std::max<std::size_t>(fan, 1)));
  VectorX<Scalar> theta(static_cast<int>(param_count));
  for (int k = 0; k < theta.size(); ++k)
    theta[k] = static_cast<Scalar>(rng.normal()) * init_std;

  const Scalar lr = static_cast<Scalar>(config.learning_rate);
  const Scalar alpha = static_cast<Scalar>(config.size_weight);
  const Scalar beta = static_cast<Scalar>(config.entropy_weight);
  const Scalar beta1 = Scalar(0.9), beta2 = Scalar(0.999), adam_eps = Scalar(1e-8);
  VectorX<Scalar> adam_m, adam_v;
  if (config.adam) {
    adam_m = VectorX<Scalar>::Zero(theta.size());
    adam_v = VectorX<Scalar>::Zero(theta.size());
  }

  VectorX<Scalar> omega(theta.size());
  VectorX<Scalar> input_mask;
  std::vector<VectorX<Scalar>> layer_mask;
  if (scope == Scope::kInput) {
    input_mask = VectorX<Scalar>::Ones(g.edge_count());
  } else {
    layer_mask.resize(comp.layer_edges.size());
    for (std::size_t l = 0; l < layer_mask.size(); ++l)
      layer_mask[l].resize(static_cast<int>(comp.layer_edges[l].size()));
  }
  auto scatter_mask = [&] {
    for (int k = 0; k < theta.size(); ++k)
      omega[k] = Scalar(1) / (Scalar(1) + std::exp(-theta[k]));
    if (scope == Scope::kInput) {
      for (std::size_t k = 0; k < ids.size(); ++k)
        input_mask[ids[k]] = omega[static_cast<int>(k)];
    } else {
      // self-edge copies stay at 1: the self term is outside the mask
      int k = 0;
      for (std::size_t l = 1; l < layer_mask.size(); ++l)
        for (int e = 0; e < layer_mask[l].size(); ++e)
          layer_mask[l][e] = comp.layer_edges[l][static_cast<std::size_t>(e)].base_edge >= 0
                                 ? omega[k++]
                                 : Scalar(1);
    }
  };
  const VectorX<Scalar>* imask = scope == Scope::kInput ? &input_mask : nullptr;
  const std::vector<VectorX<Scalar>>* lmask = scope == Scope::kLayerwise ? &layer_mask : nullptr;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    scatter_mask();
    auto fwd = engine::run_forward(m, g, comp, imask, lmask);
    RowVectorX<Scalar> out = fwd.target_output(comp);

    Scalar loss;
    RowVectorX<Scalar> dz(m.output_dim());
    if (m.output_dim() == 1) {
      Scalar u = cls == 1 ? out[0] : -out[0];
      loss = std::max(-u, Scalar(0)) + std::log1p(std::exp(-std::abs(u)));
      Scalar sig_neg = u >= 0 ? std::exp(-u) / (Scalar(1) + std::exp(-u))
                              : Scalar(1) / (Scalar(1) + std::exp(u));
      dz[0] = (cls == 1 ? Scalar(-1) : Scalar(1)) * sig_neg;
    } else {
      Scalar zmax = out.maxCoeff();
      Scalar lse = zmax + std::log((out.array() - zmax).exp().sum());
      loss = lse - out[cls];
      dz = (out.array() - lse).exp();
      dz[cls] -= Scalar(1);
    }

    auto bwd = engine::run_backward(m, g, comp, fwd, dz, imask, lmask);
    VectorX<Scalar> domega(theta.size());
    if (scope == Scope::kInput) {
      VectorX<Scalar> full = engine::accumulate_input_gradients(g, comp, bwd);
      for (std::size_t k = 0; k < ids.size(); ++k) domega[static_cast<int>(k)] = full[ids[k]];
    } else {
      int k = 0;
      for (std::size_t l = 1; l < bwd.edge_grads.size(); ++l)
        for (int e = 0; e < bwd.edge_grads[l].size(); ++e)
          if (comp.layer_edges[l][static_cast<std::size_t>(e)].base_edge >= 0)
            domega[k++] = bwd.edge_grads[l][e];
    }

    loss += detail::mask_regularizer_loss(omega, alpha, beta);
    for (int k = 0; k < theta.size(); ++k)
      domega[k] += detail::mask_regularizer_grad(omega[k], alpha, beta, param_count);
    if (!std::isfinite(static_cast<double>(loss)))
      throw OptimizationError("gnnexplainer: loss is not finite at epoch " +
                              std::to_string(epoch));

    VectorX<Scalar> dtheta =
        domega.cwiseProduct(omega.cwiseProduct(VectorX<Scalar>::Ones(omega.size()) - omega));
    if (!config.adam) {
      theta -= lr * dtheta;
    } else {
      Scalar t = static_cast<Scalar>(epoch + 1);
      adam_m = beta1 * adam_m + (Scalar(1) - beta1) * dtheta;
      adam_v = beta2 * adam_v + (Scalar(1) - beta2) * dtheta.cwiseProduct(dtheta);
      VectorX<Scalar> mhat = adam_m / (Scalar(1) - std::pow(beta1, t));
      VectorX<Scalar> vhat = adam_v / (Scalar(1) - std::pow(beta2, t));
      theta -= lr * mhat.cwiseQuotient(
                        vhat.cwiseSqrt() + VectorX<Scalar>::Constant(vhat.size(), adam_eps));
    }
  }

  scatter_mask();
  ex.values = omega;
  return ex;
}

/// Layerwise gradients C(l,i,j) at the all-ones mask, one value per maskable
/// message copy. Self-edge copies carry the unmasked self term and are left
/// out.
template <typename Scalar>
inline Explanation<Scalar> explain_layerwise_gradients(const engine::GnnModel<Scalar>& m,
                                                       const core::Graph<Scalar>& g, int v,
                                                       int target_class = -1) {
  int cls = engine::resolve_class(m, g, v, target_class);
  core::ComputationGraph comp;
  auto grads = engine::layerwise_edge_gradients(m, g, v, cls, &comp);

  Explanation<Scalar> ex;
  ex.method = "lw-grad";
  ex.node = v;
  ex.target_class = cls;
  ex.scope = Scope::kLayerwise;
  detail::fill_layerwise_entries(ex, comp);
  ex.values.resize(static_cast<int>(detail::layerwise_entry_count(comp)));
  int k = 0;
  for (std::size_t l = 1; l < grads.size(); ++l)
    for (int e = 0; e < grads[l].size(); ++e)
      if (comp.layer_edges[l][static_cast<std::size_t>(e)].base_edge >= 0)
        ex.values[k++] = grads[l][e];
  return ex;
}

/// Output drop when one maskable message copy is removed, per copy. Self-edge
/// copies are not removable, so they get no value.
template <typename Scalar>
inline Explanation<Scalar> explain_layerwise_occlusion(const engine::GnnModel<Scalar>& m,
                                                       const core::Graph<Scalar>& g, int v,
                                                       int target_class = -1) {
  int cls = engine::resolve_class(m, g, v, target_class);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  auto base = engine::run_forward(m, g, comp);
  Scalar base_logit = engine::class_logit(base.target_output(comp), cls);

  Explanation<Scalar> ex;
  ex.method = "lw-occ";
  ex.node = v;
  ex.target_class = cls;
  ex.scope = Scope::kLayerwise;
  detail::fill_layerwise_entries(ex, comp);
  ex.values.resize(static_cast<int>(detail::layerwise_entry_count(comp)));
  int k = 0;
  for (int l = 1; l <= comp.depth; ++l) {
    int count = static_cast<int>(comp.layer_edges[static_cast<std::size_t>(l)].size());
    for (int e = 0; e < count; ++e) {
      if (comp.layer_edges[static_cast<std::size_t>(l)][static_cast<std::size_t>(e)].base_edge < 0)
        continue;
      auto dropped = engine::run_forward_drop_edge(m, comp, base, l, e);
      ex.values[k++] = base_logit - engine::class_logit(dropped.target_output(comp), cls);
    }
  }
  return ex;
}

enum class BaselineKind { kRandom, kFull };

/// Content-free reference masks over the computation-graph support: i.i.d.
/// Uniform[0,1] values, or all ones. self_edges widens the support the way a
/// self term does; layerwise entries still cover maskable copies only.
template <typename Scalar>
inline Explanation<Scalar> baseline_explanation(BaselineKind kind, const core::Graph<Scalar>& g,
                                                int v, int depth, std::uint64_t seed,
                                                Scope scope = Scope::kInput,
                                                bool self_edges = false) {
  if (depth < 1) throw ArgumentError("baseline: depth must be >= 1");
  auto comp = core::build_computation_graph(g, v, depth, true, self_edges);

  Explanation<Scalar> ex;
  ex.method = kind == BaselineKind::kRandom ? "random" : "full";
  ex.node = v;
  ex.scope = scope;
  if (kind == BaselineKind::kRandom) ex.config.emplace_back("seed", std::to_string(seed));
  if (scope == Scope::kInput) {
    auto ids = input_support(comp);
    detail::fill_input_entries(ex, g, ids);
  } else {
    detail::fill_layerwise_entries(ex, comp);
  }
  ex.values.resize(static_cast<int>(ex.entries.size()));
  if (kind == BaselineKind::kFull) {
    ex.values.setOnes();
  } else {
    Rng rng(seed);
    for (int k = 0; k < ex.values.size(); ++k)
      ex.values[k] = static_cast<Scalar>(rng.uniform01());
  }
  return ex;
}

/// Output drop per unit of adjacency mass removed when the listed edges'
/// input-level weights are set to w_base. A single edge with w_base = 0
/// reduces to that edge's occlusion score.
template <typename Scalar>
inline Scalar eig_linear_gradient_score(const engine::GnnModel<Scalar>& m,
                                        const core::Graph<Scalar>& g, int v, int target_class,
                                        std::span<const int> edge_ids, Scalar w_base) {
  m.validate();
  if (edge_ids.empty()) throw ArgumentError("linear gradient score: empty edge set");
  if (!(w_base >= Scalar(0) && w_base <= Scalar(1)))
    throw ArgumentError("linear gradient score: w_base must lie in [0,1]");
  std::vector<int> sorted(edge_ids.begin(), edge_ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ArgumentError("linear gradient score: duplicate edge in edge set");
  for (int id : sorted)
    if (id < 0 || id >= g.edge_count())
      throw ArgumentError("linear gradient score: edge id out of range");

  Scalar denom = static_cast<Scalar>(edge_ids.size()) * std::abs(Scalar(1) - w_base);
  if (denom == Scalar(0))
    throw ArgumentError("linear gradient score: zero denominator (w_base = 1)");

  int cls = engine::resolve_class(m, g, v, target_class);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  Scalar base = engine::class_logit(engine::run_forward(m, g, comp).target_output(comp), cls);
  Scalar masked = detail::masked_logit(m, g, comp, edge_ids, w_base, cls);
  return (base - masked) / denom;
}

}  // namespace gnnattr::explainers
