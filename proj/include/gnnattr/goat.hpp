#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <vector>

#include "gnnattr/walks.hpp"

namespace gnnattr::paths {

/// One scalar factor of the neuron-product expansion of z_v. Edge components
/// are input-level (layer = -1): the same adjacency entry reused at several
/// layers is one component. Feature components live at layer 0; weight and
/// pattern components are tagged with their layer.
struct Component {
  enum class Kind { kFeature, kEdge, kWeight, kPattern };
  Kind kind = Kind::kFeature;
  int layer = 0;
  int a = 0;  // feature/pattern: node id; edge: src; weight: output neuron
  int b = 0;  // feature/pattern: neuron; edge: dst; weight: input neuron

  std::array<int, 4> key() const { return {static_cast<int>(kind), layer, a, b}; }
  friend bool operator<(const Component& x, const Component& y) { return x.key() < y.key(); }
  friend bool operator==(const Component& x, const Component& y) { return x.key() == y.key(); }
};

/// How each neuron product is evaluated: as a flat product of component
/// values, or as chained per-layer Jacobian steps (two independent routes to
/// the same attribution).
enum class GoatRoute { kComponentValues, kJacobianSteps };

template <typename Scalar>
struct ComponentReport {
  std::vector<Component> components;  // ascending by identity
  VectorX<Scalar> attributions;       // aligned with components
  Scalar total = Scalar(0);           // sum over all neuron products = target logit
  std::size_t product_count = 0;
};

namespace detail {

/// Distinct identities in a factor multiset (e.g. {x, x, y} -> 2).
inline std::size_t distinct_factor_count(std::vector<std::array<int, 4>> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids.size();
}

template <typename Scalar>
inline void check_goat_limits(const engine::GnnModel<Scalar>& m, const core::Graph<Scalar>& g) {
  m.validate();
  if (m.has_root())
    throw ArgumentError("component attribution: models with root weights are unsupported");
  if (m.layers() > 2)
    throw ResourceError("component attribution: enumeration limited to 2 layers");
  for (int l = 0; l <= m.layers(); ++l)
    if (m.dim(l) > 4) throw ResourceError("component attribution: enumeration limited to width 4");
  if (g.n > 6) throw ResourceError("component attribution: enumeration limited to 6 nodes");
}

}  // namespace detail

/// Expand z_v into all neuron-level products and distribute each product's
/// value equally over its distinct components: I_nu = sum over products
/// containing nu of value / #distinct-components.
template <typename Scalar>
inline ComponentReport<Scalar> goat_full_attribution(const engine::GnnModel<Scalar>& m,
                                                     const core::Graph<Scalar>& g, int v,
                                                     int target_class = -1,
                                                     GoatRoute route = GoatRoute::kComponentValues) {
  detail::check_goat_limits(m, g);
  auto ctx = make_walk_context(m, g, v, target_class);
  const auto& comp = ctx.comp;
  const int depth = comp.depth;
  const int out_neuron = m.output_dim() == 1 ? 0 : ctx.target_class;

  auto walks = enumerate_walks(ctx, std::size_t(1) << 20);
  std::map<std::array<int, 4>, Component> names;
  std::map<std::array<int, 4>, Scalar> scores;
  ComponentReport<Scalar> report;

  std::vector<int> pos(static_cast<std::size_t>(depth) + 1);
  std::vector<int> neuron(static_cast<std::size_t>(depth) + 1);
  std::vector<Component> factors;
  std::vector<std::array<int, 4>> keys;
  for (const auto& nodes : walks) {
    for (int l = 0; l <= depth; ++l)
      pos[static_cast<std::size_t>(l)] = comp.node_pos(l, nodes[static_cast<std::size_t>(l)]);
    neuron[static_cast<std::size_t>(depth)] = out_neuron;

    // odometer over the free neuron indices k_0..k_{L-1}
    std::vector<int> k(static_cast<std::size_t>(depth), 0);
    bool done = false;
    while (!done) {
      for (int l = 0; l < depth; ++l) neuron[static_cast<std::size_t>(l)] = k[static_cast<std::size_t>(l)];

      factors.clear();
      factors.push_back({Component::Kind::kFeature, 0, nodes[0], neuron[0]});
      for (int l = 1; l <= depth; ++l) {
        factors.push_back({Component::Kind::kEdge, -1, nodes[static_cast<std::size_t>(l - 1)],
                           nodes[static_cast<std::size_t>(l)]});
        factors.push_back({Component::Kind::kWeight, l, neuron[static_cast<std::size_t>(l)],
                           neuron[static_cast<std::size_t>(l - 1)]});
        if (m.activations[static_cast<std::size_t>(l - 1)] == engine::Activation::kRelu)
          factors.push_back({Component::Kind::kPattern, l, nodes[static_cast<std::size_t>(l)],
                             neuron[static_cast<std::size_t>(l)]});
      }

      Scalar value;
      if (route == GoatRoute::kComponentValues) {
        value = Scalar(1);
        for (const auto& f : factors) {
          switch (f.kind) {
            case Component::Kind::kFeature:
              value *= ctx.fwd.x[0](pos[0], f.b);
              break;
            case Component::Kind::kEdge:
              break;  // unweighted adjacency entry: factor 1
            case Component::Kind::kWeight:
              value *= m.weights[static_cast<std::size_t>(f.layer - 1)](f.a, f.b);
              break;
            case Component::Kind::kPattern:
              value *= ctx.gate[static_cast<std::size_t>(f.layer)](
                  pos[static_cast<std::size_t>(f.layer)], f.b);
              break;
          }
        }
        value *= ctx.seed[out_neuron];
      } else {
        value = ctx.seed[out_neuron];
        for (int l = depth; l >= 1; --l) {
          Scalar step = m.weights[static_cast<std::size_t>(l - 1)](
              neuron[static_cast<std::size_t>(l)], neuron[static_cast<std::size_t>(l - 1)]);
          if (m.activations[static_cast<std::size_t>(l - 1)] == engine::Activation::kRelu)
            step = ctx.gate[static_cast<std::size_t>(l)](pos[static_cast<std::size_t>(l)],
                                                         neuron[static_cast<std::size_t>(l)]) *
                   step;
          value *= step;
        }
        value *= ctx.fwd.x[0](pos[0], neuron[0]);
      }

      keys.clear();
      for (const auto& f : factors) keys.push_back(f.key());
      std::size_t distinct = detail::distinct_factor_count(keys);
      Scalar share = value / static_cast<Scalar>(distinct);
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      for (const auto& key : keys) {
        scores[key] += share;
        auto it = std::find_if(factors.begin(), factors.end(),
                               [&](const Component& f) { return f.key() == key; });
        names.emplace(key, *it);
      }
      report.total += value;
      ++report.product_count;

      done = true;
      for (int l = 0; l < depth; ++l) {
        if (++k[static_cast<std::size_t>(l)] < m.dim(l)) {
          done = false;
          break;
        }
        k[static_cast<std::size_t>(l)] = 0;
      }
      if (depth == 0) break;
    }
  }

  report.components.reserve(scores.size());
  report.attributions.resize(static_cast<int>(scores.size()));
  int idx = 0;
  for (const auto& [key, score] : scores) {
    report.components.push_back(names.at(key));
    report.attributions[idx++] = score;
  }
  return report;
}

/// Attribution of a single component; 0 when the component appears in no
/// product (e.g. an edge outside the computation graph).
template <typename Scalar>
inline Scalar goat_component_attribution(const engine::GnnModel<Scalar>& m,
                                         const core::Graph<Scalar>& g, int v,
                                         const Component& nu, int target_class = -1,
                                         GoatRoute route = GoatRoute::kComponentValues) {
  auto report = goat_full_attribution(m, g, v, target_class, route);
  for (std::size_t i = 0; i < report.components.size(); ++i)
    if (report.components[i] == nu) return report.attributions[static_cast<int>(i)];
  return Scalar(0);
}

}  // namespace gnnattr::paths
