#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gnnattr/explain.hpp"

namespace gnnattr::eval {

using explainers::Explanation;

namespace detail {

template <typename Scalar>
inline std::map<std::array<int, 3>, Scalar> entry_map(const Explanation<Scalar>& e) {
  std::map<std::array<int, 3>, Scalar> m;
  for (std::size_t k = 0; k < e.entries.size(); ++k) {
    const auto& en = e.entries[k];
    m[{en.layer, en.src, en.dst}] = e.values[static_cast<int>(k)];
  }
  return m;
}

}  // namespace detail

/// Cosine of two attribution vectors aligned on the union of their edge
/// keys (missing entries read as 0); defined as 0 when either vector is
/// zero. Operands must share scope and target node.
template <typename Scalar>
inline Scalar cosine_similarity(const Explanation<Scalar>& a, const Explanation<Scalar>& b) {
  if (a.scope != b.scope) throw ArgumentError("cosine: explanation scopes differ");
  if (a.node != b.node) throw ArgumentError("cosine: explanations target different nodes");
  auto ma = detail::entry_map(a);
  auto mb = detail::entry_map(b);
  Scalar dot = Scalar(0), na = Scalar(0), nb = Scalar(0);
  for (const auto& [key, va] : ma) {
    na += va * va;
    auto it = mb.find(key);
    if (it != mb.end()) dot += va * it->second;
  }
  for (const auto& [key, vb] : mb) nb += vb * vb;
  if (na == Scalar(0) || nb == Scalar(0)) return Scalar(0);
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Entry-wise difference a - b over the union of keys (missing entries read
/// as 0); keeps a's metadata with method id "a.method-b.method".
template <typename Scalar>
inline Explanation<Scalar> subtract(const Explanation<Scalar>& a, const Explanation<Scalar>& b) {
  if (a.scope != b.scope) throw ArgumentError("subtract: explanation scopes differ");
  if (a.node != b.node) throw ArgumentError("subtract: explanations target different nodes");
  auto ma = detail::entry_map(a);
  for (const auto& [key, vb] : detail::entry_map(b)) ma[key] -= vb;

  Explanation<Scalar> out;
  out.method = a.method + "-" + b.method;
  out.node = a.node;
  out.target_class = a.target_class;
  out.scope = a.scope;
  out.entries.reserve(ma.size());
  out.values.resize(static_cast<int>(ma.size()));
  int k = 0;
  for (const auto& [key, val] : ma) {
    out.entries.push_back({key[0], key[1], key[2]});
    out.values[k++] = val;
  }
  return out;
}

/// Restriction of a layerwise explanation to one layer's entries.
template <typename Scalar>
inline Explanation<Scalar> filter_layer(const Explanation<Scalar>& e, int layer) {
  if (e.scope != explainers::Scope::kLayerwise)
    throw ArgumentError("filter_layer: explanation is not layerwise");
  Explanation<Scalar> out;
  out.method = e.method;
  out.node = e.node;
  out.target_class = e.target_class;
  out.scope = e.scope;
  std::vector<Scalar> vals;
  for (std::size_t k = 0; k < e.entries.size(); ++k)
    if (e.entries[k].layer == layer) {
      out.entries.push_back(e.entries[k]);
      vals.push_back(e.values[static_cast<int>(k)]);
    }
  out.values = Eigen::Map<const VectorX<Scalar>>(vals.data(), static_cast<int>(vals.size()));
  return out;
}

template <typename Scalar>
struct SimilarityReport {
  std::vector<std::string> methods;
  std::string scope;                       // "input", "layerwise", or "layer <l>"
  MatrixX<Scalar> mean;                    // method x method
  MatrixX<Scalar> stddev;                  // sample standard deviation (0 for one instance)
  std::vector<MatrixX<Scalar>> per_instance;
};

/// Mean and standard deviation of pairwise cosine similarity over instances.
/// explanations[m][i] is method m's explanation of instance i; every method
/// must cover the same instances in the same order.
template <typename Scalar>
inline SimilarityReport<Scalar> pairwise_similarity_matrix(
    const std::vector<std::string>& methods,
    const std::vector<std::vector<Explanation<Scalar>>>& explanations,
    const std::string& scope_label = "input") {
  if (methods.size() != explanations.size())
    throw ArgumentError("similarity: one explanation list per method required");
  if (explanations.empty() || explanations.front().empty())
    throw ArgumentError("similarity: empty instance set");
  const std::size_t method_count = methods.size();
  const std::size_t instance_count = explanations.front().size();
  for (const auto& list : explanations)
    if (list.size() != instance_count)
      throw ArgumentError("similarity: methods cover different instance counts");

  SimilarityReport<Scalar> rep;
  rep.methods = methods;
  rep.scope = scope_label;
  const int mc = static_cast<int>(method_count);
  rep.mean = MatrixX<Scalar>::Zero(mc, mc);
  rep.stddev = MatrixX<Scalar>::Zero(mc, mc);
  rep.per_instance.reserve(instance_count);

  for (std::size_t i = 0; i < instance_count; ++i) {
    MatrixX<Scalar> m(mc, mc);
    for (int a = 0; a < mc; ++a) {
      for (int b = a; b < mc; ++b) {
        Scalar c = cosine_similarity(explanations[static_cast<std::size_t>(a)][i],
                                     explanations[static_cast<std::size_t>(b)][i]);
        m(a, b) = c;
        m(b, a) = c;
      }
    }
    rep.mean += m;
    rep.per_instance.push_back(std::move(m));
  }
  rep.mean /= static_cast<Scalar>(instance_count);
  if (instance_count > 1) {
    for (const auto& m : rep.per_instance) {
      MatrixX<Scalar> d = m - rep.mean;
      rep.stddev += d.cwiseProduct(d);
    }
    rep.stddev = (rep.stddev / static_cast<Scalar>(instance_count - 1)).cwiseSqrt();
  }
  return rep;
}

struct RecoveryRecord {
  int node = -1;
  bool counted = false;  // unique non-empty ground truth
  bool success = false;
  std::vector<int> predicted;  // collapsed walk
  std::vector<int> truth;
};

struct RecoveryReport {
  long total = 0;  // counted instances
  long hits = 0;
  double rate = 0.0;
  std::vector<RecoveryRecord> records;
};

/// Consecutive duplicate nodes removed (self-edge steps collapse away).
inline std::vector<int> collapse_repeats(const std::vector<int>& nodes) {
  std::vector<int> out;
  for (int n : nodes)
    if (out.empty() || out.back() != n) out.push_back(n);
  return out;
}

/// Fraction of predictions whose collapsed node sequence equals the unique
/// ground-truth path. Instances without a unique non-empty ground truth are
/// recorded but not counted.
template <typename Scalar>
inline RecoveryReport path_recovery_rate(
    const std::vector<std::pair<int, std::vector<int>>>& predicted,
    const core::Graph<Scalar>& g) {
  RecoveryReport rep;
  for (const auto& [node, walk] : predicted) {
    RecoveryRecord rec;
    rec.node = node;
    rec.predicted = collapse_repeats(walk);
    auto it = g.ground_truth.find(node);
    if (it != g.ground_truth.end() && it->second.unique && !it->second.path.empty()) {
      rec.counted = true;
      rec.truth = it->second.path;
      rec.success = rec.predicted == rec.truth;
      ++rep.total;
      rep.hits += rec.success;
    }
    rep.records.push_back(std::move(rec));
  }
  rep.rate = rep.total == 0 ? 0.0 : static_cast<double>(rep.hits) / static_cast<double>(rep.total);
  return rep;
}

template <typename Scalar>
struct FlipReport {
  std::vector<Scalar> grid;  // descending, starts at 1
  Scalar eps = Scalar(1e-7);
  long edges_total = 0;
  long any_flip = 0;
  long pos_to_neg = 0;
  long neg_to_pos = 0;

  struct Trajectory {
    int node = -1;
    int edge = -1;              // base-graph edge id
    std::vector<int> signs;     // aligned with grid; -1/0/+1
  };
  std::vector<Trajectory> trajectories;
};

/// Gradient sign of every computation-graph edge as its own input-level
/// weight sweeps the grid (all other edges held at 1). Signs of magnitude
/// <= eps count as 0. The grid must lie in [0,1] and contain 1.
template <typename Scalar>
inline FlipReport<Scalar> sign_flip_analysis(const engine::GnnModel<Scalar>& m,
                                             const core::Graph<Scalar>& g,
                                             const std::vector<int>& instances,
                                             std::vector<Scalar> grid, Scalar eps = Scalar(1e-7)) {
  m.validate();
  if (grid.empty()) throw ArgumentError("sign flips: empty grid");
  for (Scalar w : grid)
    if (!(w >= Scalar(0) && w <= Scalar(1)))
      throw ArgumentError("sign flips: grid values must lie in [0,1]");
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.front() != Scalar(1))
    throw ArgumentError("sign flips: grid must contain 1");
  if (!(eps >= Scalar(0))) throw ArgumentError("sign flips: eps must be >= 0");

  FlipReport<Scalar> rep;
  rep.grid = grid;
  rep.eps = eps;
  auto sign_of = [&](Scalar x) { return std::abs(x) <= eps ? 0 : (x > Scalar(0) ? 1 : -1); };

  for (int v : instances) {
    int cls = engine::resolve_class(m, g, v, -1);
    RowVectorX<Scalar> seed = engine::class_seed<Scalar>(m.output_dim(), cls);
    auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());
    std::vector<int> support = explainers::input_support(comp);
    if (support.empty()) continue;

    VectorX<Scalar> mask = VectorX<Scalar>::Ones(g.edge_count());
    auto gradient_at = [&](int edge_id, Scalar w) {
      mask[edge_id] = w;
      auto fwd = engine::run_forward(m, g, comp, &mask);
      auto bwd = engine::run_backward(m, g, comp, fwd, seed, &mask);
      mask[edge_id] = Scalar(1);
      return engine::accumulate_input_gradients(g, comp, bwd)[edge_id];
    };

    // the all-ones evaluation is shared by every edge of this instance
    auto fwd1 = engine::run_forward(m, g, comp, &mask);
    auto bwd1 = engine::run_backward(m, g, comp, fwd1, seed, &mask);
    VectorX<Scalar> grads_at_one = engine::accumulate_input_gradients(g, comp, bwd1);

    for (int edge_id : support) {
      typename FlipReport<Scalar>::Trajectory tr;
      tr.node = v;
      tr.edge = edge_id;
      tr.signs.reserve(grid.size());
      for (Scalar w : grid)
        tr.signs.push_back(
            sign_of(w == Scalar(1) ? grads_at_one[edge_id] : gradient_at(edge_id, w)));

      bool has_pos = std::any_of(tr.signs.begin(), tr.signs.end(), [](int s) { return s > 0; });
      bool has_neg = std::any_of(tr.signs.begin(), tr.signs.end(), [](int s) { return s < 0; });
      ++rep.edges_total;
      rep.any_flip += has_pos && has_neg;
      rep.pos_to_neg += tr.signs.front() > 0 && has_neg;
      rep.neg_to_pos += tr.signs.front() < 0 && has_pos;
      rep.trajectories.push_back(std::move(tr));
    }
  }
  return rep;
}

template <typename Scalar>
struct ExpectationReport {
  Scalar rho = Scalar(0);
  long samples = 0;
  Scalar mc_mean = Scalar(0);
  Scalar std_error = Scalar(0);
  Scalar expected = Scalar(0);  // rho^L times the all-identity output
  Scalar diff = Scalar(0);
  bool pass = false;            // |diff| <= 4 * std_error
};

/// Monte-Carlo check of the gated-linear expectation: every activation is
/// replaced by an independent Bernoulli(rho) gate per (layer, copy, neuron)
/// and the sampled target logit's mean is compared against rho^L times the
/// all-identity forward output.
template <typename Scalar>
inline ExpectationReport<Scalar> expected_linearity_check(const engine::GnnModel<Scalar>& m,
                                                          const core::Graph<Scalar>& g, int v,
                                                          Scalar rho, long samples,
                                                          std::uint64_t seed,
                                                          int target_class = -1) {
  m.validate();
  if (!(rho >= Scalar(0) && rho <= Scalar(1)))
    throw ArgumentError("expectation check: rho must lie in [0,1]");
  if (samples < 1) throw ArgumentError("expectation check: samples must be >= 1");

  int cls = engine::resolve_class(m, g, v, target_class);
  auto comp = core::build_computation_graph(g, v, m.layers(), true, m.has_root());

  // all-identity twin of the model
  engine::GnnModel<Scalar> linear = m;
  std::fill(linear.activations.begin(), linear.activations.end(),
            engine::Activation::kIdentity);
  Scalar tilde =
      engine::class_logit(engine::run_forward(linear, g, comp).target_output(comp), cls);

  ExpectationReport<Scalar> rep;
  rep.rho = rho;
  rep.samples = samples;
  rep.expected = std::pow(rho, static_cast<Scalar>(m.layers())) * tilde;
  if (comp.node_pos(comp.depth, comp.target) < 0)
    throw ArgumentError("expectation check: target missing from computation graph");

  Rng rng(seed);
  const int depth = comp.depth;
  Scalar mean = Scalar(0), m2 = Scalar(0);
  std::vector<MatrixX<Scalar>> x(static_cast<std::size_t>(depth) + 1);
  for (long s = 0; s < samples; ++s) {
    x[0].resize(static_cast<int>(comp.layer_nodes[0].size()), g.feature_dim());
    for (std::size_t r = 0; r < comp.layer_nodes[0].size(); ++r)
      x[0].row(static_cast<int>(r)) = g.features.row(comp.layer_nodes[0][r]);

    for (int l = 1; l <= depth; ++l) {
      const auto& prev = x[static_cast<std::size_t>(l - 1)];
      MatrixX<Scalar> msg = prev * m.weights[static_cast<std::size_t>(l - 1)].transpose();
      MatrixX<Scalar> msg_root;
      if (m.has_root())
        msg_root = prev * m.root_weights[static_cast<std::size_t>(l - 1)].transpose();
      MatrixX<Scalar> z = MatrixX<Scalar>::Zero(
          static_cast<int>(comp.layer_nodes[static_cast<std::size_t>(l)].size()), m.dim(l));
      for (const auto& e : comp.layer_edges[static_cast<std::size_t>(l)])
        z.row(e.dst_pos) += (e.base_edge >= 0 ? msg : msg_root).row(e.src_pos);
      // fresh gate per (copy, neuron), row-major draw order
      for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (Eigen::Index c = 0; c < z.cols(); ++c)
          if (!rng.bernoulli(static_cast<double>(rho))) z(r, c) = Scalar(0);
      x[static_cast<std::size_t>(l)] = std::move(z);
    }
    RowVectorX<Scalar> out =
        x[static_cast<std::size_t>(depth)].row(comp.node_pos(depth, comp.target));
    Scalar sample = engine::class_logit(out, cls);
    Scalar delta = sample - mean;
    mean += delta / static_cast<Scalar>(s + 1);
    m2 += delta * (sample - mean);
  }
  rep.mc_mean = mean;
  rep.std_error = samples > 1
                      ? std::sqrt(m2 / static_cast<Scalar>(samples - 1) /
                                  static_cast<Scalar>(samples))
                      : Scalar(0);
  rep.diff = rep.mc_mean - rep.expected;
  rep.pass = std::abs(rep.diff) <= Scalar(4) * rep.std_error;
  return rep;
}

}  // namespace gnnattr::eval
