#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gnnattr/errors.hpp"
#include "gnnattr/types.hpp"

namespace gnnattr::core {

/// Explanation target attached to generated benchmark nodes.
/// Exactly one of the two shapes is populated: an edge set (evidence
/// datasets) or a source-to-node path with a uniqueness flag (diffusion
/// datasets).
struct NodeGroundTruth {
  std::vector<std::pair<int, int>> edges;
  std::vector<int> path;
  std::vector<std::vector<int>> all_paths;
  bool unique = false;
};

/// Directed graph with per-node features. Undirected inputs are stored with
/// both orientations and directed=false; every operation in the library
/// treats the two orientations as separate edges.
template <typename Scalar>
struct Graph {
  int n = 0;
  bool directed = true;
  std::vector<std::pair<int, int>> edges;  // (src, dst)
  MatrixX<Scalar> features;                // n x p, may be empty
  std::vector<int> labels;                 // per node, -1 = unlabeled; may be empty
  std::map<int, NodeGroundTruth> ground_truth;

  int feature_dim() const { return static_cast<int>(features.cols()); }
  int edge_count() const { return static_cast<int>(edges.size()); }

  /// Validates invariants and builds CSR adjacency. Must be called after
  /// the edge list is complete; all accessors below require it.
  void finalize() {
    if (n < 0) throw ArgumentError("graph: negative node count");
    if (features.size() > 0 && features.rows() != n)
      throw ArgumentError("graph: feature rows != node count");
    if (!labels.empty() && static_cast<int>(labels.size()) != n)
      throw ArgumentError("graph: label count != node count");
    for (auto [i, j] : edges) {
      if (i < 0 || i >= n || j < 0 || j >= n)
        throw ArgumentError("graph: edge endpoint out of range");
      if (i == j) throw ArgumentError("graph: self loops are not allowed");
    }

    auto build = [this](bool by_dst, std::vector<int>& start, std::vector<int>& other,
                        std::vector<int>& eid) {
      start.assign(static_cast<std::size_t>(n) + 1, 0);
      other.resize(edges.size());
      eid.resize(edges.size());
      for (auto [i, j] : edges) ++start[static_cast<std::size_t>(by_dst ? j : i) + 1];
      for (int v = 0; v < n; ++v) start[static_cast<std::size_t>(v) + 1] += start[v];
      std::vector<int> cursor(start.begin(), start.end() - 1);
      for (int e = 0; e < edge_count(); ++e) {
        auto [i, j] = edges[static_cast<std::size_t>(e)];
        int key = by_dst ? j : i;
        int slot = cursor[static_cast<std::size_t>(key)]++;
        other[static_cast<std::size_t>(slot)] = by_dst ? i : j;
        eid[static_cast<std::size_t>(slot)] = e;
      }
      // sort each bucket by neighbor id; parallel arrays move together
      for (int v = 0; v < n; ++v) {
        int lo = start[static_cast<std::size_t>(v)], hi = start[static_cast<std::size_t>(v) + 1];
        std::vector<std::pair<int, int>> tmp;
        tmp.reserve(static_cast<std::size_t>(hi - lo));
        for (int s = lo; s < hi; ++s)
          tmp.emplace_back(other[static_cast<std::size_t>(s)], eid[static_cast<std::size_t>(s)]);
        std::sort(tmp.begin(), tmp.end());
        for (int s = lo; s < hi; ++s) {
          other[static_cast<std::size_t>(s)] = tmp[static_cast<std::size_t>(s - lo)].first;
          eid[static_cast<std::size_t>(s)] = tmp[static_cast<std::size_t>(s - lo)].second;
        }
      }
    };
    build(true, in_start_, in_src_, in_eid_);
    build(false, out_start_, out_dst_, out_eid_);

    // simple graph: duplicate directed edges are rejected
    for (int v = 0; v < n; ++v) {
      auto nb = in_neighbors(v);
      for (std::size_t s = 1; s < nb.size(); ++s)
        if (nb[s] == nb[s - 1]) throw ArgumentError("graph: duplicate edge");
    }
    if (!directed) {
      for (auto [i, j] : edges)
        if (edge_index(j, i) < 0)
          throw ArgumentError("graph: undirected graph must store both orientations");
    }
    for (const auto& [node, gt] : ground_truth) {
      if (node < 0 || node >= n) throw ArgumentError("graph: ground-truth node out of range");
      auto check_path = [this](const std::vector<int>& path) {
        for (std::size_t s = 1; s < path.size(); ++s)
          if (edge_index(path[s - 1], path[s]) < 0)
            throw ArgumentError("graph: ground-truth path is not a directed path");
      };
      check_path(gt.path);
      for (const auto& p : gt.all_paths) check_path(p);
      for (auto [i, j] : gt.edges)
        if (edge_index(i, j) < 0)
          throw ArgumentError("graph: ground-truth edge missing from graph");
    }
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }

  std::span<const int> in_neighbors(int v) const { return slice(in_start_, in_src_, v); }
  std::span<const int> in_edge_ids(int v) const { return slice(in_start_, in_eid_, v); }
  std::span<const int> out_neighbors(int v) const { return slice(out_start_, out_dst_, v); }
  std::span<const int> out_edge_ids(int v) const { return slice(out_start_, out_eid_, v); }

  /// Edge id of (i, j), or -1 when absent.
  int edge_index(int i, int j) const {
    auto nb = in_neighbors(j);
    auto it = std::lower_bound(nb.begin(), nb.end(), i);
    if (it == nb.end() || *it != i) return -1;
    return in_edge_ids(j)[static_cast<std::size_t>(it - nb.begin())];
  }

 private:
  std::span<const int> slice(const std::vector<int>& start, const std::vector<int>& data,
                             int v) const {
    return {data.data() + start[static_cast<std::size_t>(v)],
            static_cast<std::size_t>(start[static_cast<std::size_t>(v) + 1] -
                                     start[static_cast<std::size_t>(v)])};
  }

  std::vector<int> in_start_, in_src_, in_eid_;
  std::vector<int> out_start_, out_dst_, out_eid_;
  bool finalized_ = false;
};

/// Layered DAG of node copies feeding a target node. Layer L holds the
/// target; layer l holds copies of every node within L-l in-hops. Edges only
/// run from layer l-1 to layer l, so the layer index is a topological order.
struct ComputationGraph {
  struct Edge {
    int src = -1;       // base node id at layer l-1
    int dst = -1;       // base node id at layer l
    int src_pos = -1;   // row of src in layer_nodes[l-1]
    int dst_pos = -1;   // row of dst in layer_nodes[l]
    int base_edge = -1; // id in Graph::edges; -1 for a self edge
  };

  int target = -1;
  int depth = 0;
  bool pruned = false;
  bool self_edges = false;
  std::vector<std::vector<int>> layer_nodes;        // size depth+1, each ascending
  std::vector<std::vector<Edge>> layer_edges;       // size depth+1; [0] empty; sorted by (dst, src)

  /// Row of `node` in layer_nodes[layer], or -1 when absent.
  int node_pos(int layer, int node) const {
    const auto& nodes = layer_nodes[static_cast<std::size_t>(layer)];
    auto it = std::lower_bound(nodes.begin(), nodes.end(), node);
    if (it == nodes.end() || *it != node) return -1;
    return static_cast<int>(it - nodes.begin());
  }

  std::size_t copy_count() const {
    std::size_t total = 0;
    for (const auto& nodes : layer_nodes) total += nodes.size();
    return total;
  }

  std::size_t edge_total() const {
    std::size_t total = 0;
    for (const auto& es : layer_edges) total += es.size();
    return total;
  }

  /// True when no complete source-to-target walk exists.
  bool empty() const { return layer_nodes.front().empty(); }
};

/// Builds the computation graph of `v` for an L-layer model. With prune=true
/// (the default) copies with no directed path to the target copy are removed;
/// they cannot affect the target output. Self edges are only materialized
/// when requested (models with a root/self weight).
template <typename Scalar>
inline ComputationGraph build_computation_graph(const Graph<Scalar>& g, int v, int L,
                                                bool prune = true, bool self_edges = false) {
  if (!g.finalized()) throw ArgumentError("build_computation_graph: graph not finalized");
  if (v < 0 || v >= g.n) throw ArgumentError("build_computation_graph: invalid node id");
  if (L < 1) throw ArgumentError("build_computation_graph: depth must be >= 1");

  ComputationGraph c;
  c.target = v;
  c.depth = L;
  c.pruned = prune;
  c.self_edges = self_edges;
  c.layer_nodes.assign(static_cast<std::size_t>(L) + 1, {});
  c.layer_edges.assign(static_cast<std::size_t>(L) + 1, {});

  // membership closure downward: layer l-1 holds layer l plus its in-neighbors
  std::vector<std::vector<char>> member(static_cast<std::size_t>(L) + 1,
                                        std::vector<char>(static_cast<std::size_t>(g.n), 0));
  member[static_cast<std::size_t>(L)][static_cast<std::size_t>(v)] = 1;
  c.layer_nodes[static_cast<std::size_t>(L)] = {v};
  for (int l = L; l >= 1; --l) {
    auto& prev = member[static_cast<std::size_t>(l - 1)];
    for (int j : c.layer_nodes[static_cast<std::size_t>(l)]) {
      prev[static_cast<std::size_t>(j)] = 1;
      for (int i : g.in_neighbors(j)) prev[static_cast<std::size_t>(i)] = 1;
    }
    auto& nodes = c.layer_nodes[static_cast<std::size_t>(l - 1)];
    for (int i = 0; i < g.n; ++i)
      if (prev[static_cast<std::size_t>(i)]) nodes.push_back(i);
  }

  for (int l = 1; l <= L; ++l) {
    auto& es = c.layer_edges[static_cast<std::size_t>(l)];
    for (int j : c.layer_nodes[static_cast<std::size_t>(l)]) {
      std::vector<ComputationGraph::Edge> bucket;
      auto nb = g.in_neighbors(j);
      auto ids = g.in_edge_ids(j);
      for (std::size_t s = 0; s < nb.size(); ++s)
        bucket.push_back({nb[s], j, -1, -1, ids[s]});
      if (self_edges) bucket.push_back({j, j, -1, -1, -1});
      std::sort(bucket.begin(), bucket.end(),
                [](const auto& a, const auto& b) { return a.src < b.src; });
      es.insert(es.end(), bucket.begin(), bucket.end());
    }
    std::sort(es.begin(), es.end(), [](const auto& a, const auto& b) {
      return std::pair(a.dst, a.src) < std::pair(b.dst, b.src);
    });
  }

  if (prune) {
    // a copy survives iff it can reach the target copy
    std::vector<std::vector<char>> reach(static_cast<std::size_t>(L) + 1,
                                         std::vector<char>(static_cast<std::size_t>(g.n), 0));
    reach[static_cast<std::size_t>(L)][static_cast<std::size_t>(v)] = 1;
    for (int l = L; l >= 1; --l)
      for (const auto& e : c.layer_edges[static_cast<std::size_t>(l)])
        if (reach[static_cast<std::size_t>(l)][static_cast<std::size_t>(e.dst)])
          reach[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(e.src)] = 1;
    for (int l = 0; l <= L; ++l) {
      auto& nodes = c.layer_nodes[static_cast<std::size_t>(l)];
      std::erase_if(nodes, [&](int i) {
        return !reach[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
      });
      if (l >= 1)
        std::erase_if(c.layer_edges[static_cast<std::size_t>(l)], [&](const auto& e) {
          return !reach[static_cast<std::size_t>(l)][static_cast<std::size_t>(e.dst)];
        });
    }
  }

  for (int l = 1; l <= L; ++l)
    for (auto& e : c.layer_edges[static_cast<std::size_t>(l)]) {
      e.src_pos = c.node_pos(l - 1, e.src);
      e.dst_pos = c.node_pos(l, e.dst);
    }
  return c;
}

}  // namespace gnnattr::core
