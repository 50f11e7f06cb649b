#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <utility>
#include <vector>

#include "gnnattr/errors.hpp"
#include "gnnattr/graph.hpp"
#include "gnnattr/rng.hpp"

namespace gnnattr::core {

/// Train graphs plus one held-out test graph; labels live on the graphs.
template <typename Scalar>
struct DatasetSplit {
  std::vector<Graph<Scalar>> train;
  Graph<Scalar> test;
  int class_count = 0;
};

/// G(n, p): every ordered pair (i, j), i != j, is an edge independently with
/// probability p. Undirected mode draws unordered pairs and stores both
/// orientations. Deterministic under seed.
template <typename Scalar = double>
inline Graph<Scalar> erdos_renyi(int n, double p, bool directed, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("erdos_renyi: n must be >= 1");
  if (p < 0.0 || p > 1.0) throw ArgumentError("erdos_renyi: p must lie in [0,1]");
  Graph<Scalar> g;
  g.n = n;
  g.directed = directed;
  Rng rng(seed);
  if (directed) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (rng.bernoulli(p)) g.edges.emplace_back(i, j);
      }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.bernoulli(p)) {
          g.edges.emplace_back(i, j);
          g.edges.emplace_back(j, i);
        }
  }
  g.finalize();
  return g;
}

/// Color-majority benchmark. Nodes 0..red-1 are red, the next `blue` blue,
/// optionally the next `green` green; the remainder is gray. Features are
/// one-hot colors (gray is the last component). Every gray node receives
/// 1..max_color_in in-edges from each color, resampled so the majority is
/// never tied, plus background gray-to-gray Erdos-Renyi edges. Labels:
/// binary 1 = red majority, 0 = blue; multiclass uses the color index
/// (0 red, 1 blue, 2 green). Colored nodes are unlabeled. Ground truth per
/// labeled node is the set of in-edges from the majority color.
template <typename Scalar = double>
inline DatasetSplit<Scalar> gen_negative_evidence(int node_count, int red, int blue, int green,
                                                  int train_graphs, std::uint64_t seed,
                                                  int max_color_in = 10,
                                                  double gray_edge_prob = 0.002) {
  if (red < 1 || blue < 1 || green < 0)
    throw ArgumentError("gen_negative_evidence: need red >= 1, blue >= 1, green >= 0");
  if (red + blue + green > node_count)
    throw ArgumentError("gen_negative_evidence: colored nodes exceed node count");
  if (train_graphs < 1) throw ArgumentError("gen_negative_evidence: train_graphs must be >= 1");

  const bool multiclass = green > 0;
  const int colors = multiclass ? 3 : 2;
  const int p = colors + 1;  // + gray
  const int colored = red + blue + green;

  auto make_graph = [&](std::uint64_t gseed) {
    Graph<Scalar> g;
    g.n = node_count;
    g.directed = true;
    g.features = MatrixX<Scalar>::Zero(node_count, p);
    g.labels.assign(static_cast<std::size_t>(node_count), -1);
    for (int v = 0; v < node_count; ++v) {
      int color = v < red ? 0 : (v < red + blue ? 1 : (v < colored ? 2 : colors));
      g.features(v, color) = Scalar(1);
    }

    Rng rng(gseed);
    std::vector<int> counts(static_cast<std::size_t>(colors));
    std::array<int, 3> base = {0, red, red + blue};
    std::array<int, 3> avail = {red, blue, green};
    for (int v = colored; v < node_count; ++v) {
      // redraw until the majority color is unique
      int best = -1;
      for (;;) {
        for (int ccount = 0; ccount < colors; ++ccount)
          counts[static_cast<std::size_t>(ccount)] =
              rng.uniform_int(1, std::min(max_color_in, avail[static_cast<std::size_t>(ccount)]));
        best = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        bool tied = false;
        for (int ccount = 0; ccount < colors; ++ccount)
          if (ccount != best && counts[static_cast<std::size_t>(ccount)] ==
                                    counts[static_cast<std::size_t>(best)])
            tied = true;
        if (!tied) break;
      }
      NodeGroundTruth gt;
      for (int color = 0; color < colors; ++color) {
        auto pick = rng.sample_without_replacement(avail[static_cast<std::size_t>(color)],
                                                   counts[static_cast<std::size_t>(color)]);
        std::sort(pick.begin(), pick.end());
        for (int s : pick) {
          int src = base[static_cast<std::size_t>(color)] + s;
          g.edges.emplace_back(src, v);
          if (color == best) gt.edges.emplace_back(src, v);
        }
      }
      g.labels[static_cast<std::size_t>(v)] = multiclass ? best : (best == 0 ? 1 : 0);
      g.ground_truth.emplace(v, std::move(gt));
    }
    for (int u = colored; u < node_count; ++u)
      for (int w = colored; w < node_count; ++w) {
        if (u == w) continue;
        if (rng.bernoulli(gray_edge_prob)) g.edges.emplace_back(u, w);
      }
    g.finalize();
    return g;
  };

  DatasetSplit<Scalar> split;
  split.class_count = multiclass ? 3 : 2;
  for (int k = 0; k < train_graphs; ++k) split.train.push_back(make_graph(derive_seed(seed, static_cast<std::uint64_t>(k))));
  split.test = make_graph(derive_seed(seed, static_cast<std::uint64_t>(train_graphs)));
  return split;
}

/// Diffusion benchmark on a directed Erdos-Renyi graph. `infected` nodes get
/// the one-hot infected feature; the label is min(shortest directed distance
/// from any infected node, max_class), computed by multi-source BFS, with
/// unreachable nodes in the last class. Nodes of class 1..max_class-1 carry
/// ground truth: one shortest infection path, all shortest paths (capped),
/// and a uniqueness flag from exact path counting.
template <typename Scalar = double>
inline DatasetSplit<Scalar> gen_infection(int node_count, double p, int infected, int max_class,
                                          int train_graphs, std::uint64_t seed,
                                          int max_paths = 8) {
  if (infected < 1 || infected > node_count)
    throw ArgumentError("gen_infection: need 1 <= infected <= node_count");
  if (max_class < 1) throw ArgumentError("gen_infection: max_class must be >= 1");
  if (train_graphs < 1) throw ArgumentError("gen_infection: train_graphs must be >= 1");

  auto make_graph = [&](std::uint64_t gseed) {
    Graph<Scalar> g = erdos_renyi<Scalar>(node_count, p, true, derive_seed(gseed, 0));
    Rng rng(derive_seed(gseed, 1));
    auto sources = rng.sample_without_replacement(node_count, infected);
    std::sort(sources.begin(), sources.end());

    g.features = MatrixX<Scalar>::Zero(node_count, 2);
    std::vector<char> is_source(static_cast<std::size_t>(node_count), 0);
    for (int s : sources) is_source[static_cast<std::size_t>(s)] = 1;
    for (int v = 0; v < node_count; ++v)
      g.features(v, is_source[static_cast<std::size_t>(v)] ? 0 : 1) = Scalar(1);

    const int kInf = node_count + 1;
    std::vector<int> dist(static_cast<std::size_t>(node_count), kInf);
    std::deque<int> queue;
    for (int s : sources) {
      dist[static_cast<std::size_t>(s)] = 0;
      queue.push_back(s);
    }
    std::vector<int> order;  // BFS discovery order = nondecreasing distance
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      order.push_back(u);
      for (int w : g.out_neighbors(u))
        if (dist[static_cast<std::size_t>(w)] == kInf) {
          dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
          queue.push_back(w);
        }
    }

    // exact shortest-path counts with saturation, processed in distance order
    constexpr std::uint64_t kCap = 1ull << 62;
    std::vector<std::uint64_t> count(static_cast<std::size_t>(node_count), 0);
    for (int v : order) {
      if (dist[static_cast<std::size_t>(v)] == 0) {
        count[static_cast<std::size_t>(v)] = 1;
        continue;
      }
      std::uint64_t total = 0;
      for (int u : g.in_neighbors(v))
        if (dist[static_cast<std::size_t>(u)] + 1 == dist[static_cast<std::size_t>(v)])
          total = std::min(kCap, total + count[static_cast<std::size_t>(u)]);
      count[static_cast<std::size_t>(v)] = total;
    }

    g.labels.resize(static_cast<std::size_t>(node_count));
    for (int v = 0; v < node_count; ++v)
      g.labels[static_cast<std::size_t>(v)] = std::min(dist[static_cast<std::size_t>(v)], max_class);

    auto shortest_parents = [&](int v) {
      std::vector<int> parents;
      for (int u : g.in_neighbors(v))
        if (dist[static_cast<std::size_t>(u)] + 1 == dist[static_cast<std::size_t>(v)])
          parents.push_back(u);
      return parents;  // in_neighbors is sorted, so parents ascend
    };

    for (int v = 0; v < node_count; ++v) {
      int d = dist[static_cast<std::size_t>(v)];
      if (d < 1 || d >= max_class) continue;
      NodeGroundTruth gt;
      gt.unique = count[static_cast<std::size_t>(v)] == 1;
      // canonical path: smallest shortest-parent at every step
      std::vector<int> path{v};
      for (int cur = v; dist[static_cast<std::size_t>(cur)] > 0;) {
        cur = shortest_parents(cur).front();
        path.push_back(cur);
      }
      std::reverse(path.begin(), path.end());
      gt.path = std::move(path);
      // all shortest paths via backward DFS in ascending-parent order, capped
      std::vector<int> stack{v};
      auto dfs = [&](auto&& self, int cur) -> void {
        if (static_cast<int>(gt.all_paths.size()) >= max_paths) return;
        if (dist[static_cast<std::size_t>(cur)] == 0) {
          std::vector<int> full(stack.rbegin(), stack.rend());
          gt.all_paths.push_back(std::move(full));
          return;
        }
        for (int u : shortest_parents(cur)) {
          stack.push_back(u);
          self(self, u);
          stack.pop_back();
        }
      };
      dfs(dfs, v);
      g.ground_truth.emplace(v, std::move(gt));
    }
    g.finalize();
    return g;
  };

  DatasetSplit<Scalar> split;
  split.class_count = max_class + 1;
  for (int k = 0; k < train_graphs; ++k)
    split.train.push_back(make_graph(derive_seed(seed, static_cast<std::uint64_t>(k))));
  split.test = make_graph(derive_seed(seed, static_cast<std::uint64_t>(train_graphs)));
  return split;
}

}  // namespace gnnattr::core
