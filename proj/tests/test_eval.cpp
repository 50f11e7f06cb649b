#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <gnnattr/eval.hpp>
#include <gnnattr/generators.hpp>
#include <gnnattr/train.hpp>

namespace {

using gnnattr::ArgumentError;
using gnnattr::MatrixX;
using gnnattr::Rng;
using gnnattr::VectorX;
using gnnattr::core::Graph;
using gnnattr::core::erdos_renyi;
using gnnattr::engine::Activation;
using gnnattr::engine::ArchSpec;
using gnnattr::engine::GnnModel;
using gnnattr::engine::init_model;
using gnnattr::eval::collapse_repeats;
using gnnattr::eval::cosine_similarity;
using gnnattr::eval::expected_linearity_check;
using gnnattr::eval::filter_layer;
using gnnattr::eval::pairwise_similarity_matrix;
using gnnattr::eval::path_recovery_rate;
using gnnattr::eval::sign_flip_analysis;
using gnnattr::eval::subtract;
using gnnattr::explainers::Explanation;
using gnnattr::explainers::ExplanationEntry;
using gnnattr::explainers::Scope;

Explanation<double> make_expl(const std::string& method, int node,
                              const std::vector<std::array<int, 3>>& keys,
                              const std::vector<double>& vals, Scope scope = Scope::kInput) {
  Explanation<double> ex;
  ex.method = method;
  ex.node = node;
  ex.target_class = 1;
  ex.scope = scope;
  for (const auto& k : keys) {
    ExplanationEntry e;
    e.layer = k[0];
    e.src = k[1];
    e.dst = k[2];
    ex.entries.push_back(e);
  }
  ex.values = Eigen::Map<const VectorX<double>>(vals.data(), static_cast<int>(vals.size()));
  return ex;
}

double value_of(const Explanation<double>& ex, int layer, int src, int dst) {
  for (std::size_t k = 0; k < ex.entries.size(); ++k)
    if (ex.entries[k].layer == layer && ex.entries[k].src == src && ex.entries[k].dst == dst)
      return ex.values[static_cast<int>(k)];
  ADD_FAILURE() << "entry (" << layer << "," << src << "," << dst << ") absent";
  return 0.0;
}

template <typename Scalar = double>
GnnModel<Scalar> make_random_model(int input_dim, std::vector<int> hidden, int output_dim,
                                   Activation act, bool root, std::uint64_t seed) {
  ArchSpec arch;
  arch.input_dim = input_dim;
  arch.hidden = std::move(hidden);
  arch.output_dim = output_dim;
  arch.hidden_activation = act;
  arch.root_weight = root;
  return init_model<Scalar>(arch, seed);
}

Graph<double> make_random_featured_graph(int n, double p, int dim, std::uint64_t seed) {
  auto g = erdos_renyi<double>(n, p, true, seed);
  Rng rng(seed + 1);
  g.features = MatrixX<double>(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) g.features(i, j) = rng.normal();
  return g;
}

TEST(Cosine, IdenticalExplanationsScoreOne) {
  auto a = make_expl("m1", 3, {{{-1, 0, 3}}, {{-1, 1, 3}}}, {0.6, -0.2});
  auto b = make_expl("m2", 3, {{{-1, 1, 3}}, {{-1, 0, 3}}}, {-0.2, 0.6});
  EXPECT_NEAR(cosine_similarity(a, b), 1.0, 1e-15);
}

TEST(Cosine, DisjointSupportScoresZero) {
  auto a = make_expl("m1", 3, {{{-1, 0, 3}}}, {1.0});
  auto b = make_expl("m2", 3, {{{-1, 1, 3}}}, {1.0});
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
}

TEST(Cosine, MissingKeysReadAsZeroOnTheUnion) {
  // (1,1) against (1,0): dot 1, norms sqrt(2) and 1.
  auto a = make_expl("m1", 3, {{{-1, 0, 3}}, {{-1, 1, 3}}}, {1.0, 1.0});
  auto b = make_expl("m2", 3, {{{-1, 0, 3}}}, {1.0});
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 1.0 / std::sqrt(2.0));
}

TEST(Cosine, ZeroVectorScoresZeroInsteadOfNan) {
  auto a = make_expl("m1", 3, {{{-1, 0, 3}}}, {0.0});
  auto b = make_expl("m2", 3, {{{-1, 0, 3}}}, {2.0});
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 0.0);
}

TEST(Cosine, MismatchedScopeOrNodeIsRejected) {
  auto a = make_expl("m1", 3, {{{-1, 0, 3}}}, {1.0});
  auto b = make_expl("m2", 4, {{{-1, 0, 4}}}, {1.0});
  EXPECT_THROW((void)cosine_similarity(a, b), ArgumentError);
  auto c = make_expl("m3", 3, {{{1, 0, 3}}}, {1.0}, Scope::kLayerwise);
  EXPECT_THROW((void)cosine_similarity(a, c), ArgumentError);
}

TEST(Subtract, DifferenceOverKeyUnionKeepsMetadata) {
  auto a = make_expl("grad", 5, {{{-1, 0, 5}}, {{-1, 1, 5}}}, {2.0, 1.0});
  auto b = make_expl("occ", 5, {{{-1, 0, 5}}, {{-1, 2, 5}}}, {0.5, 3.0});
  auto d = subtract(a, b);
  EXPECT_EQ(d.method, "grad-occ");
  EXPECT_EQ(d.node, 5);
  EXPECT_EQ(d.scope, Scope::kInput);
  ASSERT_EQ(d.entries.size(), 3u);
  EXPECT_DOUBLE_EQ(value_of(d, -1, 0, 5), 1.5);
  EXPECT_DOUBLE_EQ(value_of(d, -1, 1, 5), 1.0);
  EXPECT_DOUBLE_EQ(value_of(d, -1, 2, 5), -3.0);
}

TEST(Subtract, SelfDifferenceIsZeroEverywhere) {
  auto a = make_expl("grad", 5, {{{-1, 0, 5}}, {{-1, 1, 5}}}, {2.0, -1.0});
  auto d = subtract(a, a);
  for (int k = 0; k < d.values.size(); ++k) EXPECT_DOUBLE_EQ(d.values[k], 0.0);
}

TEST(FilterLayer, KeepsOnlyTheRequestedLayer) {
  auto e = make_expl("lw", 2, {{{1, 0, 2}}, {{2, 0, 2}}, {{1, 1, 2}}}, {0.1, 0.2, 0.3},
                     Scope::kLayerwise);
  auto f = filter_layer(e, 1);
  ASSERT_EQ(f.entries.size(), 2u);
  EXPECT_EQ(f.scope, Scope::kLayerwise);
  EXPECT_DOUBLE_EQ(value_of(f, 1, 0, 2), 0.1);
  EXPECT_DOUBLE_EQ(value_of(f, 1, 1, 2), 0.3);
  auto none = filter_layer(e, 9);
  EXPECT_TRUE(none.entries.empty());
  EXPECT_EQ(none.values.size(), 0);
}

TEST(FilterLayer, RejectsInputScopeExplanations) {
  auto e = make_expl("grad", 2, {{{-1, 0, 2}}}, {1.0});
  EXPECT_THROW((void)filter_layer(e, 0), ArgumentError);
}

TEST(SimilarityMatrix, SymmetricWithUnitDiagonalAndSampleSpread) {
  // Two methods, two instances: cosines 1 and 0, so mean 0.5 off-diagonal.
  std::vector<std::vector<Explanation<double>>> ex(2);
  ex[0].push_back(make_expl("a", 1, {{{-1, 0, 1}}}, {1.0}));
  ex[0].push_back(make_expl("a", 2, {{{-1, 0, 2}}}, {1.0}));
  ex[1].push_back(make_expl("b", 1, {{{-1, 0, 1}}}, {2.0}));
  ex[1].push_back(make_expl("b", 2, {{{-1, 1, 2}}}, {1.0}));
  auto rep = pairwise_similarity_matrix<double>({"a", "b"}, ex, "input");
  ASSERT_EQ(rep.mean.rows(), 2);
  ASSERT_EQ(rep.per_instance.size(), 2u);
  EXPECT_EQ(rep.scope, "input");
  EXPECT_DOUBLE_EQ(rep.mean(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(rep.mean(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(rep.mean(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(rep.mean(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(rep.stddev(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(rep.stddev(0, 1), std::sqrt(0.5));
  EXPECT_DOUBLE_EQ(rep.per_instance[0](0, 1), 1.0);
  EXPECT_DOUBLE_EQ(rep.per_instance[1](0, 1), 0.0);
}

TEST(SimilarityMatrix, SingleInstanceHasZeroSpread) {
  std::vector<std::vector<Explanation<double>>> ex(1);
  ex[0].push_back(make_expl("a", 1, {{{-1, 0, 1}}}, {1.0}));
  auto rep = pairwise_similarity_matrix<double>({"a"}, ex);
  EXPECT_DOUBLE_EQ(rep.mean(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(rep.stddev(0, 0), 0.0);
}

TEST(SimilarityMatrix, ValidatesShape) {
  std::vector<std::vector<Explanation<double>>> ex(2);
  ex[0].push_back(make_expl("a", 1, {{{-1, 0, 1}}}, {1.0}));
  ex[1].push_back(make_expl("b", 1, {{{-1, 0, 1}}}, {1.0}));
  ex[1].push_back(make_expl("b", 2, {{{-1, 0, 2}}}, {1.0}));
  EXPECT_THROW((void)pairwise_similarity_matrix<double>({"a"}, ex), ArgumentError);
  EXPECT_THROW((void)pairwise_similarity_matrix<double>({"a", "b"}, ex), ArgumentError);
  std::vector<std::vector<Explanation<double>>> empty;
  EXPECT_THROW((void)pairwise_similarity_matrix<double>({}, empty), ArgumentError);
}

TEST(CollapseRepeats, SquashesConsecutiveDuplicatesOnly) {
  EXPECT_EQ(collapse_repeats({1, 1, 2, 2, 1}), (std::vector<int>{1, 2, 1}));
  EXPECT_EQ(collapse_repeats({3, 3, 3}), (std::vector<int>{3}));
  EXPECT_EQ(collapse_repeats({}), (std::vector<int>{}));
  EXPECT_EQ(collapse_repeats({0, 1, 2}), (std::vector<int>{0, 1, 2}));
}

Graph<double> make_truth_graph() {
  Graph<double> g;
  g.n = 6;
  g.directed = true;
  g.features = MatrixX<double>::Zero(6, 1);
  g.edges = {{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}};
  g.finalize();
  auto& t1 = g.ground_truth[1];
  t1.edges = {{0, 1}};
  t1.path = {0, 1};
  t1.all_paths = {{0, 1}};
  t1.unique = true;
  auto& t2 = g.ground_truth[2];
  t2.edges = {{0, 2}};
  t2.path = {0, 2};
  t2.all_paths = {{0, 2}, {0, 1, 2}};
  t2.unique = false;
  g.ground_truth[3].unique = true;  // deliberately empty path
  return g;
}

TEST(PathRecovery, CountsOnlyUniqueNonEmptyGroundTruth) {
  auto g = make_truth_graph();
  std::vector<std::pair<int, std::vector<int>>> preds = {
      {1, {0, 0, 1, 1}},  // collapses to the true path
      {2, {0, 2}},        // ambiguous truth: recorded, not counted
      {3, {3}},           // empty truth: recorded, not counted
      {4, {3, 4}},        // no truth entry at all
  };
  auto rep = path_recovery_rate(preds, g);
  EXPECT_EQ(rep.total, 1);
  EXPECT_EQ(rep.hits, 1);
  EXPECT_DOUBLE_EQ(rep.rate, 1.0);
  ASSERT_EQ(rep.records.size(), 4u);
  EXPECT_TRUE(rep.records[0].counted);
  EXPECT_TRUE(rep.records[0].success);
  EXPECT_EQ(rep.records[0].predicted, (std::vector<int>{0, 1}));
  EXPECT_EQ(rep.records[0].truth, (std::vector<int>{0, 1}));
  for (std::size_t k = 1; k < rep.records.size(); ++k) {
    EXPECT_FALSE(rep.records[k].counted);
    EXPECT_FALSE(rep.records[k].success);
  }
}

TEST(PathRecovery, MismatchesLowerTheRateAndEmptyInputYieldsZero) {
  auto g = make_truth_graph();
  g.ground_truth[2].unique = true;  // now two counted instances
  std::vector<std::pair<int, std::vector<int>>> preds = {
      {1, {0, 1}},
      {2, {0, 1, 2}},  // true path is {0, 2}
  };
  auto rep = path_recovery_rate(preds, g);
  EXPECT_EQ(rep.total, 2);
  EXPECT_EQ(rep.hits, 1);
  EXPECT_DOUBLE_EQ(rep.rate, 0.5);

  auto empty = path_recovery_rate({}, g);
  EXPECT_EQ(empty.total, 0);
  EXPECT_DOUBLE_EQ(empty.rate, 0.0);
}

TEST(SignFlips, LinearModelProducesNoFlips) {
  auto g = make_random_featured_graph(12, 0.3, 3, 41);
  auto m = make_random_model(3, {}, 1, Activation::kIdentity, false, 42);
  std::vector<int> nodes = {0, 1, 2, 3, 4, 5};
  auto rep = sign_flip_analysis(m, g, nodes, {0.0, 0.5, 1.0, 0.5});
  EXPECT_EQ(rep.grid, (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_GT(rep.edges_total, 0);
  EXPECT_EQ(rep.any_flip, 0);
  EXPECT_EQ(rep.pos_to_neg, 0);
  EXPECT_EQ(rep.neg_to_pos, 0);
  for (const auto& tr : rep.trajectories) {
    ASSERT_EQ(tr.signs.size(), rep.grid.size());
    // A linear logit has a constant derivative along the sweep.
    for (int s : tr.signs) EXPECT_EQ(s, tr.signs.front());
  }
}

TEST(SignFlips, DeepLinearModelOnAcyclicGraphProducesNoFlips) {
  // Edges only run from lower to higher index, so no walk repeats an edge
  // and the logit stays affine in every individual edge weight.
  Graph<double> g;
  g.n = 10;
  g.directed = true;
  Rng rng(7);
  for (int i = 0; i < g.n; ++i)
    for (int j = i + 1; j < g.n; ++j)
      if (rng.uniform01() < 0.4) g.edges.push_back({i, j});
  g.features = MatrixX<double>(g.n, 2);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < 2; ++j) g.features(i, j) = rng.normal();
  g.finalize();
  auto m = make_random_model(2, {3}, 1, Activation::kIdentity, false, 8);
  auto rep = sign_flip_analysis(m, g, {7, 8, 9}, {1.0, 0.75, 0.5, 0.25, 0.0});
  EXPECT_GT(rep.edges_total, 0);
  EXPECT_EQ(rep.any_flip, 0);
  EXPECT_EQ(rep.pos_to_neg, 0);
  EXPECT_EQ(rep.neg_to_pos, 0);
}

TEST(SignFlips, ReluGateSwitchFlipsAGradientSign) {
  // Root self-weights keep both endpoint copies alive, so the swept edge
  // (0, 1) acts at both layers: z(w) = w * relu(x_c + x_a) + relu(w * x_a
  // + x_v). The relu branch turns on below w = 2/3 and contributes -3.
  Graph<double> g;
  g.n = 3;
  g.directed = true;
  g.edges = {{0, 1}, {2, 0}};
  g.features = MatrixX<double>(3, 1);
  g.features << -3.0, 2.0, 4.0;
  g.finalize();

  GnnModel<double> m;
  m.weights = {MatrixX<double>::Ones(1, 1), MatrixX<double>::Ones(1, 1)};
  m.root_weights = {MatrixX<double>::Ones(1, 1), MatrixX<double>::Ones(1, 1)};
  m.activations = {Activation::kRelu, Activation::kIdentity};

  auto rep = sign_flip_analysis(m, g, {1}, {1.0, 0.5, 0.0});
  EXPECT_EQ(rep.edges_total, 2);
  EXPECT_EQ(rep.any_flip, 1);
  EXPECT_EQ(rep.pos_to_neg, 1);
  EXPECT_EQ(rep.neg_to_pos, 0);

  int swept = g.edge_index(0, 1);
  bool found = false;
  for (const auto& tr : rep.trajectories)
    if (tr.edge == swept) {
      found = true;
      EXPECT_EQ(tr.node, 1);
      EXPECT_EQ(tr.signs, (std::vector<int>{1, -1, -1}));
    }
  EXPECT_TRUE(found);
}

TEST(SignFlips, CountsAgreeWithTrajectories) {
  auto g = make_random_featured_graph(14, 0.25, 3, 51);
  auto m = make_random_model(3, {4}, 1, Activation::kRelu, true, 52);
  auto rep = sign_flip_analysis(m, g, {0, 3, 6, 9, 12}, {1.0, 0.8, 0.6, 0.4, 0.2, 0.0});
  ASSERT_EQ(static_cast<long>(rep.trajectories.size()), rep.edges_total);
  long any = 0, p2n = 0, n2p = 0;
  for (const auto& tr : rep.trajectories) {
    ASSERT_EQ(tr.signs.size(), rep.grid.size());
    bool pos = false, neg = false;
    for (int s : tr.signs) {
      ASSERT_TRUE(s == -1 || s == 0 || s == 1);
      pos |= s > 0;
      neg |= s < 0;
    }
    any += pos && neg;
    p2n += tr.signs.front() > 0 && neg;
    n2p += tr.signs.front() < 0 && pos;
  }
  EXPECT_EQ(rep.any_flip, any);
  EXPECT_EQ(rep.pos_to_neg, p2n);
  EXPECT_EQ(rep.neg_to_pos, n2p);
  EXPECT_GE(rep.any_flip, rep.pos_to_neg);
  EXPECT_GE(rep.any_flip, rep.neg_to_pos);
  EXPECT_LE(rep.any_flip, rep.edges_total);
}

TEST(SignFlips, ValidatesGridAndEps) {
  auto g = make_random_featured_graph(6, 0.4, 2, 61);
  auto m = make_random_model(2, {}, 1, Activation::kIdentity, false, 62);
  EXPECT_THROW((void)sign_flip_analysis(m, g, {0}, {}), ArgumentError);
  EXPECT_THROW((void)sign_flip_analysis(m, g, {0}, {0.5, 0.2}), ArgumentError);
  EXPECT_THROW((void)sign_flip_analysis(m, g, {0}, {1.0, -0.1}), ArgumentError);
  EXPECT_THROW((void)sign_flip_analysis(m, g, {0}, {1.0, 1.5}), ArgumentError);
  EXPECT_THROW((void)sign_flip_analysis(m, g, {0}, {1.0, 0.5}, -1e-9), ArgumentError);
}

TEST(Expectation, FullKeepProbabilityMatchesIdentityForwardExactly) {
  auto g = make_random_featured_graph(10, 0.35, 3, 71);
  auto m = make_random_model(3, {4}, 1, Activation::kRelu, false, 72);
  auto rep = expected_linearity_check(m, g, 4, 1.0, 50, 5);
  EXPECT_DOUBLE_EQ(rep.rho, 1.0);
  EXPECT_EQ(rep.samples, 50);
  // With every gate open each sample equals the ungated linear output.
  EXPECT_DOUBLE_EQ(rep.mc_mean, rep.expected);
  EXPECT_DOUBLE_EQ(rep.diff, 0.0);
  EXPECT_DOUBLE_EQ(rep.std_error, 0.0);
  EXPECT_TRUE(rep.pass);
}

TEST(Expectation, GatedMeanTracksTheScaledLinearOutput) {
  auto g = make_random_featured_graph(10, 0.35, 3, 81);
  auto m = make_random_model(3, {4}, 1, Activation::kRelu, false, 82);
  const int v = 3;
  auto rep = expected_linearity_check(m, g, v, 0.5, 40000, 9);

  GnnModel<double> linear = m;
  std::fill(linear.activations.begin(), linear.activations.end(), Activation::kIdentity);
  auto comp = gnnattr::core::build_computation_graph(g, v, m.layers(), true, m.has_root());
  int cls = gnnattr::engine::resolve_class(m, g, v, -1);
  double tilde = gnnattr::engine::class_logit(
      gnnattr::engine::run_forward(linear, g, comp).target_output(comp), cls);

  EXPECT_DOUBLE_EQ(rep.expected, 0.25 * tilde);
  EXPECT_GT(rep.std_error, 0.0);
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(std::abs(rep.diff), 4.0 * rep.std_error);
}

TEST(Expectation, ValidatesProbabilityAndSampleCount) {
  auto g = make_random_featured_graph(6, 0.4, 2, 91);
  auto m = make_random_model(2, {}, 1, Activation::kIdentity, false, 92);
  EXPECT_THROW((void)expected_linearity_check(m, g, 0, -0.1, 10, 1), ArgumentError);
  EXPECT_THROW((void)expected_linearity_check(m, g, 0, 1.5, 10, 1), ArgumentError);
  EXPECT_THROW((void)expected_linearity_check(m, g, 0, 0.5, 0, 1), ArgumentError);
}

}  // namespace
