#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <gnnattr/generators.hpp>
#include <gnnattr/serialize.hpp>
#include <gnnattr/train.hpp>

namespace {

using gnnattr::ArgumentError;
using gnnattr::IoError;
using gnnattr::MatrixX;
using gnnattr::core::Graph;
using gnnattr::core::gen_infection;
using gnnattr::core::gen_negative_evidence;
using gnnattr::engine::Activation;
using gnnattr::engine::ArchSpec;
using gnnattr::engine::GnnModel;
using gnnattr::engine::init_model;
using gnnattr::explainers::Explanation;
using gnnattr::explainers::ExplanationEntry;
using gnnattr::explainers::Scope;
using gnnattr::io::explanation_from_json;
using gnnattr::io::explanation_to_json;
using gnnattr::io::graph_from_json;
using gnnattr::io::graph_to_json;
using gnnattr::io::json;
using gnnattr::io::load_json;
using gnnattr::io::model_from_json;
using gnnattr::io::model_to_json;
using gnnattr::io::save_json;
using gnnattr::io::save_text;
using gnnattr::io::similarity_csv;
using gnnattr::io::split_from_json;
using gnnattr::io::split_to_json;
using gnnattr::io::walk_from_json;
using gnnattr::io::walk_to_json;

void expect_same_matrix(const MatrixX<double>& a, const MatrixX<double>& b) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  if (a.size() > 0) {
    EXPECT_TRUE((a.array() == b.array()).all());
  }
}

void expect_same_graph(const Graph<double>& a, const Graph<double>& b) {
  EXPECT_EQ(a.n, b.n);
  EXPECT_EQ(a.directed, b.directed);
  EXPECT_EQ(a.edges, b.edges);
  expect_same_matrix(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  ASSERT_EQ(a.ground_truth.size(), b.ground_truth.size());
  for (const auto& [node, info] : a.ground_truth) {
    auto it = b.ground_truth.find(node);
    ASSERT_NE(it, b.ground_truth.end()) << "node " << node;
    EXPECT_EQ(info.edges, it->second.edges);
    EXPECT_EQ(info.path, it->second.path);
    EXPECT_EQ(info.all_paths, it->second.all_paths);
    if (!info.path.empty()) {
      EXPECT_EQ(info.unique, it->second.unique);
    }
  }
}

// text round trip exercises the printing path, not just the DOM
template <typename T, typename ToJson, typename FromJson>
T through_text(const T& value, ToJson to, FromJson from) {
  return from(json::parse(to(value).dump()));
}

TEST(GraphJson, RoundTripsGeneratedGraphsThroughText) {
  auto colored = gen_negative_evidence<double>(60, 3, 3, 2, 1, 11).test;
  auto back = through_text(colored, graph_to_json<double>, graph_from_json<double>);
  expect_same_graph(colored, back);

  auto infected = gen_infection<double>(50, 0.06, 3, 5, 1, 13).test;
  auto back2 = through_text(infected, graph_to_json<double>, graph_from_json<double>);
  expect_same_graph(infected, back2);
}

TEST(GraphJson, RejectsMissingAndRaggedFields) {
  auto g = gen_negative_evidence<double>(30, 2, 2, 1, 1, 17).test;
  auto j = graph_to_json(g);

  auto missing = j;
  missing.erase("n");
  EXPECT_THROW((void)graph_from_json<double>(missing), IoError);

  auto ragged = j;
  ragged["features"][1] = json::array({0.0});
  EXPECT_THROW((void)graph_from_json<double>(ragged), IoError);

  auto halfedge = j;
  halfedge["edges"][0] = json::array({3});
  EXPECT_THROW((void)graph_from_json<double>(halfedge), IoError);
}

TEST(SplitJson, RoundTripsTrainTestAndClassCount) {
  auto split = gen_negative_evidence<double>(40, 2, 2, 1, 3, 19);
  auto back = through_text(split, split_to_json<double>, split_from_json<double>);
  EXPECT_EQ(back.class_count, split.class_count);
  ASSERT_EQ(back.train.size(), split.train.size());
  for (std::size_t k = 0; k < split.train.size(); ++k)
    expect_same_graph(split.train[k], back.train[k]);
  expect_same_graph(split.test, back.test);
}

GnnModel<double> make_model(int input_dim, std::vector<int> hidden, int output_dim,
                            Activation act, bool root, std::uint64_t seed) {
  ArchSpec arch;
  arch.input_dim = input_dim;
  arch.hidden = std::move(hidden);
  arch.output_dim = output_dim;
  arch.hidden_activation = act;
  arch.root_weight = root;
  return init_model<double>(arch, seed);
}

TEST(ModelJson, RoundTripsWeightsBitExactly) {
  auto m = make_model(3, {5, 4}, 2, Activation::kRelu, true, 23);
  auto back = through_text(m, model_to_json<double>, model_from_json<double>);
  ASSERT_EQ(back.layers(), m.layers());
  EXPECT_EQ(back.activations, m.activations);
  EXPECT_EQ(back.has_root(), true);
  for (int l = 0; l < m.layers(); ++l) {
    expect_same_matrix(m.weights[static_cast<std::size_t>(l)],
                       back.weights[static_cast<std::size_t>(l)]);
    expect_same_matrix(m.root_weights[static_cast<std::size_t>(l)],
                       back.root_weights[static_cast<std::size_t>(l)]);
  }
}

TEST(ModelJson, OmitsRootWeightsWhenAbsent) {
  auto m = make_model(2, {3}, 1, Activation::kIdentity, false, 29);
  auto j = model_to_json(m);
  EXPECT_FALSE(j.contains("root_weights"));
  auto back = model_from_json<double>(j);
  EXPECT_FALSE(back.has_root());
}

TEST(ModelJson, RejectsBadSchemas) {
  auto j = model_to_json(make_model(2, {3}, 1, Activation::kRelu, false, 31));

  auto bad = j;
  bad["dims"] = std::vector<int>{3};
  EXPECT_THROW((void)model_from_json<double>(bad), IoError);

  bad = j;
  bad["weights"][0].erase(0);
  EXPECT_THROW((void)model_from_json<double>(bad), IoError);

  bad = j;
  bad["weights"].erase(1);
  EXPECT_THROW((void)model_from_json<double>(bad), IoError);

  bad = j;
  bad["activations"][0] = "tanh";
  EXPECT_THROW((void)model_from_json<double>(bad), IoError);

  bad = j;
  bad.erase("activations");
  EXPECT_THROW((void)model_from_json<double>(bad), IoError);
}

TEST(ExplanationJson, RoundTripsEntriesValuesAndConfig) {
  Explanation<double> ex;
  ex.method = "grad";
  ex.node = 7;
  ex.target_class = 2;
  ex.scope = Scope::kLayerwise;
  for (int k = 0; k < 3; ++k) {
    ExplanationEntry e;
    e.layer = k == 0 ? 1 : 2;
    e.src = k;
    e.dst = 7;
    ex.entries.push_back(e);
  }
  ex.values.resize(3);
  ex.values << 0.125, -3.5, 1.0 / 3.0;
  ex.config = {{"alpha", "0.1"}, {"beta", "2"}};

  auto back = through_text(ex, explanation_to_json<double>, explanation_from_json<double>);
  EXPECT_EQ(back.method, ex.method);
  EXPECT_EQ(back.node, ex.node);
  EXPECT_EQ(back.target_class, ex.target_class);
  EXPECT_EQ(back.scope, ex.scope);
  ASSERT_EQ(back.entries.size(), ex.entries.size());
  for (std::size_t k = 0; k < ex.entries.size(); ++k) {
    EXPECT_EQ(back.entries[k].layer, ex.entries[k].layer);
    EXPECT_EQ(back.entries[k].src, ex.entries[k].src);
    EXPECT_EQ(back.entries[k].dst, ex.entries[k].dst);
  }
  expect_same_matrix(ex.values, back.values);
  EXPECT_EQ(back.config, ex.config);
}

TEST(ExplanationJson, InputScopeEncodesLayerAsNull) {
  Explanation<double> ex;
  ex.method = "occ";
  ex.node = 1;
  ex.target_class = 1;
  ex.scope = Scope::kInput;
  ExplanationEntry e;
  e.layer = -1;
  e.src = 0;
  e.dst = 1;
  ex.entries.push_back(e);
  ex.values.resize(1);
  ex.values << 4.0;

  auto j = explanation_to_json(ex);
  EXPECT_TRUE(j["entries"][0][0].is_null());
  auto back = explanation_from_json<double>(j);
  EXPECT_EQ(back.entries[0].layer, -1);
}

TEST(ExplanationJson, RejectsUnknownScopeAndMissingEntries) {
  Explanation<double> ex;
  ex.method = "occ";
  ex.node = 1;
  ex.target_class = 1;
  ex.scope = Scope::kInput;
  auto j = explanation_to_json(ex);

  auto bad = j;
  bad["scope"] = "global";
  EXPECT_THROW((void)explanation_from_json<double>(bad), IoError);

  bad = j;
  bad.erase("entries");
  EXPECT_THROW((void)explanation_from_json<double>(bad), IoError);
}

TEST(WalkJson, RoundTripsAndRecordsTarget) {
  gnnattr::paths::Walk<double> w;
  w.nodes = {3, 1, 4};
  w.score = 0.1 + 0.2;  // not exactly representable, must survive printing
  auto j = walk_to_json(w);
  EXPECT_EQ(j["target"].get<int>(), 4);
  auto back = walk_from_json<double>(json::parse(j.dump()));
  EXPECT_EQ(back.nodes, w.nodes);
  EXPECT_EQ(back.score, w.score);

  gnnattr::paths::Walk<double> empty;
  EXPECT_EQ(walk_to_json(empty)["target"].get<int>(), -1);
  EXPECT_THROW((void)walk_from_json<double>(json::object()), IoError);
}

TEST(SimilarityCsv, FormatsHeaderRowsAndRoundTripValues) {
  MatrixX<double> m(2, 2);
  m << 1.0, 0.5, 0.5, 1.0;
  EXPECT_EQ(similarity_csv<double>({"grad", "occ"}, m),
            "method,grad,occ\ngrad,1,0.5\nocc,0.5,1\n");

  m(0, 1) = 1.0 / 3.0;
  auto csv = similarity_csv<double>({"grad", "occ"}, m);
  auto line = csv.substr(csv.find('\n') + 1);  // row for "grad"
  line = line.substr(0, line.find('\n'));
  auto cell = line.substr(line.rfind(',') + 1);
  EXPECT_EQ(std::stod(cell), 1.0 / 3.0);
}

TEST(SimilarityCsv, RejectsShapeMismatch) {
  MatrixX<double> m = MatrixX<double>::Identity(3, 3);
  EXPECT_THROW((void)similarity_csv<double>({"a", "b"}, m), ArgumentError);
}

TEST(JsonFiles, SaveLoadRoundTripAndErrors) {
  auto dir = std::filesystem::path(testing::TempDir()) / "gnnattr_io_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "doc.json").string();

  json j = {{"name", "run"}, {"values", {1, 2, 3}}, {"x", 0.1}};
  save_json(path, j);
  EXPECT_EQ(load_json(path), j);

  EXPECT_THROW((void)load_json((dir / "absent.json").string()), IoError);

  auto broken = (dir / "broken.json").string();
  save_text(broken, "{not json");
  EXPECT_THROW((void)load_json(broken), IoError);

  std::filesystem::remove_all(dir);
}

}  // namespace
