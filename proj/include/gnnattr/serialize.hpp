#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gnnattr/eval.hpp"
#include "gnnattr/generators.hpp"
#include "gnnattr/model.hpp"
#include "gnnattr/walks.hpp"

namespace gnnattr::io {

using json = nlohmann::ordered_json;

template <typename Scalar>
inline json graph_to_json(const core::Graph<Scalar>& g) {
  json j;
  j["n"] = g.n;
  j["directed"] = g.directed;
  json edges = json::array();
  for (const auto& [src, dst] : g.edges) edges.push_back(json::array({src, dst}));
  j["edges"] = std::move(edges);
  json features = json::array();
  for (Eigen::Index r = 0; r < g.features.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < g.features.cols(); ++c) row.push_back(g.features(r, c));
    features.push_back(std::move(row));
  }
  j["features"] = std::move(features);
  j["labels"] = g.labels;
  json gt = json::object();
  for (const auto& [node, info] : g.ground_truth) {
    json entry = json::object();
    if (!info.edges.empty()) {
      json ge = json::array();
      for (const auto& [src, dst] : info.edges) ge.push_back(json::array({src, dst}));
      entry["edges"] = std::move(ge);
    }
    if (!info.path.empty()) {
      entry["path"] = info.path;
      entry["unique"] = info.unique;
      entry["all_paths"] = info.all_paths;
    }
    gt[std::to_string(node)] = std::move(entry);
  }
  j["ground_truth"] = std::move(gt);
  return j;
}

template <typename Scalar>
inline core::Graph<Scalar> graph_from_json(const json& j) {
  try {
    core::Graph<Scalar> g;
    g.n = j.at("n").get<int>();
    g.directed = j.at("directed").get<bool>();
    for (const auto& e : j.at("edges"))
      g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    const auto& rows = j.at("features");
    int p = rows.empty() ? 0 : static_cast<int>(rows.at(0).size());
    g.features.resize(static_cast<int>(rows.size()), p);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& row = rows.at(r);
      if (static_cast<int>(row.size()) != p)
        throw IoError("graph: ragged feature rows");
      for (int c = 0; c < p; ++c)
        g.features(static_cast<int>(r), c) = row.at(static_cast<std::size_t>(c)).get<Scalar>();
    }
    if (j.contains("labels")) g.labels = j.at("labels").get<std::vector<int>>();
    if (j.contains("ground_truth")) {
      for (const auto& [key, entry] : j.at("ground_truth").items()) {
        core::NodeGroundTruth info;
        if (entry.contains("edges"))
          for (const auto& e : entry.at("edges"))
            info.edges.emplace_back(e.at(0).template get<int>(), e.at(1).template get<int>());
        if (entry.contains("path")) {
          info.path = entry.at("path").template get<std::vector<int>>();
          info.unique = entry.at("unique").template get<bool>();
          if (entry.contains("all_paths"))
            info.all_paths = entry.at("all_paths").template get<std::vector<std::vector<int>>>();
        }
        g.ground_truth[std::stoi(key)] = std::move(info);
      }
    }
    g.finalize();
    return g;
  } catch (const json::exception& e) {
    throw IoError(std::string("graph: malformed JSON: ") + e.what());
  }
}

template <typename Scalar>
inline json split_to_json(const core::DatasetSplit<Scalar>& split) {
  json j;
  j["class_count"] = split.class_count;
  json train = json::array();
  for (const auto& g : split.train) train.push_back(graph_to_json(g));
  j["train"] = std::move(train);
  j["test"] = graph_to_json(split.test);
  return j;
}

template <typename Scalar>
inline core::DatasetSplit<Scalar> split_from_json(const json& j) {
  try {
    core::DatasetSplit<Scalar> split;
    split.class_count = j.at("class_count").get<int>();
    for (const auto& g : j.at("train")) split.train.push_back(graph_from_json<Scalar>(g));
    split.test = graph_from_json<Scalar>(j.at("test"));
    return split;
  } catch (const json::exception& e) {
    throw IoError(std::string("dataset: malformed JSON: ") + e.what());
  }
}

template <typename Scalar>
inline json model_to_json(const engine::GnnModel<Scalar>& m) {
  m.validate();
  json j;
  std::vector<int> dims;
  for (int l = 0; l <= m.layers(); ++l) dims.push_back(m.dim(l));
  j["dims"] = dims;
  std::vector<std::string> acts;
  for (auto a : m.activations) acts.emplace_back(engine::activation_name(a));
  j["activations"] = acts;
  j["root_weight"] = m.has_root();
  auto dump = [](const std::vector<MatrixX<Scalar>>& mats) {
    json out = json::array();
    for (const auto& w : mats) {
      json flat = json::array();  // row-major
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
      out.push_back(std::move(flat));
    }
    return out;
  };
  j["weights"] = dump(m.weights);
  if (m.has_root()) j["root_weights"] = dump(m.root_weights);
  return j;
}

template <typename Scalar>
inline engine::GnnModel<Scalar> model_from_json(const json& j) {
  try {
    engine::GnnModel<Scalar> m;
    auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() < 2) throw IoError("model: dims chain needs input and output");
    auto parse = [&](const json& mats, std::vector<MatrixX<Scalar>>& out) {
      if (mats.size() + 1 != dims.size()) throw IoError("model: layer count mismatch");
      for (std::size_t l = 0; l < mats.size(); ++l) {
        int rows = dims[l + 1], cols = dims[l];
        const auto& flat = mats.at(l);
        if (static_cast<int>(flat.size()) != rows * cols)
          throw IoError("model: weight size mismatch");
        MatrixX<Scalar> w(rows, cols);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            w(r, c) = flat.at(static_cast<std::size_t>(r * cols + c)).get<Scalar>();
        out.push_back(std::move(w));
      }
    };
    parse(j.at("weights"), m.weights);
    if (j.at("root_weight").get<bool>()) parse(j.at("root_weights"), m.root_weights);
    for (const auto& name : j.at("activations")) {
      std::string s = name.get<std::string>();
      if (s == "identity")
        m.activations.push_back(engine::Activation::kIdentity);
      else if (s == "relu")
        m.activations.push_back(engine::Activation::kRelu);
      else
        throw IoError("model: unknown activation '" + s + "'");
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("model: malformed JSON: ") + e.what());
  }
}

template <typename Scalar>
inline json explanation_to_json(const explainers::Explanation<Scalar>& ex) {
  json j;
  j["method"] = ex.method;
  j["node"] = ex.node;
  j["class"] = ex.target_class;
  j["scope"] = explainers::scope_name(ex.scope);
  json entries = json::array();
  for (std::size_t k = 0; k < ex.entries.size(); ++k) {
    const auto& e = ex.entries[k];
    json row = json::array();
    if (e.layer < 0)
      row.push_back(nullptr);
    else
      row.push_back(e.layer);
    row.push_back(e.src);
    row.push_back(e.dst);
    row.push_back(ex.values[static_cast<int>(k)]);
    entries.push_back(std::move(row));
  }
  j["entries"] = std::move(entries);
  json cfg = json::object();
  for (const auto& [key, value] : ex.config) cfg[key] = value;
  j["config"] = std::move(cfg);
  return j;
}

template <typename Scalar>
inline explainers::Explanation<Scalar> explanation_from_json(const json& j) {
  try {
    explainers::Explanation<Scalar> ex;
    ex.method = j.at("method").get<std::string>();
    ex.node = j.at("node").get<int>();
    ex.target_class = j.at("class").get<int>();
    std::string scope = j.at("scope").get<std::string>();
    if (scope == "input")
      ex.scope = explainers::Scope::kInput;
    else if (scope == "layerwise")
      ex.scope = explainers::Scope::kLayerwise;
    else
      throw IoError("explanation: unknown scope '" + scope + "'");
    const auto& entries = j.at("entries");
    ex.values.resize(static_cast<int>(entries.size()));
    int k = 0;
    for (const auto& row : entries) {
      explainers::ExplanationEntry e;
      e.layer = row.at(0).is_null() ? -1 : row.at(0).get<int>();
      e.src = row.at(1).get<int>();
      e.dst = row.at(2).get<int>();
      ex.entries.push_back(e);
      ex.values[k++] = row.at(3).get<Scalar>();
    }
    if (j.contains("config"))
      for (const auto& [key, value] : j.at("config").items())
        ex.config.emplace_back(key, value.template get<std::string>());
    return ex;
  } catch (const json::exception& e) {
    throw IoError(std::string("explanation: malformed JSON: ") + e.what());
  }
}

template <typename Scalar>
inline json walk_to_json(const paths::Walk<Scalar>& walk) {
  json j;
  j["target"] = walk.nodes.empty() ? -1 : walk.nodes.back();
  j["nodes"] = walk.nodes;
  j["score"] = walk.score;
  return j;
}

template <typename Scalar>
inline paths::Walk<Scalar> walk_from_json(const json& j) {
  try {
    paths::Walk<Scalar> walk;
    walk.nodes = j.at("nodes").get<std::vector<int>>();
    walk.score = j.at("score").get<Scalar>();
    return walk;
  } catch (const json::exception& e) {
    throw IoError(std::string("walk: malformed JSON: ") + e.what());
  }
}

/// method-by-method matrix as CSV: header "method,<m1>,...", one row per
/// method, values printed with round-trip precision.
template <typename Scalar>
inline std::string similarity_csv(const std::vector<std::string>& methods,
                                  const MatrixX<Scalar>& matrix) {
  if (matrix.rows() != static_cast<Eigen::Index>(methods.size()) ||
      matrix.cols() != static_cast<Eigen::Index>(methods.size()))
    throw ArgumentError("similarity csv: matrix does not match method list");
  std::ostringstream os;
  os.precision(17);
  os << "method";
  for (const auto& m : methods) os << "," << m;
  os << "\n";
  for (std::size_t r = 0; r < methods.size(); ++r) {
    os << methods[r];
    for (std::size_t c = 0; c < methods.size(); ++c)
      os << "," << matrix(static_cast<int>(r), static_cast<int>(c));
    os << "\n";
  }
  return os.str();
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("cannot parse '" + path + "': " + e.what());
  }
}

inline void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out.good()) throw IoError("write to '" + path + "' failed");
}

inline void save_json(const std::string& path, const json& j, int indent = 2) {
  save_text(path, j.dump(indent) + "\n");
}

}  // namespace gnnattr::io
