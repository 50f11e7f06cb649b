#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gnnattr/forward.hpp"
#include "gnnattr/generators.hpp"
#include "gnnattr/gradients.hpp"
#include "gnnattr/rng.hpp"

namespace gnnattr::engine {

template <typename Scalar>
struct TrainReport {
  std::vector<Scalar> losses;  // per epoch: data loss + penalty terms
  Scalar train_accuracy = Scalar(0);
  Scalar test_accuracy = Scalar(0);
};

template <typename Scalar>
struct TrainResult {
  GnnModel<Scalar> model;
  TrainReport<Scalar> report;
};

/// Seeded uniform init with fan-in scaling: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar>
inline GnnModel<Scalar> init_model(const ArchSpec& arch, std::uint64_t seed) {
  if (arch.input_dim < 1 || arch.output_dim < 1)
    throw ArgumentError("init_model: dimensions must be positive");
  for (int h : arch.hidden)
    if (h < 1) throw ArgumentError("init_model: hidden widths must be positive");
  auto dims = arch.dims();
  GnnModel<Scalar> m;
  Rng rng(seed);
  auto fill = [&](MatrixX<Scalar>& w) {
    Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
  };
  for (std::size_t l = 1; l < dims.size(); ++l) {
    MatrixX<Scalar> w(dims[l], dims[l - 1]);
    fill(w);
    m.weights.push_back(std::move(w));
    if (arch.root_weight) {
      MatrixX<Scalar> r(dims[l], dims[l - 1]);
      fill(r);
      m.root_weights.push_back(std::move(r));
    }
    m.activations.push_back(l + 1 < dims.size() ? arch.hidden_activation
                                                : Activation::kIdentity);
  }
  m.validate();
  return m;
}

/// Fraction of labeled nodes predicted correctly. Binary scalar logits
/// predict 1 when positive; multiclass takes the argmax (smallest index on
/// ties).
template <typename Scalar>
inline Scalar accuracy(const GnnModel<Scalar>& m, const core::Graph<Scalar>& g) {
  FullForward<Scalar> f = forward_all(m, g);
  const auto& out = f.x.back();
  long correct = 0, total = 0;
  for (int v = 0; v < g.n; ++v) {
    int y = g.labels.empty() ? -1 : g.labels[static_cast<std::size_t>(v)];
    if (y < 0) continue;
    int pred;
    if (m.output_dim() == 1) {
      pred = out(v, 0) > Scalar(0) ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      out.row(v).maxCoeff(&best);
      pred = static_cast<int>(best);
    }
    ++total;
    correct += pred == y;
  }
  return total == 0 ? Scalar(0) : static_cast<Scalar>(correct) / static_cast<Scalar>(total);
}

/// Mean cross-entropy over all labeled nodes of the given graphs plus L2 and
/// L1 penalty terms; accumulates parameter gradients into wg / rg (which must
/// be zero-initialized to the parameter shapes). Returns the loss.
template <typename Scalar>
inline Scalar training_loss_and_gradients(const GnnModel<Scalar>& m,
                                          const std::vector<const core::Graph<Scalar>*>& graphs,
                                          Scalar weight_decay, Scalar l1_weight,
                                          std::vector<MatrixX<Scalar>>& wg,
                                          std::vector<MatrixX<Scalar>>& rg,
                                          const std::vector<const SparseMatrixX<Scalar>*>* adj =
                                              nullptr) {
  const int depth = m.layers();
  const int classes = m.output_dim();
  long labeled_total = 0;
  for (const auto* g : graphs)
    for (int y : g->labels) labeled_total += y >= 0;
  if (labeled_total == 0) throw ArgumentError("train: no labeled nodes");

  Scalar loss = Scalar(0);
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const auto& g = *graphs[k];
    SparseMatrixX<Scalar> local;
    const SparseMatrixX<Scalar>* a;
    if (adj) {
      a = (*adj)[k];
    } else {
      local = build_in_adjacency(g);
      a = &local;
    }
    FullForward<Scalar> f = forward_all<Scalar>(m, g, nullptr, a);
    const auto& out = f.x.back();

    MatrixX<Scalar> mu = MatrixX<Scalar>::Zero(g.n, classes);
    for (int v = 0; v < g.n; ++v) {
      int y = g.labels[static_cast<std::size_t>(v)];
      if (y < 0) continue;
      if (classes == 1) {
        if (y != 0 && y != 1) throw ArgumentError("train: binary labels must be 0/1");
        Scalar z = out(v, 0);
        // stable logistic loss: max(z,0) - z*y + log(1+exp(-|z|))
        loss += std::max(z, Scalar(0)) - z * static_cast<Scalar>(y) +
                std::log1p(std::exp(-std::abs(z)));
        Scalar p = Scalar(1) / (Scalar(1) + std::exp(-z));
        mu(v, 0) = (p - static_cast<Scalar>(y)) / static_cast<Scalar>(labeled_total);
      } else {
        if (y >= classes) throw ArgumentError("train: label exceeds class count");
        RowVectorX<Scalar> z = out.row(v);
        Scalar zmax = z.maxCoeff();
        Scalar lse = zmax + std::log((z.array() - zmax).exp().sum());
        loss += lse - z[y];
        RowVectorX<Scalar> soft = (z.array() - lse).exp();
        soft[y] -= Scalar(1);
        mu.row(v) = soft / static_cast<Scalar>(labeled_total);
      }
    }

    SparseMatrixX<Scalar> at = a->transpose();
    MatrixX<Scalar> grad_x = std::move(mu);  // dLoss/dz at layer `depth`
    for (int l = depth; l >= 1; --l) {
      const auto& xprev = f.x[static_cast<std::size_t>(l - 1)];
      MatrixX<Scalar> agg = (*a) * xprev;
      wg[static_cast<std::size_t>(l - 1)] += grad_x.transpose() * agg;
      if (m.has_root()) rg[static_cast<std::size_t>(l - 1)] += grad_x.transpose() * xprev;
      if (l > 1) {
        MatrixX<Scalar> lam = at * (grad_x * m.weights[static_cast<std::size_t>(l - 1)]);
        if (m.has_root())
          lam += grad_x * m.root_weights[static_cast<std::size_t>(l - 1)];
        grad_x = lam.cwiseProduct(
            activation_gate(m.activations[static_cast<std::size_t>(l - 2)],
                            f.z[static_cast<std::size_t>(l - 1)]));
      }
    }
  }
  loss /= static_cast<Scalar>(labeled_total);

  auto penalize = [&](const MatrixX<Scalar>& p, MatrixX<Scalar>& grad) {
    if (weight_decay != Scalar(0)) {
      grad += weight_decay * p;
      loss += weight_decay / Scalar(2) * p.squaredNorm();
    }
    if (l1_weight != Scalar(0)) {
      grad += l1_weight * p.unaryExpr([](Scalar x) {
        return x > Scalar(0) ? Scalar(1) : (x < Scalar(0) ? Scalar(-1) : Scalar(0));
      });
      loss += l1_weight * p.template lpNorm<1>();
    }
  };
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    penalize(m.weights[l], wg[l]);
    if (m.has_root()) penalize(m.root_weights[l], rg[l]);
  }
  return loss;
}

/// Full-batch training on the split's train graphs, deterministic under
/// config.seed. Throws TrainingError with the epoch index when the loss
/// becomes non-finite. epochs = 0 returns the initialized model unchanged.
template <typename Scalar>
inline TrainResult<Scalar> train(const ArchSpec& arch, const core::DatasetSplit<Scalar>& data,
                                 const TrainConfig& config) {
  if (config.learning_rate <= 0) throw ArgumentError("train: learning rate must be positive");
  if (config.epochs < 0) throw ArgumentError("train: epochs must be >= 0");
  if (data.train.empty()) throw ArgumentError("train: no training graphs");
  for (const auto& g : data.train) {
    if (g.feature_dim() != arch.input_dim)
      throw ArgumentError("train: feature dimension != arch input dimension");
    if (g.labels.empty()) throw ArgumentError("train: training graphs need labels");
  }

  TrainResult<Scalar> res;
  res.model = init_model<Scalar>(arch, config.seed);
  auto& m = res.model;

  std::vector<const core::Graph<Scalar>*> graphs;
  std::vector<SparseMatrixX<Scalar>> adjacency;
  adjacency.reserve(data.train.size());
  for (const auto& g : data.train) {
    graphs.push_back(&g);
    adjacency.push_back(build_in_adjacency(g));
  }
  std::vector<const SparseMatrixX<Scalar>*> adj_ptrs;
  for (const auto& a : adjacency) adj_ptrs.push_back(&a);

  // parameter list: weights then root weight per layer, in layer order
  std::vector<MatrixX<Scalar>*> params;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    params.push_back(&m.weights[l]);
    if (m.has_root()) params.push_back(&m.root_weights[l]);
  }
  std::vector<MatrixX<Scalar>> adam_m, adam_v;
  if (config.optimizer == TrainConfig::Optimizer::kAdam)
    for (auto* p : params) {
      adam_m.push_back(MatrixX<Scalar>::Zero(p->rows(), p->cols()));
      adam_v.push_back(MatrixX<Scalar>::Zero(p->rows(), p->cols()));
    }

  const Scalar lr = static_cast<Scalar>(config.learning_rate);
  const Scalar beta1 = Scalar(0.9), beta2 = Scalar(0.999), adam_eps = Scalar(1e-8);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<MatrixX<Scalar>> wg, rg;
    for (const auto& w : m.weights) wg.push_back(MatrixX<Scalar>::Zero(w.rows(), w.cols()));
    if (m.has_root())
      for (const auto& r : m.root_weights) rg.push_back(MatrixX<Scalar>::Zero(r.rows(), r.cols()));
    Scalar loss = training_loss_and_gradients(m, graphs, static_cast<Scalar>(config.weight_decay),
                                              static_cast<Scalar>(config.l1_weight), wg, rg,
                                              &adj_ptrs);
    if (!std::isfinite(static_cast<double>(loss)))
      throw TrainingError("training loss is not finite", epoch);
    res.report.losses.push_back(loss);

    std::vector<MatrixX<Scalar>*> grads;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      grads.push_back(&wg[l]);
      if (m.has_root()) grads.push_back(&rg[l]);
    }
    if (config.optimizer == TrainConfig::Optimizer::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) *params[i] -= lr * (*grads[i]);
    } else {
      Scalar t = static_cast<Scalar>(epoch + 1);
      Scalar c1 = Scalar(1) - std::pow(beta1, t);
      Scalar c2 = Scalar(1) - std::pow(beta2, t);
      for (std::size_t i = 0; i < params.size(); ++i) {
        adam_m[i] = beta1 * adam_m[i] + (Scalar(1) - beta1) * (*grads[i]);
        adam_v[i] = beta2 * adam_v[i] + (Scalar(1) - beta2) * grads[i]->cwiseProduct(*grads[i]);
        MatrixX<Scalar> mhat = adam_m[i] / c1;
        MatrixX<Scalar> vhat = adam_v[i] / c2;
        *params[i] -=
            lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + MatrixX<Scalar>::Constant(
                                                           vhat.rows(), vhat.cols(), adam_eps));
      }
    }
  }

  long correct = 0, total = 0;
  for (const auto& g : data.train) {
    Scalar acc = accuracy(m, g);
    long labeled = 0;
    for (int y : g.labels) labeled += y >= 0;
    correct += static_cast<long>(std::lround(static_cast<double>(acc * labeled)));
    total += labeled;
  }
  res.report.train_accuracy = total ? static_cast<Scalar>(correct) / static_cast<Scalar>(total)
                                    : Scalar(0);
  res.report.test_accuracy = accuracy(m, data.test);
  return res;
}

}  // namespace gnnattr::engine
