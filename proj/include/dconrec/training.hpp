#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dconrec/errors.hpp"
#include "dconrec/eval.hpp"
#include "dconrec/interactions.hpp"
#include "dconrec/model.hpp"
#include "dconrec/random.hpp"

namespace dconrec {

struct Triple {
  int user;
  int pos;
  int neg;
};

struct FactorGradient {
  Matrix user;
  Matrix item;
};

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -ln sigmoid(x) = softplus(-x), computed without overflow.
inline double neg_log_sigmoid(double x) {
  if (x > 0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

namespace detail {

struct ScoringView {
  const Matrix* user;
  const Matrix* item;
  Propagated storage;  // holds propagated embeddings when needed
};

inline ScoringView scoring_view(const EmbeddingModel& m) {
  ScoringView v;
  if (m.arch == Arch::mf || m.n_layers == 0) {
    v.user = &m.user_factors;
    v.item = &m.item_factors;
  } else {
    v.storage = effective_embeddings(m);
    v.user = &v.storage.user;
    v.item = &v.storage.item;
  }
  return v;
}

// Accumulates scale * sum of per-triple BPR gradients into g (in the
// embedding space actually used for scoring). Returns the summed raw loss.
inline double accumulate_bpr(const ScoringView& v, std::span<const Triple> triples,
                             double scale, FactorGradient* g) {
  const int d = v.user->cols();
  double loss_sum = 0.0;
  for (const auto& t : triples) {
    const double* pu = v.user->row(t.user);
    const double* qi = v.item->row(t.pos);
    const double* qj = v.item->row(t.neg);
    const double gap = dot(pu, qi, d) - dot(pu, qj, d);
    loss_sum += neg_log_sigmoid(gap);
    if (g != nullptr) {
      const double c = -stable_sigmoid(-gap) * scale;  // d/dgap of -ln sigma
      double* gu = g->user.row(t.user);
      double* gi = g->item.row(t.pos);
      double* gj = g->item.row(t.neg);
      for (int k = 0; k < d; ++k) {
        gu[k] += c * (qi[k] - qj[k]);
        gi[k] += c * pu[k];
        gj[k] -= c * pu[k];
      }
    }
  }
  return loss_sum;
}

// L2 penalty over the factor rows each triple touches, averaged over
// triples; the penalty (and its gradient) acts on the base factors even for
// lightgcn.
inline double add_l2_terms(const EmbeddingModel& m, std::span<const Triple> triples,
                           double l2_reg, FactorGradient* g) {
  if (l2_reg == 0.0) return 0.0;
  const int d = m.dim();
  const double inv_n = 1.0 / static_cast<double>(triples.size());
  double reg = 0.0;
  for (const auto& t : triples) {
    reg += squared_norm(m.user_factors.row(t.user), d) +
           squared_norm(m.item_factors.row(t.pos), d) +
           squared_norm(m.item_factors.row(t.neg), d);
    if (g != nullptr) {
      const double c = 2.0 * l2_reg * inv_n;
      axpy(c, m.user_factors.row(t.user), g->user.row(t.user), d);
      axpy(c, m.item_factors.row(t.pos), g->item.row(t.pos), d);
      axpy(c, m.item_factors.row(t.neg), g->item.row(t.neg), d);
    }
  }
  return l2_reg * reg * inv_n;
}

inline bool all_finite(const Matrix& m) {
  for (double v : m.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace detail

/// Mean BPR loss over the triples plus l2_reg times the mean squared norm of
/// the involved factor rows.
inline double bpr_loss(const EmbeddingModel& m, std::span<const Triple> triples,
                       double l2_reg) {
  if (triples.empty()) throw ConfigError("bpr_loss: empty triple list");
  const auto v = detail::scoring_view(m);
  const double base =
      detail::accumulate_bpr(v, triples, 0.0, nullptr) / triples.size();
  return base + detail::add_l2_terms(m, triples, l2_reg, nullptr);
}

/// Exact gradient of bpr_loss with respect to the base factor matrices. For
/// lightgcn the ranking term is backpropagated through the (linear,
/// symmetric) layer-mean propagation.
inline FactorGradient bpr_gradient(const EmbeddingModel& m,
                                   std::span<const Triple> triples, double l2_reg) {
  if (triples.empty()) throw ConfigError("bpr_gradient: empty triple list");
  const auto v = detail::scoring_view(m);
  FactorGradient g{Matrix(m.n_users(), m.dim()), Matrix(m.n_items(), m.dim())};
  detail::accumulate_bpr(v, triples, 1.0 / triples.size(), &g);
  if (m.arch == Arch::lightgcn && m.n_layers > 0) {
    auto back = detail::layer_mean_propagate(m.adjacency, m.n_layers, g.user, g.item);
    g.user = std::move(back.user);
    g.item = std::move(back.item);
  }
  detail::add_l2_terms(m, triples, l2_reg, &g);
  return g;
}

/// One plain gradient-descent step of bpr_loss over the batch. Rows not
/// touched by the batch (directly or through propagation) are unchanged.
inline EmbeddingModel gradient_step(const EmbeddingModel& model,
                                    std::span<const Triple> triples, double lr,
                                    double l2_reg) {
  if (triples.empty()) throw ConfigError("gradient_step: empty batch");
  const auto g = bpr_gradient(model, triples, l2_reg);
  if (!detail::all_finite(g.user) || !detail::all_finite(g.item))
    throw DivergenceError("gradient_step: nonfinite gradient");
  EmbeddingModel out = model;
  for (std::size_t k = 0; k < out.user_factors.data().size(); ++k)
    out.user_factors.data()[k] -= lr * g.user.data()[k];
  for (std::size_t k = 0; k < out.item_factors.data().size(); ++k)
    out.item_factors.data()[k] -= lr * g.item.data()[k];
  return out;
}

/// k items the user has no interaction with in `exclusion`, drawn uniformly
/// (with replacement) by rejection.
inline std::vector<int> sample_negatives(const InteractionSet& exclusion, int u,
                                         int k, Rng& rng) {
  const int candidates = exclusion.n_items() - exclusion.degree(u);
  if (candidates <= 0)
    throw DataError("sample_negatives: user " + std::to_string(u) +
                    " has interacted with every item");
  std::vector<int> out;
  out.reserve(k);
  while (static_cast<int>(out.size()) < k) {
    const int j = rng.uniform_int(exclusion.n_items());
    if (!exclusion.contains(u, j)) out.push_back(j);
  }
  return out;
}

namespace detail {

struct AdamState {
  Matrix m_user, v_user, m_item, v_item;
  long long t = 0;
};

inline void adam_update(Matrix& theta, Matrix& m, Matrix& v, const Matrix& g,
                        double lr, double b1, double b2, long long t) {
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  auto& th = theta.data();
  auto& md = m.data();
  auto& vd = v.data();
  const auto& gd = g.data();
  for (std::size_t k = 0; k < th.size(); ++k) {
    md[k] = b1 * md[k] + (1.0 - b1) * gd[k];
    vd[k] = b2 * vd[k] + (1.0 - b2) * gd[k] * gd[k];
    th[k] -= lr * (md[k] / c1) / (std::sqrt(vd[k] / c2) + 1e-8);
  }
}

}  // namespace detail

/// Mini-batch BPR training with uniform negative sampling. When a validation
/// set is given, tracks Recall@10 per epoch and returns the best-epoch
/// parameters (early stopping after `early_stop_patience` stale epochs).
inline EmbeddingModel train(EmbeddingModel model, const InteractionSet& train_set,
                            const InteractionSet& val, const TrainConfig& config) {
  if (train_set.empty()) throw DataError("train: empty training set");
  Rng rng(derive_seed(config.seed, 13));

  detail::AdamState adam;
  if (config.optimizer == Optimizer::adam) {
    adam.m_user = Matrix(model.n_users(), model.dim());
    adam.v_user = Matrix(model.n_users(), model.dim());
    adam.m_item = Matrix(model.n_items(), model.dim());
    adam.v_item = Matrix(model.n_items(), model.dim());
  }

  const bool track_best = !val.empty() && config.early_stop_patience > 0;
  EmbeddingModel best = model;
  double best_r10 = -1.0;
  int stale = 0;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<Triple> batch;
      batch.reserve((end - start) * config.negatives_per_positive);
      for (std::size_t k = start; k < end; ++k) {
        const auto& [u, i] = train_set.pairs()[order[k]];
        for (int n = 0; n < config.negatives_per_positive; ++n)
          batch.push_back({u, i, sample_negatives(train_set, u, 1, rng)[0]});
      }

      const auto view = detail::scoring_view(model);
      FactorGradient g{Matrix(model.n_users(), model.dim()),
                       Matrix(model.n_items(), model.dim())};
      double loss =
          detail::accumulate_bpr(view, batch, 1.0 / batch.size(), &g) / batch.size();
      if (model.arch == Arch::lightgcn && model.n_layers > 0) {
        auto back = detail::layer_mean_propagate(model.adjacency, model.n_layers,
                                                 g.user, g.item);
        g.user = std::move(back.user);
        g.item = std::move(back.item);
      }
      loss += detail::add_l2_terms(model, batch, config.l2_reg, &g);
      if (!std::isfinite(loss))
        throw DivergenceError("train: nonfinite loss at epoch " + std::to_string(epoch));

      if (config.optimizer == Optimizer::sgd) {
        for (std::size_t k = 0; k < model.user_factors.data().size(); ++k)
          model.user_factors.data()[k] -= config.learning_rate * g.user.data()[k];
        for (std::size_t k = 0; k < model.item_factors.data().size(); ++k)
          model.item_factors.data()[k] -= config.learning_rate * g.item.data()[k];
      } else {
        adam.t++;
        detail::adam_update(model.user_factors, adam.m_user, adam.v_user, g.user,
                            config.learning_rate, config.adam_beta1,
                            config.adam_beta2, adam.t);
        detail::adam_update(model.item_factors, adam.m_item, adam.v_item, g.item,
                            config.learning_rate, config.adam_beta1,
                            config.adam_beta2, adam.t);
      }
    }

    if (track_best) {
      const double r10 = recall_at_k(model, train_set, val, 10);
      if (r10 > best_r10 + 1e-12) {
        best_r10 = r10;
        best = model;
        stale = 0;
      } else if (++stale >= config.early_stop_patience) {
        return best;
      }
    }
  }
  return track_best && best_r10 >= 0 ? best : model;
}

}  // namespace dconrec
