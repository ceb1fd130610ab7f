#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dconrec/augment.hpp"
#include "dconrec/errors.hpp"
#include "dconrec/interactions.hpp"
#include "dconrec/model.hpp"
#include "dconrec/projection.hpp"
#include "dconrec/random.hpp"
#include "dconrec/training.hpp"

namespace dconrec {

/// Selection probabilities over the data-pool support. `support` keeps the
/// pool's (user, item) ordering; pairs outside the support implicitly carry
/// probability zero. `budget` is the (real-valued) expected-size cap
/// ratio * |original train|.
struct ProbabilityMask {
  int n_users = 0;
  int n_items = 0;
  std::vector<Pair> support;
  std::vector<double> probs;
  double budget = 0.0;

  double sum() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }
};

/// One Bernoulli draw per support entry, same ordering as the generating
/// ProbabilityMask. Carries the budget along for the loss normalization.
struct SampledMask {
  std::vector<std::uint8_t> bits;
  double budget = 0.0;

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
};

enum class InitScheme { uniform_budget, origin_weighted };

struct CondenseConfig {
  double ratio_r = 0.25;
  int outer_epochs = 400;
  double outer_lr = 0.01;
  double lr_decay_factor = 10.0;
  int lr_decay_every = 100;
  double lr_floor = 1e-4;
  double inner_lr = 0.1;
  int val_batch_size = 4096;
  double prob_clamp = 1e-4;  // epsilon used inside log_prob_grad only
  InitScheme init_scheme = InitScheme::uniform_budget;
  bool baseline_subtraction = false;
  int mask_samples = 1;  // gradient estimates averaged per outer step
  bool warm_start = false;
  std::uint64_t seed = 0;
};

struct MonitorRecord {
  double outer_loss = 0.0;
  double grad_mapping_sq = 0.0;  // ||(S_t - S_{t+1}) / eta_t||^2
  double sum_s = 0.0;
  double eta = 0.0;
};

/// Per-iteration diagnostics plus wall-clock accounting that splits the
/// inner model work from the data-update work.
struct ConvergenceMonitor {
  std::vector<MonitorRecord> records;
  double seconds_inner = 0.0;
  double seconds_data_update = 0.0;
};

inline void save_monitor(const ConvergenceMonitor& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "iter,outer_loss,grad_mapping_sq,sum_s,eta\n";
  out << std::setprecision(17);
  for (std::size_t t = 0; t < m.records.size(); ++t) {
    const auto& r = m.records[t];
    out << t << ',' << r.outer_loss << ',' << r.grad_mapping_sq << ',' << r.sum_s
        << ',' << r.eta << '\n';
  }
}

inline void save_mask(const ProbabilityMask& mask, const std::string& path,
                      const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < mask.support.size(); ++k)
    out << mask.support[k].first << '\t' << mask.support[k].second << '\t'
        << mask.probs[k] << '\n';
}

inline bool is_feasible(const ProbabilityMask& mask, double tol = 1e-9) {
  for (double s : mask.probs)
    if (s < 0.0 || s > 1.0) return false;
  return mask.sum() <= mask.budget + tol;
}

/// Initial probabilities over the pool. uniform_budget gives every entry
/// budget/|pool| (expected sample size equals the budget); origin_weighted
/// starts original pairs at twice the pseudo pairs' value, rescaled to the
/// budget. Values are clamped into [eps, 1-eps] and rescaled if the clamp
/// pushed the sum above the budget.
inline ProbabilityMask init_probabilities(const DataPool& pool,
                                          const CondenseConfig& config) {
  const std::size_t n = pool.pool.size();
  if (n == 0) throw DataError("init_probabilities: empty pool");
  const double budget = config.ratio_r * static_cast<double>(pool.n_original());
  if (budget > static_cast<double>(n))
    throw ConfigError("budget " + std::to_string(budget) +
                      " exceeds pool size " + std::to_string(n));
  if (budget <= 0) throw ConfigError("budget must be positive");

  ProbabilityMask mask;
  mask.n_users = pool.pool.n_users();
  mask.n_items = pool.pool.n_items();
  mask.support = pool.pool.pairs();
  mask.probs.resize(n);
  mask.budget = budget;

  if (config.init_scheme == InitScheme::uniform_budget) {
    std::fill(mask.probs.begin(), mask.probs.end(), budget / static_cast<double>(n));
  } else {
    const double n_orig = static_cast<double>(pool.n_original());
    const double n_ps = static_cast<double>(n) - n_orig;
    const double x = budget / (2.0 * n_orig + n_ps);  // pseudo value
    for (std::size_t k = 0; k < n; ++k)
      mask.probs[k] = pool.is_pseudo[k] ? x : 2.0 * x;
  }

  const double eps = config.prob_clamp;
  for (double& s : mask.probs) s = std::clamp(s, eps, 1.0 - eps);
  const double total = mask.sum();
  if (total > budget) {
    const double scale = budget / total;
    for (double& s : mask.probs) s *= scale;
  }
  return mask;
}

inline SampledMask sample_mask(const ProbabilityMask& mask, Rng& rng) {
  SampledMask m;
  m.budget = mask.budget;
  m.bits.resize(mask.probs.size());
  for (std::size_t k = 0; k < mask.probs.size(); ++k)
    m.bits[k] = rng.bernoulli(mask.probs[k]) ? 1 : 0;
  return m;
}

/// BPR triples for the selected pool pairs, one negative each, negatives
/// drawn outside the pool so pseudo positives never double as negatives.
inline std::vector<Triple> selected_triples(const SampledMask& sample,
                                            const DataPool& pool, Rng& rng) {
  std::vector<Triple> triples;
  for (std::size_t k = 0; k < sample.bits.size(); ++k) {
    if (!sample.bits[k]) continue;
    const auto& [u, i] = pool.pool.pairs()[k];
    triples.push_back({u, i, sample_negatives(pool.pool, u, 1, rng)[0]});
  }
  return triples;
}

/// Sum of per-pair BPR losses over the selected pairs divided by the budget
/// r|D| (not by the realized selection size).
inline double masked_inner_loss(const EmbeddingModel& model,
                                const SampledMask& sample, const DataPool& pool,
                                Rng& rng) {
  const auto triples = selected_triples(sample, pool, rng);
  if (triples.empty()) throw DataError("masked_inner_loss: empty selection");
  const auto view = detail::scoring_view(model);
  return detail::accumulate_bpr(view, triples, 0.0, nullptr) / sample.budget;
}

/// theta_1 = theta_0 - inner_lr * grad of the budget-normalized selected
/// loss. theta_0 is left untouched.
inline EmbeddingModel inner_one_step(const EmbeddingModel& model0,
                                     const SampledMask& sample,
                                     const DataPool& pool, double inner_lr,
                                     Rng& rng) {
  const auto triples = selected_triples(sample, pool, rng);
  if (triples.empty()) throw DataError("inner_one_step: empty selection");
  const auto view = detail::scoring_view(model0);
  FactorGradient g{Matrix(model0.n_users(), model0.dim()),
                   Matrix(model0.n_items(), model0.dim())};
  detail::accumulate_bpr(view, triples, 1.0 / sample.budget, &g);
  if (model0.arch == Arch::lightgcn && model0.n_layers > 0) {
    auto back =
        detail::layer_mean_propagate(model0.adjacency, model0.n_layers, g.user, g.item);
    g.user = std::move(back.user);
    g.item = std::move(back.item);
  }
  if (!detail::all_finite(g.user) || !detail::all_finite(g.item))
    throw DivergenceError("inner_one_step: nonfinite gradient");
  EmbeddingModel out = model0;
  for (std::size_t k = 0; k < out.user_factors.data().size(); ++k)
    out.user_factors.data()[k] -= inner_lr * g.user.data()[k];
  for (std::size_t k = 0; k < out.item_factors.data().size(); ++k)
    out.item_factors.data()[k] -= inner_lr * g.item.data()[k];
  return out;
}

/// Mean BPR loss of the updated model on a validation batch drawn uniformly
/// from the original training interactions (the whole set once
/// val_batch_size >= |D|). Negatives are drawn outside `neg_exclusion` when
/// given (the optimization passes the data pool there, so candidate
/// positives never double as negatives on small catalogs), otherwise
/// outside the training set.
inline double outer_loss(const EmbeddingModel& model1, const InteractionSet& train_set,
                         int val_batch_size, Rng& rng,
                         const InteractionSet* neg_exclusion = nullptr) {
  if (train_set.empty()) throw DataError("outer_loss: empty training set");
  const InteractionSet& excl = neg_exclusion ? *neg_exclusion : train_set;
  std::vector<Triple> batch;
  if (static_cast<std::size_t>(val_batch_size) >= train_set.size()) {
    batch.reserve(train_set.size());
    for (const auto& [u, i] : train_set.pairs())
      batch.push_back({u, i, sample_negatives(excl, u, 1, rng)[0]});
  } else {
    batch.reserve(val_batch_size);
    for (int k = 0; k < val_batch_size; ++k) {
      const auto& [u, i] =
          train_set.pairs()[rng.uniform_int(static_cast<int>(train_set.size()))];
      batch.push_back({u, i, sample_negatives(excl, u, 1, rng)[0]});
    }
  }
  const auto view = detail::scoring_view(model1);
  return detail::accumulate_bpr(view, batch, 0.0, nullptr) / batch.size();
}

/// Entry-wise gradient of ln p(M|S): m/s - (1-m)/(1-s), with s clamped into
/// [eps, 1-eps] before the division so entries at the box bounds stay finite.
inline std::vector<double> log_prob_grad(const ProbabilityMask& mask,
                                         const SampledMask& sample,
                                         double eps = 1e-4) {
  std::vector<double> g(mask.probs.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double s = std::clamp(mask.probs[k], eps, 1.0 - eps);
    g[k] = sample.bits[k] ? 1.0 / s : -1.0 / (1.0 - s);
  }
  return g;
}

/// Loss of one sampled mask; the standard pipeline binds this to the
/// one-step inner update followed by the outer validation loss. The Rng
/// carries the negative-sampling stream; sibling samples of one iteration
/// receive identically seeded streams (common random numbers), so their
/// loss differences reflect the masks, not the negatives.
using MaskLossFn = std::function<double(const SampledMask&, Rng&)>;

/// One projected policy-gradient step driven by an arbitrary mask-loss
/// evaluator: sample masks, form coeff * grad ln p, average over
/// config.mask_samples, descend, project, record diagnostics. With baseline
/// subtraction on, a single sample is centered by the running mean of past
/// losses; two or more samples use the leave-one-out mean of their siblings
/// (still unbiased, and the shared negative streams cancel there).
inline ProbabilityMask lpge_step_with_loss(const ProbabilityMask& mask,
                                           const MaskLossFn& loss_of, double eta,
                                           const CondenseConfig& config, Rng& rng,
                                           ConvergenceMonitor& monitor) {
  const std::size_t n = mask.probs.size();
  const int n_samples = std::max(1, config.mask_samples);
  const std::uint64_t iter_seed = rng.next();

  std::vector<SampledMask> samples;
  std::vector<double> losses;
  samples.reserve(n_samples);
  losses.reserve(n_samples);
  double loss_mean = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    samples.push_back(sample_mask(mask, rng));
    Rng loss_rng(derive_seed(iter_seed, 40000));
    const double loss = loss_of(samples.back(), loss_rng);
    if (!std::isfinite(loss))
      throw DivergenceError("lpge_step: nonfinite outer loss at iteration " +
                            std::to_string(monitor.records.size()));
    losses.push_back(loss);
    loss_mean += loss / n_samples;
  }

  double running_mean = 0.0;
  if (config.baseline_subtraction && !monitor.records.empty()) {
    for (const auto& r : monitor.records) running_mean += r.outer_loss;
    running_mean /= static_cast<double>(monitor.records.size());
  }

  std::vector<double> grad(n, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    double baseline = 0.0;
    if (config.baseline_subtraction) {
      if (n_samples >= 2) {
        for (int k = 0; k < n_samples; ++k)
          if (k != s) baseline += losses[k];
        baseline /= n_samples - 1;
      } else {
        baseline = running_mean;
      }
    }
    const double coeff = (losses[s] - baseline) / n_samples;
    const auto lp = log_prob_grad(mask, samples[s], config.prob_clamp);
    for (std::size_t k = 0; k < n; ++k) grad[k] += coeff * lp[k];
  }

  ProbabilityMask next = mask;
  double gmap_sq = 0.0;
  if (eta > 0.0) {
    for (std::size_t k = 0; k < n; ++k) next.probs[k] -= eta * grad[k];
    project_feasible_inplace(next.probs, mask.budget);
    for (std::size_t k = 0; k < n; ++k) {
      const double d = (mask.probs[k] - next.probs[k]) / eta;
      gmap_sq += d * d;
    }
  }
  monitor.records.push_back({loss_mean, gmap_sq, next.sum(), eta});
  return next;
}

/// The full outer iteration: Bernoulli sample, one-step inner update from
/// model0, outer validation loss, score-function gradient, projected
/// descent. An empty sample skips the inner update (the selected loss is
/// identically zero there, so theta_1 = theta_0).
inline ProbabilityMask lpge_step(const ProbabilityMask& mask,
                                 const EmbeddingModel& model0, const DataPool& pool,
                                 const InteractionSet& train_set,
                                 const CondenseConfig& config, double eta, Rng& rng,
                                 ConvergenceMonitor& monitor,
                                 EmbeddingModel* theta1_out = nullptr) {
  const auto loss_of = [&](const SampledMask& sample, Rng& loss_rng) {
    const auto t0 = std::chrono::steady_clock::now();
    EmbeddingModel theta1 = sample.count() == 0
                                ? model0
                                : inner_one_step(model0, sample, pool,
                                                 config.inner_lr, loss_rng);
    monitor.seconds_inner +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double loss =
        outer_loss(theta1, train_set, config.val_batch_size, loss_rng, &pool.pool);
    if (theta1_out != nullptr) *theta1_out = std::move(theta1);
    return loss;
  };
  return lpge_step_with_loss(mask, loss_of, eta, config, rng, monitor);
}

/// Step-size schedule: eta / decay^floor(t / every), never below the floor.
inline double eta_at(const CondenseConfig& config, int t) {
  const double decayed =
      config.outer_lr /
      std::pow(config.lr_decay_factor, static_cast<double>(t / config.lr_decay_every));
  return std::max(config.lr_floor, decayed);
}

/// Runs the full condensation loop. The inner model is freshly initialized
/// every iteration (warm_start carries it across iterations instead). `val`
/// is not consumed by the optimization; outer validation batches are drawn
/// from the training interactions.
inline std::pair<ProbabilityMask, ConvergenceMonitor> condense(
    const DataPool& pool, const InteractionSet& train_set,
    const InteractionSet& val, const TrainConfig& backbone_config,
    const CondenseConfig& config) {
  (void)val;
  if (pool.pool.empty() || train_set.empty())
    throw DataError("condense: pool and training set must be nonempty");

  ProbabilityMask mask = init_probabilities(pool, config);
  ConvergenceMonitor monitor;
  Rng rng(derive_seed(config.seed, 17));

  EmbeddingModel warm;
  bool have_warm = false;
  for (int t = 0; t < config.outer_epochs; ++t) {
    const auto iter_start = std::chrono::steady_clock::now();
    const double inner_before = monitor.seconds_inner;

    EmbeddingModel model0;
    if (config.warm_start && have_warm) {
      model0 = std::move(warm);
    } else {
      TrainConfig c = backbone_config;
      c.seed = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(t));
      const auto t0 = std::chrono::steady_clock::now();
      model0 = init_model(pool.pool.n_users(), pool.pool.n_items(), c,
                          c.arch == Arch::lightgcn ? &train_set : nullptr);
      monitor.seconds_inner +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    mask = lpge_step(mask, model0, pool, train_set, config, eta_at(config, t), rng,
                     monitor, config.warm_start ? &warm : nullptr);
    have_warm = true;
    if (!is_feasible(mask))
      throw DivergenceError("condense: infeasible mask after iteration " +
                            std::to_string(t));

    const double iter_total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - iter_start)
            .count();
    monitor.seconds_data_update +=
        iter_total - (monitor.seconds_inner - inner_before);
  }
  return {std::move(mask), std::move(monitor)};
}

enum class FinalizeMode { bernoulli, topk };

/// Materializes the condensed interaction set from the optimized mask.
/// topk keeps the floor(budget) highest-probability pairs; bernoulli samples
/// each pair and trims overflow beyond ceil(budget) by descending
/// probability. Ties break by ascending (user, item). May return an empty
/// set when all probabilities are ~0; callers should treat that as a
/// warning, not an error.
inline InteractionSet finalize_dataset(const ProbabilityMask& mask,
                                       FinalizeMode mode, Rng& rng) {
  if (!is_feasible(mask)) throw ConfigError("finalize_dataset: infeasible mask");
  std::vector<std::size_t> chosen;

  if (mode == FinalizeMode::topk) {
    std::vector<std::size_t> idx(mask.probs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (mask.probs[a] != mask.probs[b]) return mask.probs[a] > mask.probs[b];
      return mask.support[a] < mask.support[b];
    });
    const auto take =
        std::min<std::size_t>(idx.size(), static_cast<std::size_t>(mask.budget));
    chosen.assign(idx.begin(), idx.begin() + take);
  } else {
    for (std::size_t k = 0; k < mask.probs.size(); ++k)
      if (rng.bernoulli(mask.probs[k])) chosen.push_back(k);
    const auto cap = static_cast<std::size_t>(std::ceil(mask.budget));
    if (chosen.size() > cap) {
      std::sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
        if (mask.probs[a] != mask.probs[b]) return mask.probs[a] > mask.probs[b];
        return mask.support[a] < mask.support[b];
      });
      chosen.resize(cap);
    }
  }

  std::vector<Pair> pairs;
  pairs.reserve(chosen.size());
  for (auto k : chosen) pairs.push_back(mask.support[k]);
  return InteractionSet::from_pairs(mask.n_users, mask.n_items, std::move(pairs));
}

}  // namespace dconrec
