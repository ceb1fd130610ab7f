#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dconrec/augment.hpp"
#include "dconrec/condense.hpp"
#include "dconrec/errors.hpp"
#include "dconrec/interactions.hpp"
#include "dconrec/model.hpp"
#include "dconrec/projection.hpp"
#include "dconrec/training.hpp"

namespace dconrec {

enum class BaselineMethod { random, majority, svp_cf, gradmatch };
enum class SvpDirection { hardest, easiest };
enum class GmDistance { cosine_per_matrix, euclidean };

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::random;
  double ratio_r = 0.25;
  std::uint64_t seed = 0;
  SvpDirection svp_direction = SvpDirection::hardest;
  GmDistance gm_distance = GmDistance::cosine_per_matrix;
  int gm_outer_epochs = 100;
  double gm_lr = 0.01;
  int gm_batch = 4096;  // real-gradient batch size
};

inline std::size_t selection_budget(std::size_t n, double r) {
  if (r <= 0.0 || r > 1.0) throw ConfigError("selection ratio must be in (0,1]");
  return static_cast<std::size_t>(r * static_cast<double>(n));
}

/// Uniform sample of floor(r|D|) pairs without replacement.
inline InteractionSet random_select(const InteractionSet& train_set, double r,
                                    std::uint64_t seed) {
  const std::size_t budget = selection_budget(train_set.size(), r);
  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 23));
  rng.shuffle(idx);
  std::vector<Pair> pairs;
  pairs.reserve(budget);
  for (std::size_t k = 0; k < budget; ++k) pairs.push_back(train_set.pairs()[idx[k]]);
  return InteractionSet::from_pairs(train_set.n_users(), train_set.n_items(),
                                    std::move(pairs));
}

/// Greedy fill by ascending user degree (user id on ties), taking each
/// user's interactions whole; the boundary user is truncated by ascending
/// item id.
inline InteractionSet majority_select(const InteractionSet& train_set, double r) {
  const std::size_t budget = selection_budget(train_set.size(), r);
  std::vector<int> users;
  for (int u = 0; u < train_set.n_users(); ++u)
    if (train_set.degree(u) > 0) users.push_back(u);
  std::stable_sort(users.begin(), users.end(), [&](int a, int b) {
    return train_set.degree(a) < train_set.degree(b);
  });
  std::vector<Pair> pairs;
  pairs.reserve(budget);
  for (int u : users) {
    for (const auto& p : train_set.row(u)) {  // rows are item-ascending
      if (pairs.size() == budget) break;
      pairs.push_back(p);
    }
    if (pairs.size() == budget) break;
  }
  return InteractionSet::from_pairs(train_set.n_users(), train_set.n_items(),
                                    std::move(pairs));
}

/// Selection via proxy: an MF proxy scores every training pair by its BPR
/// loss against one fixed sampled negative; keeps the floor(r|D|) hardest
/// (highest-loss) pairs, or the easiest under the flipped direction.
inline InteractionSet svp_cf_select(const InteractionSet& train_set,
                                    const InteractionSet& val, double r,
                                    TrainConfig proxy_config,
                                    SvpDirection direction = SvpDirection::hardest) {
  const std::size_t budget = selection_budget(train_set.size(), r);
  proxy_config.arch = Arch::mf;
  const auto proxy = train_proxy(train_set, val, Arch::mf, proxy_config);

  Rng rng(derive_seed(proxy_config.seed, 29));
  std::vector<double> loss(train_set.size());
  const auto view = detail::scoring_view(proxy);
  const int d = proxy.dim();
  for (std::size_t k = 0; k < train_set.size(); ++k) {
    const auto& [u, i] = train_set.pairs()[k];
    const int j = sample_negatives(train_set, u, 1, rng)[0];
    const double gap = dot(view.user->row(u), view.item->row(i), d) -
                       dot(view.user->row(u), view.item->row(j), d);
    loss[k] = neg_log_sigmoid(gap);
  }

  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const bool hardest = direction == SvpDirection::hardest;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (loss[a] != loss[b]) return hardest ? loss[a] > loss[b] : loss[a] < loss[b];
    return train_set.pairs()[a] < train_set.pairs()[b];
  });
  std::vector<Pair> pairs;
  pairs.reserve(budget);
  for (std::size_t k = 0; k < budget; ++k) pairs.push_back(train_set.pairs()[idx[k]]);
  return InteractionSet::from_pairs(train_set.n_users(), train_set.n_items(),
                                    std::move(pairs));
}

inline double cosine_distance(const std::vector<double>& a,
                              const std::vector<double>& b) {
  const double na = std::sqrt(dot(a.data(), a.data(), static_cast<int>(a.size())));
  const double nb = std::sqrt(dot(b.data(), b.data(), static_cast<int>(b.size())));
  if (na < 1e-12 || nb < 1e-12) return 1.0;
  const double c = dot(a.data(), b.data(), static_cast<int>(a.size())) / (na * nb);
  return 1.0 - c;
}

/// Distance between two factor-space gradients, summed over the user and
/// item matrices.
inline double matching_distance(const FactorGradient& real,
                                const FactorGradient& syn, GmDistance kind) {
  if (kind == GmDistance::cosine_per_matrix)
    return cosine_distance(real.user.data(), syn.user.data()) +
           cosine_distance(real.item.data(), syn.item.data());
  double d = 0.0;
  for (std::size_t k = 0; k < real.user.data().size(); ++k) {
    const double e = real.user.data()[k] - syn.user.data()[k];
    d += e * e;
  }
  for (std::size_t k = 0; k < real.item.data().size(); ++k) {
    const double e = real.item.data()[k] - syn.item.data()[k];
    d += e * e;
  }
  return d;
}

struct GradMatchResult {
  ProbabilityMask mask;
  InteractionSet condensed;
  std::vector<double> distance_per_epoch;
  std::vector<double> sum_s_per_epoch;
  double seconds_data_update = 0.0;
};

namespace detail {

// d(distance)/d(syn gradient), same shape as the gradients.
inline FactorGradient distance_grad(const FactorGradient& real,
                                    const FactorGradient& syn, GmDistance kind) {
  FactorGradient a{Matrix(real.user.rows(), real.user.cols()),
                   Matrix(real.item.rows(), real.item.cols())};
  auto per_matrix = [&](const Matrix& r, const Matrix& y, Matrix& out) {
    const auto& rd = r.data();
    const auto& yd = y.data();
    auto& od = out.data();
    if (kind == GmDistance::euclidean) {
      for (std::size_t k = 0; k < rd.size(); ++k) od[k] = 2.0 * (yd[k] - rd[k]);
      return;
    }
    const double nr = std::sqrt(dot(rd.data(), rd.data(), static_cast<int>(rd.size())));
    const double ny = std::sqrt(dot(yd.data(), yd.data(), static_cast<int>(yd.size())));
    if (nr < 1e-12 || ny < 1e-12) return;  // flat region, zero gradient
    const double ip = dot(rd.data(), yd.data(), static_cast<int>(rd.size()));
    const double c1 = -1.0 / (nr * ny);
    const double c2 = ip / (nr * ny * ny * ny);
    for (std::size_t k = 0; k < rd.size(); ++k) od[k] = c1 * rd[k] + c2 * yd[k];
  };
  per_matrix(real.user, syn.user, a.user);
  per_matrix(real.item, syn.item, a.item);
  return a;
}

}  // namespace detail

/// One-step gradient matching over the same mask parameterization and
/// feasible region as the policy-gradient condenser. Each epoch draws a
/// fresh model, matches the real-batch gradient against the expected
/// synthetic gradient under the relaxed mask (selected-pair gradients
/// weighted by s), and descends the distance analytically through the
/// weights.
inline GradMatchResult gradmatch_condense(const DataPool& pool,
                                          const InteractionSet& train_set, double r,
                                          const TrainConfig& backbone_config,
                                          const BaselineConfig& config) {
  if (pool.pool.empty() || train_set.empty())
    throw DataError("gradmatch_condense: empty inputs");
  CondenseConfig init_cfg;
  init_cfg.ratio_r = r;
  ProbabilityMask mask = init_probabilities(pool, init_cfg);
  const double norm = 1.0 / mask.budget;
  const std::size_t n = mask.probs.size();

  GradMatchResult result;
  Rng rng(derive_seed(config.seed, 31));

  for (int t = 0; t < config.gm_outer_epochs; ++t) {
    TrainConfig c = backbone_config;
    c.seed = derive_seed(config.seed, 2000 + static_cast<std::uint64_t>(t));
    const auto model0 =
        init_model(pool.pool.n_users(), pool.pool.n_items(), c,
                   c.arch == Arch::lightgcn ? &train_set : nullptr);

    const auto update_start = std::chrono::steady_clock::now();
    const auto view = detail::scoring_view(model0);
    const int d = model0.dim();

    // real-batch gradient (ranking term only)
    std::vector<Triple> real_batch;
    if (static_cast<std::size_t>(config.gm_batch) >= train_set.size()) {
      for (const auto& [u, i] : train_set.pairs())
        real_batch.push_back({u, i, sample_negatives(train_set, u, 1, rng)[0]});
    } else {
      for (int k = 0; k < config.gm_batch; ++k) {
        const auto& [u, i] =
            train_set.pairs()[rng.uniform_int(static_cast<int>(train_set.size()))];
        real_batch.push_back({u, i, sample_negatives(train_set, u, 1, rng)[0]});
      }
    }
    FactorGradient g_real{Matrix(model0.n_users(), d), Matrix(model0.n_items(), d)};
    detail::accumulate_bpr(view, real_batch, 1.0 / real_batch.size(), &g_real);

    // expected synthetic gradient under the relaxed mask
    std::vector<int> negs(n);
    std::vector<double> coeff(n);
    FactorGradient g_syn{Matrix(model0.n_users(), d), Matrix(model0.n_items(), d)};
    for (std::size_t k = 0; k < n; ++k) {
      const auto& [u, i] = pool.pool.pairs()[k];
      const int j = sample_negatives(pool.pool, u, 1, rng)[0];
      negs[k] = j;
      const double* pu = view.user->row(u);
      const double gap = dot(pu, view.item->row(i), d) - dot(pu, view.item->row(j), d);
      const double cgrad = -stable_sigmoid(-gap);
      coeff[k] = cgrad;
      const double w = mask.probs[k] * cgrad * norm;
      double* gu = g_syn.user.row(u);
      double* gi = g_syn.item.row(i);
      double* gj = g_syn.item.row(j);
      const double* qi = view.item->row(i);
      const double* qj = view.item->row(j);
      for (int x = 0; x < d; ++x) {
        gu[x] += w * (qi[x] - qj[x]);
        gi[x] += w * pu[x];
        gj[x] -= w * pu[x];
      }
    }

    const bool propagated = model0.arch == Arch::lightgcn && model0.n_layers > 0;
    FactorGradient g_real_base = g_real;
    FactorGradient g_syn_base = g_syn;
    if (propagated) {
      auto br = detail::layer_mean_propagate(model0.adjacency, model0.n_layers,
                                             g_real.user, g_real.item);
      g_real_base = {std::move(br.user), std::move(br.item)};
      auto bs = detail::layer_mean_propagate(model0.adjacency, model0.n_layers,
                                             g_syn.user, g_syn.item);
      g_syn_base = {std::move(bs.user), std::move(bs.item)};
    }

    const double dist = matching_distance(g_real_base, g_syn_base, config.gm_distance);
    if (!std::isfinite(dist))
      throw DivergenceError("gradmatch_condense: nonfinite distance at epoch " +
                            std::to_string(t));
    FactorGradient a = detail::distance_grad(g_real_base, g_syn_base, config.gm_distance);
    if (propagated) {
      auto ba = detail::layer_mean_propagate(model0.adjacency, model0.n_layers,
                                             a.user, a.item);
      a = {std::move(ba.user), std::move(ba.item)};
    }

    // chain rule through the per-pair weights
    std::vector<double> ds(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& [u, i] = pool.pool.pairs()[k];
      const int j = negs[k];
      const double* pu = view.user->row(u);
      const double* qi = view.item->row(i);
      const double* qj = view.item->row(j);
      double s = 0.0;
      const double* au = a.user.row(u);
      const double* ai = a.item.row(i);
      const double* aj = a.item.row(j);
      for (int x = 0; x < d; ++x)
        s += au[x] * (qi[x] - qj[x]) + (ai[x] - aj[x]) * pu[x];
      ds[k] = coeff[k] * norm * s;
    }

    for (std::size_t k = 0; k < n; ++k) mask.probs[k] -= config.gm_lr * ds[k];
    project_feasible_inplace(mask.probs, mask.budget);

    result.seconds_data_update +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - update_start)
            .count();
    result.distance_per_epoch.push_back(dist);
    result.sum_s_per_epoch.push_back(mask.sum());
    if (!is_feasible(mask))
      throw DivergenceError("gradmatch_condense: infeasible mask at epoch " +
                            std::to_string(t));
  }

  Rng fin_rng(derive_seed(config.seed, 37));
  result.condensed = finalize_dataset(mask, FinalizeMode::topk, fin_rng);
  result.mask = std::move(mask);
  return result;
}

}  // namespace dconrec
