#pragma once

// Shared test fixtures and independent oracles: the planted two-block
// benchmark, finite-difference gradient checks, brute-force ranking metrics,
// and exhaustive Bernoulli-mask enumeration. Everything here is test-only
// and deliberately avoids the library's own computation paths where it
// serves as an oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "dconrec/dconrec.hpp"

namespace testsupport {

// ---------------------------------------------------------------------------
// planted two-block benchmark

struct PlantedData {
  dconrec::InteractionSet interactions;
  int users_per_cluster = 0;
  int items_per_cluster = 0;

  int n_clusters() const { return 2; }
  int user_cluster(int u) const { return u / users_per_cluster; }
  int item_cluster(int i) const { return i / items_per_cluster; }
  bool in_cluster(int u, int i) const { return user_cluster(u) == item_cluster(i); }
};

// Two user clusters, each preferring a disjoint item cluster. Items inside a
// cluster carry a mild popularity skew so proxies have something to rank.
inline PlantedData make_planted(int users_per_cluster, int items_per_cluster,
                                int per_user, std::uint64_t seed,
                                double zipf_alpha = 1.0) {
  PlantedData out;
  out.users_per_cluster = users_per_cluster;
  out.items_per_cluster = items_per_cluster;
  const int n_users = 2 * users_per_cluster;
  const int n_items = 2 * items_per_cluster;

  dconrec::Rng rng(dconrec::derive_seed(seed, 3001));
  std::vector<dconrec::Pair> pairs;
  std::vector<double> weights(items_per_cluster);
  for (int r = 0; r < items_per_cluster; ++r)
    weights[r] = 1.0 / std::pow(1.0 + r, zipf_alpha);

  for (int u = 0; u < n_users; ++u) {
    const int base = out.user_cluster(u) * items_per_cluster;
    std::vector<double> w = weights;
    for (int k = 0; k < per_user && k < items_per_cluster; ++k) {
      double total = 0.0;
      for (double v : w) total += v;
      double x = rng.uniform01() * total;
      int pick = 0;
      for (int i = 0; i < items_per_cluster; ++i) {
        x -= w[i];
        if (x <= 0.0 || i == items_per_cluster - 1) {
          if (w[i] == 0.0) continue;
          pick = i;
          break;
        }
      }
      if (w[pick] == 0.0) {  // fell onto an exhausted slot, take the next live one
        for (int i = 0; i < items_per_cluster; ++i)
          if (w[i] > 0.0) {
            pick = i;
            break;
          }
      }
      w[pick] = 0.0;
      pairs.emplace_back(u, base + pick);
    }
  }
  out.interactions =
      dconrec::InteractionSet::from_pairs(n_users, n_items, std::move(pairs));
  return out;
}

// Wrong-cluster (user, item) pairs avoiding everything in `avoid`.
inline dconrec::InteractionSet make_adversarial(const PlantedData& planted,
                                                const dconrec::InteractionSet& avoid,
                                                std::size_t count,
                                                std::uint64_t seed) {
  dconrec::Rng rng(dconrec::derive_seed(seed, 3002));
  std::set<dconrec::Pair> chosen;
  const int n_users = avoid.n_users();
  const int ipc = planted.items_per_cluster;
  while (chosen.size() < count) {
    const int u = rng.uniform_int(n_users);
    const int wrong = 1 - planted.user_cluster(u);
    const int i = wrong * ipc + rng.uniform_int(ipc);
    if (avoid.contains(u, i)) continue;
    chosen.insert({u, i});
  }
  return dconrec::InteractionSet::from_pairs(
      n_users, avoid.n_items(), {chosen.begin(), chosen.end()});
}

// Pool plus extra pseudo-flagged pairs (duplicates of existing support are
// dropped).
inline dconrec::DataPool with_extra_pseudo(const dconrec::DataPool& pool,
                                           const dconrec::InteractionSet& extra) {
  std::map<dconrec::Pair, std::uint8_t> tagged;
  for (std::size_t k = 0; k < pool.pool.size(); ++k)
    tagged[pool.pool.pairs()[k]] = pool.is_pseudo[k];
  for (const auto& p : extra.pairs()) tagged.emplace(p, 1);

  dconrec::DataPool out;
  std::vector<dconrec::Pair> pairs;
  std::size_t n_pseudo = 0;
  for (const auto& [p, f] : tagged) {
    pairs.push_back(p);
    out.is_pseudo.push_back(f);
    n_pseudo += f;
  }
  out.pool = dconrec::InteractionSet::from_pairs(pool.pool.n_users(),
                                                 pool.pool.n_items(), std::move(pairs));
  const std::size_t n_orig = out.pool.size() - n_pseudo;
  out.r_ps = n_orig ? static_cast<double>(n_pseudo) / n_orig : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// finite-difference oracles

inline dconrec::FactorGradient fd_bpr_gradient(const dconrec::EmbeddingModel& model,
                                               std::span<const dconrec::Triple> triples,
                                               double l2, double h = 1e-5) {
  dconrec::FactorGradient g{dconrec::Matrix(model.n_users(), model.dim()),
                            dconrec::Matrix(model.n_items(), model.dim())};
  dconrec::EmbeddingModel work = model;
  auto central = [&](double& slot) {
    const double orig = slot;
    slot = orig + h;
    const double up = dconrec::bpr_loss(work, triples, l2);
    slot = orig - h;
    const double dn = dconrec::bpr_loss(work, triples, l2);
    slot = orig;
    return (up - dn) / (2.0 * h);
  };
  for (std::size_t k = 0; k < work.user_factors.data().size(); ++k)
    g.user.data()[k] = central(work.user_factors.data()[k]);
  for (std::size_t k = 0; k < work.item_factors.data().size(); ++k)
    g.item.data()[k] = central(work.item_factors.data()[k]);
  return g;
}

inline double gradient_rel_error(const dconrec::FactorGradient& a,
                                 const dconrec::FactorGradient& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < a.user.data().size(); ++k) {
    const double d = a.user.data()[k] - b.user.data()[k];
    num += d * d;
    den += b.user.data()[k] * b.user.data()[k];
  }
  for (std::size_t k = 0; k < a.item.data().size(); ++k) {
    const double d = a.item.data()[k] - b.item.data()[k];
    num += d * d;
    den += b.item.data()[k] * b.item.data()[k];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

// ln p(M|S) evaluated directly from the product form.
inline double log_prob_oracle(const std::vector<double>& s,
                              const std::vector<std::uint8_t>& m) {
  double lp = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k)
    lp += m[k] ? std::log(s[k]) : std::log(1.0 - s[k]);
  return lp;
}

// ---------------------------------------------------------------------------
// exhaustive Bernoulli enumeration (pools of <= ~20 entries)

// d/ds_j of sum_M loss(M) p(M|S), by the product rule, no score-function
// identity involved.
inline std::vector<double> exact_expected_gradient(
    const std::vector<double>& s,
    const std::function<double(std::uint32_t)>& loss_of) {
  const std::size_t n = s.size();
  std::vector<double> grad(n, 0.0);
  for (std::uint32_t M = 0; M < (1u << n); ++M) {
    const double loss = loss_of(M);
    for (std::size_t j = 0; j < n; ++j) {
      double dpd = (M >> j) & 1u ? 1.0 : -1.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j) continue;
        dpd *= (M >> k) & 1u ? s[k] : 1.0 - s[k];
      }
      grad[j] += loss * dpd;
    }
  }
  return grad;
}

inline std::uint32_t mask_key(const std::vector<std::uint8_t>& bits) {
  std::uint32_t key = 0;
  for (std::size_t k = 0; k < bits.size(); ++k)
    if (bits[k]) key |= 1u << k;
  return key;
}

// ---------------------------------------------------------------------------
// brute-force ranking metrics (full sort, independent of the counting-based
// implementation)

struct OracleMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
};

inline OracleMetrics oracle_user_metrics(const std::function<double(int, int)>& score,
                                         int u, const dconrec::InteractionSet& exclusion,
                                         const std::vector<int>& test_items, int k) {
  std::vector<std::pair<double, int>> ranking;
  for (int i = 0; i < exclusion.n_items(); ++i) {
    if (exclusion.contains(u, i)) continue;
    ranking.push_back({score(u, i), i});
  }
  std::sort(ranking.begin(), ranking.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::set<int> relevant(test_items.begin(), test_items.end());
  int hits = 0;
  double dcg = 0.0;
  for (int p = 0; p < std::min<int>(k, static_cast<int>(ranking.size())); ++p) {
    if (relevant.count(ranking[p].second)) {
      hits++;
      dcg += 1.0 / std::log2(p + 2.0);
    }
  }
  double idcg = 0.0;
  for (int p = 1; p <= std::min<int>(k, static_cast<int>(test_items.size())); ++p)
    idcg += 1.0 / std::log2(p + 1.0);
  return {static_cast<double>(hits) / test_items.size(),
          idcg > 0 ? dcg / idcg : 0.0};
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// KKT conditions of min ||y-x||^2 s.t. 0<=y<=1, sum y <= b: necessary and
// sufficient for this convex QP, and independent of the clamp-and-bisect
// construction. With shift mu >= 0 (zero unless the budget is tight):
// interior coords satisfy y_k = x_k - mu, coords at 0 need x_k <= mu, coords
// at 1 need x_k - 1 >= mu.
inline bool projection_kkt_holds(const std::vector<double>& x,
                                 const std::vector<double>& y, double budget,
                                 double tol) {
  double sum = 0;
  for (double v : y) {
    if (v < -tol || v > 1 + tol) return false;
    sum += v;
  }
  if (sum > budget + tol) return false;

  double mu_lo = 0.0, mu_hi = 1e300;
  if (sum < budget - 1e-6) mu_hi = 0.0;  // complementarity: slack budget -> mu = 0
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] > tol && y[k] < 1 - tol) {
      const double shift = x[k] - y[k];
      mu_lo = std::max(mu_lo, shift - tol);
      mu_hi = std::min(mu_hi, shift + tol);
    } else if (y[k] <= tol) {
      mu_lo = std::max(mu_lo, x[k]);  // x_k <= mu
    } else {
      mu_hi = std::min(mu_hi, x[k] - 1.0);  // mu <= x_k - 1
    }
  }
  return mu_lo <= mu_hi + tol;
}

}  // namespace testsupport
