#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dconrec/errors.hpp"
#include "dconrec/interactions.hpp"
#include "dconrec/model.hpp"
#include "dconrec/training.hpp"

namespace dconrec {

struct PseudoDataset {
  InteractionSet pairs;  // pseudo pairs only, disjoint from the source train set
  int per_user_k = -1;   // fixed K if one was used, else -1 (proportional)
  Arch proxy_arch = Arch::mf;
  std::uint64_t seed = 0;
};

/// Union of the original training interactions and the mined pseudo pairs.
/// `is_pseudo` is parallel to `pool.pairs()`.
struct DataPool {
  InteractionSet pool;
  std::vector<std::uint8_t> is_pseudo;
  double r_ps = 0.0;  // realized |pseudo| / |original|

  std::size_t n_original() const {
    std::size_t n = 0;
    for (auto f : is_pseudo) n += f == 0;
    return n;
  }
  std::size_t n_pseudo() const { return pool.size() - n_original(); }
};

inline EmbeddingModel train_proxy(const InteractionSet& train_set,
                                  const InteractionSet& val, Arch arch,
                                  TrainConfig config) {
  config.arch = arch;
  auto model = init_model(train_set.n_users(), train_set.n_items(), config,
                          arch == Arch::lightgcn ? &train_set : nullptr);
  return train(std::move(model), train_set, val, config);
}

namespace detail {

// Top-k ids by (score desc, id asc) among the given candidates.
inline std::vector<int> top_k_ids(const std::vector<int>& candidates,
                                  const std::vector<double>& scores, int k) {
  std::vector<int> out = candidates;
  const int take = std::min<int>(k, static_cast<int>(out.size()));
  std::partial_sort(out.begin(), out.begin() + take, out.end(),
                    [&](int a, int b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  out.resize(take);
  return out;
}

}  // namespace detail

/// The k highest-scoring items the user has not interacted with in `train`,
/// ties broken by ascending item id. Returns fewer than k when not enough
/// unexposed items exist.
inline std::vector<int> topk_unexposed(const EmbeddingModel& proxy,
                                       const InteractionSet& train_set, int u,
                                       int k) {
  if (u < 0 || u >= train_set.n_users()) throw ConfigError("topk_unexposed: bad user id");
  if (k < 0) throw ConfigError("topk_unexposed: k must be >= 0");
  if (k == 0) return {};
  const auto prop = effective_embeddings(proxy);
  const int d = prop.user.cols();
  std::vector<double> scores(train_set.n_items());
  for (int i = 0; i < train_set.n_items(); ++i)
    scores[i] = dot(prop.user.row(u), prop.item.row(i), d);
  std::vector<int> candidates;
  candidates.reserve(train_set.n_items() - train_set.degree(u));
  for (int i = 0; i < train_set.n_items(); ++i)
    if (!train_set.contains(u, i)) candidates.push_back(i);
  return detail::top_k_ids(candidates, scores, k);
}

/// Mines per-user pseudo pairs with the proxy. Budget per user is
/// round(r_ps * degree(u)), or `fixed_k` for every user when fixed_k >= 0.
inline PseudoDataset mine_pseudo(const InteractionSet& train_set,
                                 const EmbeddingModel& proxy, double r_ps,
                                 std::uint64_t seed, int fixed_k = -1) {
  if (r_ps < 0) throw ConfigError("r_ps must be nonnegative");
  const auto prop = effective_embeddings(proxy);
  const int d = prop.user.cols();
  std::vector<Pair> pseudo;
  std::vector<double> scores(train_set.n_items());
  std::vector<int> candidates;
  for (int u = 0; u < train_set.n_users(); ++u) {
    const int deg = train_set.degree(u);
    const int k = fixed_k >= 0
                      ? fixed_k
                      : static_cast<int>(std::llround(r_ps * deg));
    if (k == 0 || deg == 0) continue;
    for (int i = 0; i < train_set.n_items(); ++i)
      scores[i] = dot(prop.user.row(u), prop.item.row(i), d);
    candidates.clear();
    for (int i = 0; i < train_set.n_items(); ++i)
      if (!train_set.contains(u, i)) candidates.push_back(i);
    for (int i : detail::top_k_ids(candidates, scores, k))
      pseudo.emplace_back(u, i);
  }
  PseudoDataset out;
  out.pairs = InteractionSet::from_pairs(train_set.n_users(), train_set.n_items(),
                                         std::move(pseudo));
  out.per_user_k = fixed_k;
  out.proxy_arch = proxy.arch;
  out.seed = seed;
  return out;
}

inline DataPool assemble_pool(const InteractionSet& train_set,
                              const InteractionSet& pseudo) {
  std::vector<std::pair<Pair, std::uint8_t>> tagged;
  tagged.reserve(train_set.size() + pseudo.size());
  for (const auto& p : train_set.pairs()) tagged.push_back({p, 0});
  for (const auto& p : pseudo.pairs()) {
    if (train_set.contains(p.first, p.second))
      throw Error("pseudo pair collides with the training set");
    tagged.push_back({p, 1});
  }
  std::sort(tagged.begin(), tagged.end());
  std::vector<Pair> pairs;
  DataPool pool;
  pairs.reserve(tagged.size());
  pool.is_pseudo.reserve(tagged.size());
  for (const auto& [p, f] : tagged) {
    pairs.push_back(p);
    pool.is_pseudo.push_back(f);
  }
  pool.pool = InteractionSet::from_pairs(train_set.n_users(), train_set.n_items(),
                                         std::move(pairs));
  pool.r_ps = train_set.empty()
                  ? 0.0
                  : static_cast<double>(pseudo.size()) / train_set.size();
  return pool;
}

inline DataPool build_data_pool(const InteractionSet& train_set,
                                const EmbeddingModel& proxy, double r_ps,
                                std::uint64_t seed, int fixed_k = -1) {
  const auto pseudo = mine_pseudo(train_set, proxy, r_ps, seed, fixed_k);
  return assemble_pool(train_set, pseudo.pairs);
}

inline void save_pool(const DataPool& pool, const std::string& path,
                      const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  for (std::size_t k = 0; k < pool.pool.size(); ++k) {
    const auto& [u, i] = pool.pool.pairs()[k];
    out << u << '\t' << i << '\t' << (pool.is_pseudo[k] ? "pseudo" : "orig") << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

inline DataPool load_pool(const std::string& path, int n_users = -1,
                          int n_items = -1) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<std::pair<Pair, std::uint8_t>> tagged;
  std::string line;
  std::size_t line_no = 0;
  int max_u = 0, max_i = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    int u, i;
    char tag[16];
    if (std::sscanf(line.c_str(), "%d\t%d\t%15s", &u, &i, tag) != 3)
      throw ParseError(path + " line " + std::to_string(line_no) + ": bad pool row");
    const std::string t(tag);
    if (t != "orig" && t != "pseudo")
      throw ParseError(path + " line " + std::to_string(line_no) +
                       ": unknown origin tag " + t);
    tagged.push_back({{u, i}, t == "pseudo"});
    max_u = std::max(max_u, u);
    max_i = std::max(max_i, i);
  }
  if (tagged.empty()) throw DataError("empty pool: " + path);
  std::sort(tagged.begin(), tagged.end());
  DataPool pool;
  std::vector<Pair> pairs;
  std::size_t n_pseudo = 0;
  for (const auto& [p, f] : tagged) {
    pairs.push_back(p);
    pool.is_pseudo.push_back(f);
    n_pseudo += f;
  }
  pool.pool = InteractionSet::from_pairs(n_users < 0 ? max_u + 1 : n_users,
                                         n_items < 0 ? max_i + 1 : n_items,
                                         std::move(pairs));
  if (pool.pool.size() != pool.is_pseudo.size())
    throw ParseError(path + ": duplicate pool rows");
  const std::size_t n_orig = pool.pool.size() - n_pseudo;
  pool.r_ps = n_orig ? static_cast<double>(n_pseudo) / n_orig : 0.0;
  return pool;
}

}  // namespace dconrec
