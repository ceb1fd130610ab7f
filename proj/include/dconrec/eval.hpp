#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <string>
#include <vector>

#include "dconrec/errors.hpp"
#include "dconrec/interactions.hpp"
#include "dconrec/model.hpp"

namespace dconrec {

/// Flat metric map: overall keys look like "recall@10", per-group keys like
/// "head.ndcg@5". Values are per-user means over evaluated users.
struct EvalReport {
  std::map<std::string, double> values;
  std::map<std::string, int> group_user_counts;  // evaluated users per group
  int n_evaluated_users = 0;
};

using ScoreFn = std::function<double(int u, int i)>;

namespace detail {

// Rank of each test item among candidates (items outside the exclusion set),
// ties broken by ascending item id. A test item that is itself excluded gets
// rank 0, meaning "not rankable" (it can never be a hit).
inline std::vector<int> ranks_for_user(const ScoreFn& score_of, int u,
                                       const InteractionSet& exclusion,
                                       std::span<const Pair> test_row,
                                       std::vector<double>& scratch) {
  const int ni = exclusion.n_items();
  if (static_cast<int>(scratch.size()) != ni) scratch.resize(ni);
  for (int i = 0; i < ni; ++i) scratch[i] = score_of(u, i);

  std::vector<int> ranks;
  ranks.reserve(test_row.size());
  for (const auto& [tu, ti] : test_row) {
    if (exclusion.contains(u, ti)) {
      ranks.push_back(0);
      continue;
    }
    const double st = scratch[ti];
    int better = 0;
    for (int i = 0; i < ni; ++i) {
      if (i == ti || exclusion.contains(u, i)) continue;
      if (scratch[i] > st || (scratch[i] == st && i < ti)) better++;
    }
    ranks.push_back(better + 1);
  }
  return ranks;
}

inline double dcg_weight(int rank) { return 1.0 / std::log2(rank + 1.0); }

struct UserMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
};

inline UserMetrics metrics_from_ranks(const std::vector<int>& ranks, int k) {
  UserMetrics m;
  int hits = 0;
  double dcg = 0.0;
  for (int r : ranks) {
    if (r >= 1 && r <= k) {
      hits++;
      dcg += dcg_weight(r);
    }
  }
  double idcg = 0.0;
  const int ideal = std::min<int>(k, static_cast<int>(ranks.size()));
  for (int p = 1; p <= ideal; ++p) idcg += dcg_weight(p);
  m.recall = static_cast<double>(hits) / static_cast<double>(ranks.size());
  m.ndcg = idcg > 0 ? dcg / idcg : 0.0;
  return m;
}

}  // namespace detail

/// Full-catalog evaluation from an arbitrary scoring function; the model
/// entry points below bind this to the effective embeddings.
inline EvalReport evaluate_scores(const ScoreFn& score_of,
                                  const InteractionSet& exclusion,
                                  const InteractionSet& test,
                                  const std::vector<int>& ks,
                                  const UserGroupPartition* groups = nullptr) {
  if (ks.empty()) throw ConfigError("evaluate: at least one K required");
  for (int k : ks)
    if (k < 1) throw ConfigError("evaluate: K must be >= 1");

  // group id per user: 0 none, 1 head, 2 torso, 3 tail
  std::vector<std::uint8_t> gid(test.n_users(), 0);
  static const char* kGroupName[4] = {"", "head", "torso", "tail"};
  if (groups) {
    for (int u : groups->head) gid[u] = 1;
    for (int u : groups->torso) gid[u] = 2;
    for (int u : groups->tail) gid[u] = 3;
  }

  struct Acc {
    double recall = 0, ndcg = 0;
    int n = 0;
  };
  std::vector<std::vector<Acc>> acc(4, std::vector<Acc>(ks.size()));
  std::vector<double> scratch;
  int evaluated = 0;

  for (int u = 0; u < test.n_users(); ++u) {
    const auto t_row = test.row(u);
    if (t_row.empty()) continue;
    evaluated++;
    const auto ranks = detail::ranks_for_user(score_of, u, exclusion, t_row, scratch);
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      const auto m = detail::metrics_from_ranks(ranks, ks[ki]);
      acc[0][ki].recall += m.recall;
      acc[0][ki].ndcg += m.ndcg;
      acc[0][ki].n++;
      if (groups && gid[u] != 0) {
        auto& a = acc[gid[u]][ki];
        a.recall += m.recall;
        a.ndcg += m.ndcg;
        a.n++;
      }
    }
  }

  EvalReport report;
  report.n_evaluated_users = evaluated;
  for (int g = 0; g < 4; ++g) {
    if (g > 0 && !groups) break;
    const std::string prefix = g == 0 ? "" : std::string(kGroupName[g]) + ".";
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      const auto& a = acc[g][ki];
      const double denom = a.n > 0 ? a.n : 1;
      report.values[prefix + "recall@" + std::to_string(ks[ki])] = a.recall / denom;
      report.values[prefix + "ndcg@" + std::to_string(ks[ki])] = a.ndcg / denom;
    }
    if (g > 0) report.group_user_counts[kGroupName[g]] = acc[g][0].n;
  }
  return report;
}

/// Mean Recall@k over test users; items the user holds in `train` are
/// excluded from the rankable candidates.
inline double recall_at_k(const EmbeddingModel& model, const InteractionSet& train,
                          const InteractionSet& test, int k) {
  const auto prop = effective_embeddings(model);
  const int d = prop.user.cols();
  const auto fn = [&](int u, int i) {
    return dot(prop.user.row(u), prop.item.row(i), d);
  };
  return evaluate_scores(fn, train, test, {k}).values.at("recall@" + std::to_string(k));
}

inline double ndcg_at_k(const EmbeddingModel& model, const InteractionSet& train,
                        const InteractionSet& test, int k) {
  const auto prop = effective_embeddings(model);
  const int d = prop.user.cols();
  const auto fn = [&](int u, int i) {
    return dot(prop.user.row(u), prop.item.row(i), d);
  };
  return evaluate_scores(fn, train, test, {k}).values.at("ndcg@" + std::to_string(k));
}

inline EvalReport evaluate(const EmbeddingModel& model, const DatasetSplit& split,
                           const std::vector<int>& ks,
                           const UserGroupPartition* groups = nullptr) {
  const auto prop = effective_embeddings(model);
  const int d = prop.user.cols();
  const auto fn = [&](int u, int i) {
    return dot(prop.user.row(u), prop.item.row(i), d);
  };
  return evaluate_scores(fn, split.train, split.test, ks, groups);
}

struct EmbeddingDump {
  int dim = 0;
  Matrix user;
  Matrix item;
};

/// Writes `embeddings.tsv`: a `#` header declaring the dimensions, then one
/// row per entity: `{user|item}<TAB>id<TAB>v1..vd`. 17 significant digits,
/// so import reproduces the factors bit-exactly.
inline void export_embeddings(const EmbeddingModel& model, const std::string& path) {
  for (double v : model.user_factors.data())
    if (!std::isfinite(v)) throw Error("export_embeddings: nonfinite factor");
  for (double v : model.item_factors.data())
    if (!std::isfinite(v)) throw Error("export_embeddings: nonfinite factor");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "# dim=" << model.dim() << "\tn_users=" << model.n_users()
      << "\tn_items=" << model.n_items() << '\n';
  out << std::setprecision(17);
  auto dump = [&](const char* kind, const Matrix& m) {
    for (int r = 0; r < m.rows(); ++r) {
      out << kind << '\t' << r;
      for (int c = 0; c < m.cols(); ++c) out << '\t' << m(r, c);
      out << '\n';
    }
  };
  dump("user", model.user_factors);
  dump("item", model.item_factors);
  if (!out) throw Error("write failed: " + path);
}

inline EmbeddingDump import_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header) || header.rfind("# dim=", 0) != 0)
    throw ParseError(path + ": missing embeddings header");
  EmbeddingDump dump;
  int nu = 0, ni = 0;
  if (std::sscanf(header.c_str(), "# dim=%d\tn_users=%d\tn_items=%d", &dump.dim,
                  &nu, &ni) != 3)
    throw ParseError(path + ": bad embeddings header");
  dump.user = Matrix(nu, dump.dim);
  dump.item = Matrix(ni, dump.dim);
  std::string kind;
  int id = 0;
  while (in >> kind >> id) {
    Matrix& m = kind == "user" ? dump.user : dump.item;
    if (kind != "user" && kind != "item")
      throw ParseError(path + ": unknown row kind " + kind);
    if (id < 0 || id >= m.rows()) throw ParseError(path + ": row id out of range");
    for (int c = 0; c < dump.dim; ++c)
      if (!(in >> m(id, c))) throw ParseError(path + ": truncated row");
  }
  return dump;
}

}  // namespace dconrec
