#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dconrec/errors.hpp"
#include "dconrec/random.hpp"

namespace dconrec {

using Pair = std::pair<int, int>;  // (user, item), internal contiguous ids

/// Immutable set of implicit-feedback (user, item) pairs with a per-user
/// index. Pairs are kept sorted by (user, item) and deduplicated, so the
/// pair list doubles as a CSR layout over users.
class InteractionSet {
 public:
  InteractionSet() = default;

  static InteractionSet from_pairs(int n_users, int n_items,
                                   std::vector<Pair> pairs) {
    for (const auto& [u, i] : pairs) {
      if (u < 0 || u >= n_users || i < 0 || i >= n_items)
        throw ConfigError("interaction id out of declared bounds: (" +
                          std::to_string(u) + "," + std::to_string(i) + ")");
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    InteractionSet s;
    s.n_users_ = n_users;
    s.n_items_ = n_items;
    s.pairs_ = std::move(pairs);
    s.build_index();
    return s;
  }

  int n_users() const { return n_users_; }
  int n_items() const { return n_items_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const std::vector<Pair>& pairs() const { return pairs_; }

  int degree(int u) const { return offsets_[u + 1] - offsets_[u]; }

  std::span<const Pair> row(int u) const {
    return {pairs_.data() + offsets_[u],
            static_cast<std::size_t>(degree(u))};
  }

  bool contains(int u, int i) const {
    const auto r = row(u);
    return std::binary_search(r.begin(), r.end(), Pair{u, i});
  }

 private:
  void build_index() {
    offsets_.assign(n_users_ + 1, 0);
    for (const auto& p : pairs_) offsets_[p.first + 1]++;
    for (int u = 0; u < n_users_; ++u) offsets_[u + 1] += offsets_[u];
  }

  int n_users_ = 0;
  int n_items_ = 0;
  std::vector<Pair> pairs_;        // sorted by (user, item)
  std::vector<int> offsets_;       // size n_users_+1, CSR into pairs_
};

struct DatasetSplit {
  InteractionSet train;
  InteractionSet validation;
  InteractionSet test;
};

struct UserGroupPartition {
  std::vector<int> head;   // degree > upper
  std::vector<int> torso;  // lower < degree <= upper
  std::vector<int> tail;   // 1 <= degree <= lower
  int lower = 10;
  int upper = 100;
};

// Mapping from original file ids to internal contiguous ids. Index in the
// vector is the internal id.
struct IdMap {
  std::vector<long long> user_original;
  std::vector<long long> item_original;
};

struct LoadedDataset {
  InteractionSet data;
  IdMap ids;
  std::size_t duplicates_dropped = 0;
};

enum class Format { tsv, csv };

namespace detail {

inline long long parse_int_field(std::string_view field, std::size_t line_no) {
  // trim surrounding whitespace / CR
  while (!field.empty() && (field.front() == ' ' || field.front() == '\r'))
    field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\r'))
    field.remove_suffix(1);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("line " + std::to_string(line_no) +
                     ": expected integer, got '" + std::string(field) + "'");
  return v;
}

}  // namespace detail

/// Reads `user<DELIM>item[...]` rows, skipping blank and `#` comment lines.
/// Original ids are remapped to contiguous ranges by ascending original id,
/// so re-exporting and re-loading reproduces the same internal ids.
inline LoadedDataset load_interactions(const std::string& path,
                                       Format format = Format::tsv) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  const char delim = format == Format::tsv ? '\t' : ',';

  std::vector<std::pair<long long, long long>> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::string_view sv(line);
    if (sv.back() == '\r') sv.remove_suffix(1);
    if (sv.empty()) continue;
    const auto p1 = sv.find(delim);
    if (p1 == std::string_view::npos)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected two columns");
    auto p2 = sv.find(delim, p1 + 1);
    if (p2 == std::string_view::npos) p2 = sv.size();
    const long long u = detail::parse_int_field(sv.substr(0, p1), line_no);
    const long long i =
        detail::parse_int_field(sv.substr(p1 + 1, p2 - p1 - 1), line_no);
    raw.emplace_back(u, i);
  }
  if (raw.empty()) throw DataError("empty dataset: " + path);

  std::vector<long long> users, items;
  users.reserve(raw.size());
  items.reserve(raw.size());
  for (const auto& [u, i] : raw) {
    users.push_back(u);
    items.push_back(i);
  }
  auto rank_table = [](std::vector<long long>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  rank_table(users);
  rank_table(items);
  auto rank_of = [](const std::vector<long long>& v, long long x) {
    return static_cast<int>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };

  std::vector<Pair> pairs;
  pairs.reserve(raw.size());
  for (const auto& [u, i] : raw)
    pairs.emplace_back(rank_of(users, u), rank_of(items, i));
  const std::size_t before = pairs.size();
  auto data = InteractionSet::from_pairs(static_cast<int>(users.size()),
                                         static_cast<int>(items.size()),
                                         std::move(pairs));
  LoadedDataset out;
  out.duplicates_dropped = before - data.size();
  out.data = std::move(data);
  out.ids.user_original = std::move(users);
  out.ids.item_original = std::move(items);
  return out;
}

/// Reads a file whose ids are already internal (produced by this library).
/// Declared dimensions may be passed to keep several files in one id space;
/// otherwise max id + 1 is used.
inline InteractionSet load_internal(const std::string& path, int n_users = -1,
                                    int n_items = -1,
                                    Format format = Format::tsv) {
  auto loaded = load_interactions(path, format);
  // The remap sorts original ids ascending, so internal ids of an
  // internal-id file map back to themselves; only the bounds can differ.
  int max_u = 0, max_i = 0;
  std::vector<Pair> pairs;
  pairs.reserve(loaded.data.size());
  for (const auto& p : loaded.data.pairs()) {
    const int u = static_cast<int>(loaded.ids.user_original[p.first]);
    const int i = static_cast<int>(loaded.ids.item_original[p.second]);
    if (u < 0 || i < 0) throw ParseError(path + ": negative internal id");
    max_u = std::max(max_u, u);
    max_i = std::max(max_i, i);
    pairs.emplace_back(u, i);
  }
  return InteractionSet::from_pairs(n_users < 0 ? max_u + 1 : n_users,
                                    n_items < 0 ? max_i + 1 : n_items,
                                    std::move(pairs));
}

inline void save_interactions(const InteractionSet& data,
                              const std::string& path,
                              const std::string& header_comment = "") {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  for (const auto& [u, i] : data.pairs()) out << u << '\t' << i << '\n';
  if (!out) throw Error("write failed: " + path);
}

inline void save_id_map(const IdMap& ids, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t k = 0; k < ids.user_original.size(); ++k)
    out << ids.user_original[k] << '\t' << k << "\tuser\n";
  for (std::size_t k = 0; k < ids.item_original.size(); ++k)
    out << ids.item_original[k] << '\t' << k << "\titem\n";
}

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

enum class SplitMode { per_user, global };

namespace detail {

// Integer apportionment of `total` into three parts, each within 1 of the
// exact fractional share (largest-remainder rule, train > val > test on ties).
inline std::array<int, 3> apportion(int total, const SplitFractions& f) {
  const double quota[3] = {f.train * total, f.val * total, f.test * total};
  std::array<int, 3> out{};
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    out[k] = static_cast<int>(quota[k]);
    assigned += out[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return quota[a] - out[a] > quota[b] - out[b];
  });
  for (int r = 0; r < total - assigned; ++r) out[order[r % 3]]++;
  return out;
}

}  // namespace detail

inline std::vector<Pair> row_copy(const InteractionSet& data, int u) {
  const auto r = data.row(u);
  return {r.begin(), r.end()};
}

/// Deterministic 3-way split. Per-user mode stratifies within each user's
/// interactions; users with fewer than 3 interactions keep everything in
/// train. Global mode shuffles the full pair list.
inline DatasetSplit split_dataset(const InteractionSet& data,
                                  const SplitFractions& fractions,
                                  std::uint64_t seed,
                                  SplitMode mode = SplitMode::per_user) {
  if (fractions.train <= 0 || fractions.val <= 0 || fractions.test <= 0)
    throw ConfigError("split fractions must be positive");
  if (std::abs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");

  std::vector<Pair> tr, va, te;
  Rng rng(derive_seed(seed, 51));

  if (mode == SplitMode::global) {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    rng.shuffle(idx);
    const auto counts = detail::apportion(static_cast<int>(data.size()), fractions);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& p = data.pairs()[idx[k]];
      if (k < static_cast<std::size_t>(counts[0]))
        tr.push_back(p);
      else if (k < static_cast<std::size_t>(counts[0] + counts[1]))
        va.push_back(p);
      else
        te.push_back(p);
    }
  } else {
    for (int u = 0; u < data.n_users(); ++u) {
      const auto r = row_copy(data, u);
      if (r.size() < 3) {
        tr.insert(tr.end(), r.begin(), r.end());
        continue;
      }
      std::vector<Pair> shuffled = r;
      rng.shuffle(shuffled);
      const auto counts = detail::apportion(static_cast<int>(r.size()), fractions);
      for (std::size_t k = 0; k < shuffled.size(); ++k) {
        if (k < static_cast<std::size_t>(counts[0]))
          tr.push_back(shuffled[k]);
        else if (k < static_cast<std::size_t>(counts[0] + counts[1]))
          va.push_back(shuffled[k]);
        else
          te.push_back(shuffled[k]);
      }
    }
  }

  DatasetSplit out;
  out.train = InteractionSet::from_pairs(data.n_users(), data.n_items(), std::move(tr));
  out.validation = InteractionSet::from_pairs(data.n_users(), data.n_items(), std::move(va));
  out.test = InteractionSet::from_pairs(data.n_users(), data.n_items(), std::move(te));
  return out;
}

/// Partition of active users by training degree. Boundaries are strict on
/// the head side: degree == upper stays in torso, degree == lower in tail.
inline UserGroupPartition group_users(const InteractionSet& train,
                                      int lower = 10, int upper = 100) {
  if (lower < 0 || lower >= upper)
    throw ConfigError("group thresholds require 0 <= lower < upper");
  UserGroupPartition out;
  out.lower = lower;
  out.upper = upper;
  for (int u = 0; u < train.n_users(); ++u) {
    const int d = train.degree(u);
    if (d == 0) continue;
    if (d > upper)
      out.head.push_back(u);
    else if (d > lower)
      out.torso.push_back(u);
    else
      out.tail.push_back(u);
  }
  return out;
}

}  // namespace dconrec
