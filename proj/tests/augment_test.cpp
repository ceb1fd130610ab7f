#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <set>

#include "dconrec/augment.hpp"
#include "test_support.hpp"

using namespace dconrec;
namespace fs = std::filesystem;

namespace {

// d=1 model whose item factors are the desired scores (user factor 1).
EmbeddingModel score_model(const std::vector<double>& item_scores) {
  TrainConfig c;
  c.embedding_dim = 1;
  auto m = init_model(1, static_cast<int>(item_scores.size()), c);
  m.user_factors(0, 0) = 1.0;
  for (std::size_t i = 0; i < item_scores.size(); ++i)
    m.item_factors(static_cast<int>(i), 0) = item_scores[i];
  return m;
}

}  // namespace

TEST_CASE("topk ranks unexposed items by score") {
  const auto train = InteractionSet::from_pairs(1, 4, {{0, 0}});
  const auto proxy = score_model({100.0, 0.9, 0.5, 0.1});
  CHECK(topk_unexposed(proxy, train, 0, 2) == std::vector<int>{1, 2});
  CHECK(topk_unexposed(proxy, train, 0, 0).empty());
  CHECK(topk_unexposed(proxy, train, 0, 99) == std::vector<int>{1, 2, 3});
}

TEST_CASE("topk matches an exhaustive sort-and-filter oracle") {
  Rng rng(8);
  for (int inst = 0; inst < 10; ++inst) {
    std::vector<double> scores(20);
    for (auto& s : scores) s = rng.normal(0, 1);
    std::vector<Pair> observed;
    for (int i = 0; i < 20; ++i)
      if (rng.bernoulli(0.3)) observed.emplace_back(0, i);
    const auto train = InteractionSet::from_pairs(1, 20, observed);
    const auto proxy = score_model(scores);
    const int k = 1 + rng.uniform_int(6);

    std::vector<int> oracle;
    for (int i = 0; i < 20; ++i)
      if (!train.contains(0, i)) oracle.push_back(i);
    std::sort(oracle.begin(), oracle.end(), [&](int a, int b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    oracle.resize(std::min<std::size_t>(k, oracle.size()));
    CHECK(topk_unexposed(proxy, train, 0, k) == oracle);
  }
}

TEST_CASE("topk is invariant under order-preserving score transforms") {
  Rng rng(15);
  std::vector<double> scores(12);
  for (auto& s : scores) s = rng.normal(0, 1);
  const auto train = InteractionSet::from_pairs(1, 12, {{0, 2}, {0, 7}});
  const auto base = topk_unexposed(score_model(scores), train, 0, 4);
  for (const auto f : {+[](double x) { return x * x * x; },
                       +[](double x) { return 2.0 * x + 5.0; },
                       +[](double x) { return std::atan(x); }}) {
    std::vector<double> transformed;
    for (double s : scores) transformed.push_back(f(s));
    CHECK(topk_unexposed(score_model(transformed), train, 0, 4) == base);
  }
}

TEST_CASE("zero ratio yields a pool equal to train") {
  const auto planted = testsupport::make_planted(6, 8, 4, 1);
  const auto proxy = train_proxy(planted.interactions, InteractionSet{}, Arch::mf,
                                 [] {
                                   TrainConfig c;
                                   c.embedding_dim = 4;
                                   c.max_epochs = 2;
                                   c.batch_size = 16;
                                   return c;
                                 }());
  const auto pool = build_data_pool(planted.interactions, proxy, 0.0, 3);
  CHECK(pool.pool.pairs() == planted.interactions.pairs());
  CHECK(pool.n_pseudo() == 0);
  CHECK(pool.r_ps == 0.0);
}

TEST_CASE("per-user budgets follow round(r_ps * degree)") {
  std::vector<Pair> pairs;
  for (int i = 0; i < 4; ++i) pairs.emplace_back(0, i);  // degree 4
  pairs.emplace_back(1, 0);                              // degree 1
  const auto train = InteractionSet::from_pairs(2, 12, pairs);
  TrainConfig c;
  c.embedding_dim = 2;
  c.seed = 4;
  const auto proxy = init_model(2, 12, c);
  const auto pseudo = mine_pseudo(train, proxy, 0.5, 9);
  CHECK(pseudo.pairs.degree(0) == 2);  // round(0.5*4)
  CHECK(pseudo.pairs.degree(1) == 1);  // round(0.5*1) rounds up
  for (const auto& [u, i] : pseudo.pairs.pairs()) CHECK_FALSE(train.contains(u, i));
}

TEST_CASE("fixed-K mode caps every user") {
  const auto planted = testsupport::make_planted(5, 10, 6, 2);
  TrainConfig c;
  c.embedding_dim = 2;
  const auto proxy = init_model(planted.interactions.n_users(),
                                planted.interactions.n_items(), c);
  const auto pseudo = mine_pseudo(planted.interactions, proxy, 0.9, 1, 3);
  CHECK(pseudo.per_user_k == 3);
  for (int u = 0; u < pseudo.pairs.n_users(); ++u)
    CHECK(pseudo.pairs.degree(u) <= 3);
}

TEST_CASE("pool counts are exact and collision-free") {
  const auto planted = testsupport::make_planted(10, 12, 8, 11);
  TrainConfig c;
  c.embedding_dim = 4;
  c.seed = 2;
  const auto proxy = init_model(planted.interactions.n_users(),
                                planted.interactions.n_items(), c);
  const auto pool = build_data_pool(planted.interactions, proxy, 0.4, 5);
  CHECK(pool.pool.size() == planted.interactions.size() + pool.n_pseudo());
  for (std::size_t k = 0; k < pool.pool.size(); ++k) {
    const auto& [u, i] = pool.pool.pairs()[k];
    const bool in_train = planted.interactions.contains(u, i);
    CHECK(in_train == (pool.is_pseudo[k] == 0));
  }
}

TEST_CASE("realized pseudo ratio tracks r_ps across the sweep") {
  Rng rng(31);
  std::vector<Pair> pairs;
  for (int u = 0; u < 100; ++u) {
    const int deg = 15 + rng.uniform_int(11);
    std::set<int> items;
    while (static_cast<int>(items.size()) < deg) items.insert(rng.uniform_int(200));
    for (int i : items) pairs.emplace_back(u, i);
  }
  const auto train = InteractionSet::from_pairs(100, 200, pairs);
  TrainConfig c;
  c.embedding_dim = 4;
  c.seed = 8;
  const auto proxy = init_model(100, 200, c);
  for (double r_ps = 0.1; r_ps < 0.95; r_ps += 0.1) {
    const auto pool = build_data_pool(train, proxy, r_ps, 1);
    const double realized =
        static_cast<double>(pool.n_pseudo()) / static_cast<double>(train.size());
    CHECK(std::abs(realized - r_ps) <= 0.02);
  }
}

TEST_CASE("lightgcn proxy produces a usable pool") {
  const auto planted = testsupport::make_planted(6, 8, 4, 3);
  TrainConfig c;
  c.embedding_dim = 4;
  c.max_epochs = 2;
  c.batch_size = 16;
  c.n_layers = 2;
  const auto proxy =
      train_proxy(planted.interactions, InteractionSet{}, Arch::lightgcn, c);
  CHECK(proxy.arch == Arch::lightgcn);
  const auto pool = build_data_pool(planted.interactions, proxy, 0.3, 2);
  CHECK(pool.n_pseudo() > 0);
}

TEST_CASE("pool file round-trips") {
  const auto planted = testsupport::make_planted(5, 6, 3, 13);
  TrainConfig c;
  c.embedding_dim = 2;
  const auto proxy = init_model(planted.interactions.n_users(),
                                planted.interactions.n_items(), c);
  const auto pool = build_data_pool(planted.interactions, proxy, 0.5, 7);
  const auto path = (fs::temp_directory_path() / "dconrec_test_pool.tsv").string();
  save_pool(pool, path, "test");
  const auto back = load_pool(path, pool.pool.n_users(), pool.pool.n_items());
  CHECK(back.pool.pairs() == pool.pool.pairs());
  CHECK(back.is_pseudo == pool.is_pseudo);
  CHECK(back.r_ps == Catch::Approx(pool.r_ps));
}
