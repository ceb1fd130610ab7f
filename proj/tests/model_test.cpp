#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "dconrec/model.hpp"

using namespace dconrec;
namespace fs = std::filesystem;

namespace {

EmbeddingModel hand_model(int nu, int ni, int d) {
  TrainConfig c;
  c.embedding_dim = d;
  return init_model(nu, ni, c);
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  TrainConfig c;
  c.embedding_dim = 8;
  c.seed = 42;
  const auto a = init_model(5, 7, c);
  const auto b = init_model(5, 7, c);
  CHECK(a.user_factors.data() == b.user_factors.data());
  CHECK(a.item_factors.data() == b.item_factors.data());
  c.seed = 43;
  const auto other = init_model(5, 7, c);
  CHECK(a.user_factors.data() != other.user_factors.data());
}

TEST_CASE("init matches large catalog shapes") {
  TrainConfig c;
  c.embedding_dim = 64;
  const auto m = init_model(7375, 105114, c);
  CHECK(m.user_factors.rows() == 7375);
  CHECK(m.item_factors.rows() == 105114);
  CHECK(m.dim() == 64);
}

TEST_CASE("init rejects bad configurations") {
  TrainConfig c;
  c.arch = Arch::lightgcn;
  CHECK_THROWS_AS(init_model(3, 3, c), ConfigError);
  c.arch = Arch::mf;
  CHECK_THROWS_AS(init_model(0, 3, c), ConfigError);
}

TEST_CASE("mf score is the factor inner product") {
  auto m = hand_model(2, 2, 2);
  // orthogonal unit rows
  m.user_factors(0, 0) = 1;
  m.user_factors(0, 1) = 0;
  m.item_factors(0, 0) = 0;
  m.item_factors(0, 1) = 1;
  CHECK(score(m, 0, 0) == 0.0);
  // identical unit rows
  m.item_factors(1, 0) = 1;
  m.item_factors(1, 1) = 0;
  CHECK(score(m, 0, 1) == 1.0);
  CHECK_THROWS_AS(score(m, 2, 0), ConfigError);
}

TEST_CASE("degree-one adjacency entry is exactly 1") {
  const auto train = InteractionSet::from_pairs(1, 1, {{0, 0}});
  const auto a = normalized_adjacency(train);
  REQUIRE(a.u_w.size() == 1);
  CHECK(a.u_w[0] == 1.0);
  CHECK(a.i_w[0] == 1.0);
}

TEST_CASE("lightgcn propagation matches hand arithmetic") {
  const auto train = InteractionSet::from_pairs(2, 2, {{0, 0}, {0, 1}, {1, 1}});
  TrainConfig c;
  c.arch = Arch::lightgcn;
  c.n_layers = 1;
  c.embedding_dim = 1;
  auto m = init_model(2, 2, c, &train);
  const double a = 0.3, b = -0.2, q0 = 0.5, q1 = 0.7;
  m.user_factors(0, 0) = a;
  m.user_factors(1, 0) = b;
  m.item_factors(0, 0) = q0;
  m.item_factors(1, 0) = q1;

  // degrees: u0=2, u1=1, i0=1, i1=2
  const double r2 = std::sqrt(2.0);
  const double pu0 = 0.5 * (a + q0 / r2 + q1 / 2.0);
  const double pi1 = 0.5 * (q1 + a / 2.0 + b / r2);
  CHECK(score(m, 0, 1) == Catch::Approx(pu0 * pi1).margin(1e-12));
}

TEST_CASE("zero-layer lightgcn equals mf exactly") {
  const auto train = InteractionSet::from_pairs(3, 4, {{0, 1}, {1, 2}, {2, 3}});
  TrainConfig c;
  c.arch = Arch::lightgcn;
  c.n_layers = 0;
  c.embedding_dim = 4;
  c.seed = 9;
  const auto g = init_model(3, 4, c, &train);
  c.arch = Arch::mf;
  const auto f = init_model(3, 4, c);
  for (int u = 0; u < 3; ++u)
    for (int i = 0; i < 4; ++i) CHECK(score(g, u, i) == score(f, u, i));
}

TEST_CASE("propagation keeps values finite") {
  Rng rng(4);
  std::vector<Pair> pairs;
  for (int k = 0; k < 400; ++k)
    pairs.emplace_back(rng.uniform_int(30), rng.uniform_int(30));
  const auto train = InteractionSet::from_pairs(30, 30, pairs);
  TrainConfig c;
  c.arch = Arch::lightgcn;
  c.n_layers = 3;
  c.embedding_dim = 8;
  const auto m = init_model(30, 30, c, &train);
  const auto prop = effective_embeddings(m);
  for (double v : prop.user.data()) CHECK(std::isfinite(v));
  for (double v : prop.item.data()) CHECK(std::isfinite(v));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  TrainConfig c;
  c.embedding_dim = 6;
  c.seed = 77;
  const auto m = init_model(9, 11, c);
  const auto path = (fs::temp_directory_path() / "dconrec_test_model.txt").string();
  save_model(m, path);
  const auto back = load_model(path);
  CHECK(back.arch == Arch::mf);
  CHECK(back.user_factors.data() == m.user_factors.data());
  CHECK(back.item_factors.data() == m.item_factors.data());
}

TEST_CASE("lightgcn checkpoint needs an adjacency source") {
  const auto train = InteractionSet::from_pairs(2, 2, {{0, 0}, {1, 1}});
  TrainConfig c;
  c.arch = Arch::lightgcn;
  c.n_layers = 2;
  c.embedding_dim = 3;
  const auto m = init_model(2, 2, c, &train);
  const auto path = (fs::temp_directory_path() / "dconrec_test_lg.txt").string();
  save_model(m, path);
  CHECK_THROWS_AS(load_model(path), ConfigError);
  const auto back = load_model(path, &train);
  CHECK(back.n_layers == 2);
  CHECK(back.user_factors.data() == m.user_factors.data());
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < 2; ++i) CHECK(score(back, u, i) == score(m, u, i));
}
