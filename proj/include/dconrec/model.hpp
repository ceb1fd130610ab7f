#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>
#include <vector>

#include "dconrec/errors.hpp"
#include "dconrec/interactions.hpp"
#include "dconrec/matrix.hpp"
#include "dconrec/random.hpp"

namespace dconrec {

enum class Arch { mf, lightgcn };
enum class Optimizer { sgd, adam };

inline const char* arch_name(Arch a) { return a == Arch::mf ? "mf" : "lightgcn"; }

inline Arch arch_from_name(const std::string& s) {
  if (s == "mf") return Arch::mf;
  if (s == "lightgcn") return Arch::lightgcn;
  throw ConfigError("unknown architecture: " + s);
}

struct TrainConfig {
  Arch arch = Arch::mf;
  int n_layers = 2;  // lightgcn only
  int embedding_dim = 64;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double l2_reg = 1e-4;
  int batch_size = 1024;
  int max_epochs = 200;
  int early_stop_patience = 20;
  int negatives_per_positive = 1;
  std::uint64_t seed = 0;
};

// Symmetric-normalized bipartite adjacency in CSR form, one block per
// direction. Entry weight for a training pair (u,i) is 1/sqrt(deg(u)*deg(i)).
struct BipartiteAdjacency {
  std::vector<int> u_off, u_idx;  // user -> items
  std::vector<double> u_w;
  std::vector<int> i_off, i_idx;  // item -> users
  std::vector<double> i_w;

  bool empty() const { return u_off.empty(); }
};

inline BipartiteAdjacency normalized_adjacency(const InteractionSet& train) {
  BipartiteAdjacency a;
  const int nu = train.n_users(), ni = train.n_items();
  std::vector<int> item_deg(ni, 0);
  for (const auto& [u, i] : train.pairs()) item_deg[i]++;

  a.u_off.assign(nu + 1, 0);
  a.i_off.assign(ni + 1, 0);
  for (const auto& [u, i] : train.pairs()) {
    a.u_off[u + 1]++;
    a.i_off[i + 1]++;
  }
  for (int u = 0; u < nu; ++u) a.u_off[u + 1] += a.u_off[u];
  for (int i = 0; i < ni; ++i) a.i_off[i + 1] += a.i_off[i];
  a.u_idx.resize(train.size());
  a.u_w.resize(train.size());
  a.i_idx.resize(train.size());
  a.i_w.resize(train.size());
  std::vector<int> ucur(nu, 0), icur(ni, 0);
  for (const auto& [u, i] : train.pairs()) {
    const double w = 1.0 / std::sqrt(static_cast<double>(train.degree(u)) *
                                     static_cast<double>(item_deg[i]));
    a.u_idx[a.u_off[u] + ucur[u]] = i;
    a.u_w[a.u_off[u] + ucur[u]] = w;
    ucur[u]++;
    a.i_idx[a.i_off[i] + icur[i]] = u;
    a.i_w[a.i_off[i] + icur[i]] = w;
    icur[i]++;
  }
  return a;
}

/// Latent-factor recommender. For lightgcn the stored factors are the layer-0
/// (ego) embeddings and scoring uses the layer-averaged propagation.
struct EmbeddingModel {
  Arch arch = Arch::mf;
  int n_layers = 0;
  Matrix user_factors;
  Matrix item_factors;
  BipartiteAdjacency adjacency;  // lightgcn only

  int dim() const { return user_factors.cols(); }
  int n_users() const { return user_factors.rows(); }
  int n_items() const { return item_factors.rows(); }
};

inline EmbeddingModel init_model(int n_users, int n_items,
                                 const TrainConfig& config,
                                 const InteractionSet* train_for_adjacency = nullptr) {
  if (n_users <= 0 || n_items <= 0)
    throw ConfigError("init_model requires positive user/item counts");
  if (config.embedding_dim <= 0) throw ConfigError("embedding_dim must be positive");
  if (config.arch == Arch::lightgcn && train_for_adjacency == nullptr)
    throw ConfigError("lightgcn requires a training set to build the adjacency");

  EmbeddingModel m;
  m.arch = config.arch;
  m.n_layers = config.arch == Arch::lightgcn ? config.n_layers : 0;
  m.user_factors = Matrix(n_users, config.embedding_dim);
  m.item_factors = Matrix(n_items, config.embedding_dim);
  Rng rng(derive_seed(config.seed, 7));
  for (auto& v : m.user_factors.data()) v = rng.normal(0.0, 0.1);
  for (auto& v : m.item_factors.data()) v = rng.normal(0.0, 0.1);
  if (config.arch == Arch::lightgcn)
    m.adjacency = normalized_adjacency(*train_for_adjacency);
  return m;
}

struct Propagated {
  Matrix user;
  Matrix item;
};

namespace detail {

// One application of the normalized adjacency: (u_out, i_out) = A (u_in, i_in).
inline void adjacency_apply(const BipartiteAdjacency& a, const Matrix& u_in,
                            const Matrix& i_in, Matrix& u_out, Matrix& i_out) {
  const int d = u_in.cols();
  u_out.set_zero();
  i_out.set_zero();
  for (int u = 0; u < u_in.rows(); ++u) {
    double* out = u_out.row(u);
    for (int k = a.u_off[u]; k < a.u_off[u + 1]; ++k)
      axpy(a.u_w[k], i_in.row(a.u_idx[k]), out, d);
  }
  for (int i = 0; i < i_in.rows(); ++i) {
    double* out = i_out.row(i);
    for (int k = a.i_off[i]; k < a.i_off[i + 1]; ++k)
      axpy(a.i_w[k], u_in.row(a.i_idx[k]), out, d);
  }
}

// Layer-mean propagation: (1/(L+1)) * sum_{k=0..L} A^k X. The operator is
// symmetric, so it also serves as the backward map for gradients.
inline Propagated layer_mean_propagate(const BipartiteAdjacency& a, int layers,
                                       const Matrix& u0, const Matrix& i0) {
  Propagated acc{u0, i0};
  Matrix cu = u0, ci = i0;
  Matrix nu(u0.rows(), u0.cols()), ni(i0.rows(), i0.cols());
  for (int l = 0; l < layers; ++l) {
    adjacency_apply(a, cu, ci, nu, ni);
    std::swap(cu, nu);
    std::swap(ci, ni);
    for (std::size_t k = 0; k < acc.user.data().size(); ++k)
      acc.user.data()[k] += cu.data()[k];
    for (std::size_t k = 0; k < acc.item.data().size(); ++k)
      acc.item.data()[k] += ci.data()[k];
  }
  const double inv = 1.0 / (layers + 1);
  for (auto& v : acc.user.data()) v *= inv;
  for (auto& v : acc.item.data()) v *= inv;
  return acc;
}

}  // namespace detail

/// Embeddings actually used for scoring: the factors themselves for mf, the
/// layer-averaged propagation for lightgcn.
inline Propagated effective_embeddings(const EmbeddingModel& m) {
  if (m.arch == Arch::mf || m.n_layers == 0)
    return {m.user_factors, m.item_factors};
  return detail::layer_mean_propagate(m.adjacency, m.n_layers, m.user_factors,
                                      m.item_factors);
}

inline double score(const EmbeddingModel& m, int u, int i) {
  if (u < 0 || u >= m.n_users() || i < 0 || i >= m.n_items())
    throw ConfigError("score: id out of range");
  if (m.arch == Arch::mf || m.n_layers == 0)
    return dot(m.user_factors.row(u), m.item_factors.row(i), m.dim());
  const auto prop = effective_embeddings(m);
  return dot(prop.user.row(u), prop.item.row(i), m.dim());
}

namespace detail {

inline void write_matrix(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (int r = 0; r < m.rows(); ++r) {
    const double* row = m.row(r);
    for (int c = 0; c < m.cols(); ++c) out << (c ? "\t" : "") << row[c];
    out << '\n';
  }
}

inline void read_matrix(std::istream& in, Matrix& m) {
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      if (!(in >> m(r, c))) throw ParseError("model checkpoint truncated");
}

}  // namespace detail

/// Checkpoint format: a `dconrec-model 1` magic line, a header line
/// `arch n_layers n_users n_items dim`, then the user and item factor rows as
/// 17-significant-digit decimals (round-trips doubles exactly).
inline void save_model(const EmbeddingModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "dconrec-model 1\n"
      << arch_name(m.arch) << ' ' << m.n_layers << ' ' << m.n_users() << ' '
      << m.n_items() << ' ' << m.dim() << '\n';
  detail::write_matrix(out, m.user_factors);
  detail::write_matrix(out, m.item_factors);
  if (!out) throw Error("write failed: " + path);
}

inline EmbeddingModel load_model(const std::string& path,
                                 const InteractionSet* train_for_adjacency = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "dconrec-model" || version != 1)
    throw ParseError(path + ": not a model checkpoint");
  std::string arch;
  int layers = 0, nu = 0, ni = 0, d = 0;
  in >> arch >> layers >> nu >> ni >> d;
  if (!in || nu <= 0 || ni <= 0 || d <= 0)
    throw ParseError(path + ": bad checkpoint header");
  EmbeddingModel m;
  m.arch = arch_from_name(arch);
  m.n_layers = layers;
  m.user_factors = Matrix(nu, d);
  m.item_factors = Matrix(ni, d);
  detail::read_matrix(in, m.user_factors);
  detail::read_matrix(in, m.item_factors);
  if (m.arch == Arch::lightgcn) {
    if (train_for_adjacency == nullptr)
      throw ConfigError("lightgcn checkpoint needs a training set for the adjacency");
    m.adjacency = normalized_adjacency(*train_for_adjacency);
  }
  return m;
}

}  // namespace dconrec
