#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sonata/errors.hpp"
#include "sonata/rng.hpp"

namespace sonata {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using Arc = std::pair<int, int>;

// Arcs are (from, to). Undirected graphs store both orientations of every edge.
struct Topology {
  int m = 0;
  std::vector<Arc> edges;
  bool directed = false;

  std::vector<std::vector<int>> out_neighbors() const {
    std::vector<std::vector<int>> adj(m);
    for (auto [i, j] : edges) adj[i].push_back(j);
    return adj;
  }
  std::vector<std::vector<int>> in_neighbors() const {
    std::vector<std::vector<int>> adj(m);
    for (auto [i, j] : edges) adj[j].push_back(i);
    return adj;
  }
  bool has_edge(int i, int j) const {
    return std::binary_search(edges.begin(), edges.end(), Arc{i, j});
  }
  int out_degree(int i) const {
    auto lo = std::lower_bound(edges.begin(), edges.end(), Arc{i, 0});
    auto hi = std::lower_bound(edges.begin(), edges.end(), Arc{i + 1, 0});
    return static_cast<int>(hi - lo);
  }
  // Number of undirected edges (arcs for digraphs).
  std::size_t edge_count() const { return directed ? edges.size() : edges.size() / 2; }
};

// Validates indices, rejects self loops and duplicates, symmetrizes undirected input
// and sorts the arc list.
inline Topology make_topology(int m, std::vector<Arc> arcs, bool directed) {
  if (m < 1) throw ConfigError("topology needs at least one node");
  for (auto [i, j] : arcs) {
    if (i < 0 || j < 0 || i >= m || j >= m)
      throw ConfigError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                        ") has a node index outside [0, m)");
    if (i == j) throw ConfigError("self loops are implicit and must not be listed");
  }
  if (!directed) {
    const std::size_t n = arcs.size();
    for (std::size_t k = 0; k < n; ++k) arcs.emplace_back(arcs[k].second, arcs[k].first);
  }
  std::sort(arcs.begin(), arcs.end());
  arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());
  return Topology{m, std::move(arcs), directed};
}

namespace detail {

inline std::vector<char> reachable(const std::vector<std::vector<int>>& adj, int src) {
  std::vector<char> seen(adj.size(), 0);
  std::queue<int> q;
  q.push(src);
  seen[src] = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        q.push(v);
      }
  }
  return seen;
}

inline bool all_set(const std::vector<char>& v) {
  return std::all_of(v.begin(), v.end(), [](char c) { return c != 0; });
}

}  // namespace detail

// Strong connectivity via forward and reverse reachability from node 0
// (the two-pass Kosaraju check specialised to a single component query).
inline bool is_strongly_connected(const Topology& g) {
  if (g.m <= 1) return true;
  if (!detail::all_set(detail::reachable(g.out_neighbors(), 0))) return false;
  return detail::all_set(detail::reachable(g.in_neighbors(), 0));
}

inline bool is_connected(const Topology& g) { return is_strongly_connected(g); }

enum class TopologyKind { erdos_renyi, star, path, cycle, complete, custom };

inline std::string to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::erdos_renyi: return "erdos_renyi";
    case TopologyKind::star: return "star";
    case TopologyKind::path: return "path";
    case TopologyKind::cycle: return "cycle";
    case TopologyKind::complete: return "complete";
    case TopologyKind::custom: return "custom";
  }
  return "unknown";
}

inline TopologyKind topology_kind_from_string(const std::string& s) {
  for (auto k : {TopologyKind::erdos_renyi, TopologyKind::star, TopologyKind::path,
                 TopologyKind::cycle, TopologyKind::complete, TopologyKind::custom})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown topology kind '" + s + "'");
}

inline constexpr int kErdosRenyiRetries = 100;

// `p` is only read for erdos_renyi; `custom_edges` only for custom.
inline Topology generate_topology(TopologyKind kind, int m, std::uint64_t seed, double p = 0.5,
                                  const std::vector<Arc>& custom_edges = {}) {
  if (m < 2) throw ConfigError("topology needs m >= 2");
  std::vector<Arc> e;
  switch (kind) {
    case TopologyKind::star:
      for (int j = 1; j < m; ++j) e.emplace_back(0, j);
      break;
    case TopologyKind::path:
      for (int j = 0; j + 1 < m; ++j) e.emplace_back(j, j + 1);
      break;
    case TopologyKind::cycle:
      for (int j = 0; j + 1 < m; ++j) e.emplace_back(j, j + 1);
      if (m > 2) e.emplace_back(m - 1, 0);
      break;
    case TopologyKind::complete:
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) e.emplace_back(i, j);
      break;
    case TopologyKind::custom: {
      auto g = make_topology(m, custom_edges, false);
      if (!is_connected(g)) throw ConnectivityError("custom topology is not connected");
      return g;
    }
    case TopologyKind::erdos_renyi: {
      if (!(p > 0.0 && p <= 1.0)) throw ConfigError("erdos_renyi needs 0 < p <= 1");
      for (int attempt = 0; attempt < kErdosRenyiRetries; ++attempt) {
        auto rng = make_rng(seed, Stream::network, static_cast<std::uint64_t>(attempt));
        std::bernoulli_distribution coin(p);
        e.clear();
        for (int i = 0; i < m; ++i)
          for (int j = i + 1; j < m; ++j)
            if (coin(rng)) e.emplace_back(i, j);
        auto g = make_topology(m, e, false);
        if (is_connected(g)) return g;
      }
      throw ConnectivityError("erdos_renyi graph not connected after " +
                              std::to_string(kErdosRenyiRetries) + " draws");
    }
  }
  return make_topology(m, e, false);
}

inline Topology directed_ring(int m) {
  std::vector<Arc> e;
  for (int j = 0; j < m; ++j) e.emplace_back(j, (j + 1) % m);
  return make_topology(m, e, true);
}

struct MixingMatrix {
  Matrix W;
  double rho = 0.0;
  int size() const { return static_cast<int>(W.rows()); }
};

// Largest singular value of W - (1/m) 11^T.
inline double spectral_rho(const Matrix& W) {
  const auto m = W.rows();
  Matrix D = W - Matrix::Constant(m, m, 1.0 / static_cast<double>(m));
  Eigen::JacobiSVD<Matrix> svd(D);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

inline MixingMatrix metropolis_weights(const Topology& g) {
  if (g.directed) throw ConfigError("Metropolis weights need an undirected topology");
  if (!is_connected(g)) throw ConnectivityError("Metropolis weights need a connected topology");
  const int m = g.m;
  Matrix W = Matrix::Zero(m, m);
  std::vector<int> deg(m);
  for (int i = 0; i < m; ++i) deg[i] = g.out_degree(i);
  for (auto [i, j] : g.edges) W(i, j) = 1.0 / (1.0 + std::max(deg[i], deg[j]));
  for (int i = 0; i < m; ++i) {
    double off = 0.0;
    for (int j = 0; j < m; ++j)
      if (j != i) off += W(i, j);
    W(i, i) = 1.0 - off;
  }
  return {W, spectral_rho(W)};
}

// Mixing matrix equivalent to master/worker broadcast: every entry is 1/m.
inline MixingMatrix star_master_matrix(int m) {
  if (m < 2) throw ConfigError("star network needs m >= 2");
  return {Matrix::Constant(m, m, 1.0 / m), 0.0};
}

inline MixingMatrix make_mixing_matrix(Matrix W) {
  double rho = spectral_rho(W);
  return {std::move(W), rho};
}

struct MixingCheck {
  double row_dev = 0, col_dev = 0, min_entry = 0;
  bool sparsity_ok = true;
  bool ok(double tol = 1e-12) const {
    return row_dev <= tol && col_dev <= tol && min_entry >= -tol && sparsity_ok;
  }
};

inline MixingCheck check_mixing(const Matrix& W, const Topology* g = nullptr) {
  MixingCheck c;
  c.row_dev = (W.rowwise().sum().array() - 1.0).abs().maxCoeff();
  c.col_dev = (W.colwise().sum().array() - 1.0).abs().maxCoeff();
  c.min_entry = W.minCoeff();
  if (g) {
    for (int i = 0; i < W.rows(); ++i)
      for (int j = 0; j < W.cols(); ++j) {
        if (i == j) {
          if (!(W(i, i) > 0)) c.sparsity_ok = false;
        } else if ((W(i, j) != 0.0) != g->has_edge(i, j)) {
          c.sparsity_ok = false;
        }
      }
  }
  return c;
}

// Chebyshev-accelerated mixing. The degree-K polynomial is T_K(x/rho)/T_K(1/rho),
// i.e. the Chebyshev polynomial on the symmetric interval [-rho, rho] that holds
// the non-consensus spectrum of a symmetric W, normalised so P_K(1) = 1. Its
// sup-norm on that interval is 1/T_K(1/rho) = 2c^K/(1+c^{2K}). The ratio form of
// the three-term recurrence avoids overflow of T_K(1/rho) for large K.
inline Matrix chebyshev_mix(const MixingMatrix& W, const Matrix& V, int K) {
  if (K < 1) throw ConfigError("chebyshev_mix needs K >= 1");
  Matrix cur = W.W * V;
  if (K == 1 || W.rho <= 0.0) return cur;
  if (W.rho >= 1.0) throw DomainError("chebyshev_mix needs rho < 1");
  const double rho = W.rho;
  Matrix prev = V;
  double r = rho;  // T_{k-1}(1/rho) / T_k(1/rho)
  for (int k = 1; k < K; ++k) {
    const double r_next = 1.0 / (2.0 / rho - r);
    Matrix next = (2.0 / rho * r_next) * (W.W * cur) - (r * r_next) * prev;
    prev = std::move(cur);
    cur = std::move(next);
    r = r_next;
  }
  return cur;
}

inline double chebyshev_contraction(double rho, int K) {
  if (rho <= 0.0) return 0.0;
  const double c = (1.0 - std::sqrt(1.0 - rho * rho)) / rho;
  const double cK = std::pow(c, K);
  return 2.0 * cK / (1.0 + cK * cK);
}

// K rounds of plain mixing (W^K V) or one degree-K Chebyshev polynomial.
inline Matrix mix_rounds(const MixingMatrix& W, const Matrix& V, int K, bool chebyshev) {
  if (chebyshev) return chebyshev_mix(W, V, K);
  Matrix out = V;
  for (int k = 0; k < K; ++k) out = W.W * out;
  return out;
}

inline double effective_rho(double rho, int K, bool chebyshev) {
  return chebyshev ? chebyshev_contraction(rho, K) : std::pow(rho, K);
}

// ---------------------------------------------------------------------------
// Time-varying directed networks
// ---------------------------------------------------------------------------

enum class TvKind { alternating_subgraphs, random_spanning, static_as_tv, periodic };

inline std::string to_string(TvKind k) {
  switch (k) {
    case TvKind::alternating_subgraphs: return "alternating_subgraphs";
    case TvKind::random_spanning: return "random_spanning";
    case TvKind::static_as_tv: return "static_as_tv";
    case TvKind::periodic: return "periodic";
  }
  return "unknown";
}

inline TvKind tv_kind_from_string(const std::string& s) {
  for (auto k : {TvKind::alternating_subgraphs, TvKind::random_spanning, TvKind::static_as_tv,
                 TvKind::periodic})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown time-varying network kind '" + s + "'");
}

struct TvConstants {
  double phi_lb = 0, phi_ub = 0;
  double c_ell_tilde = 0;
  double rho_B = 1, one_minus_rho_B = 0;
  double c0 = 0;
};

// Worst-case network constants from (m, B, c_ell). Quantities of the form
// c^{(m-1)B} underflow quickly, so 1 - rho_B is kept separately via expm1/log1p
// and c0 is evaluated as 2m(1+t)/(1-t) with t = c_tilde^{(m-1)B}; this is the
// magnitude of 2m(1+t^{-1})/(1-t^{-1}), whose sign is negative for t < 1.
inline TvConstants tv_constants(int m, int B, double c_ell) {
  TvConstants k;
  const double n = static_cast<double>(m - 1) * B;
  const double log_c = std::log(c_ell);
  k.phi_lb = std::exp(2.0 * n * log_c);
  k.phi_ub = m - k.phi_lb;
  const double log_ct = (2.0 * n + 1.0) * log_c - std::log(static_cast<double>(m));
  k.c_ell_tilde = std::exp(log_ct);
  const double t = std::exp(n * log_ct);
  k.one_minus_rho_B = n > 0 ? -std::expm1(std::log1p(-t) / n) : 1.0;
  k.rho_B = 1.0 - k.one_minus_rho_B;
  k.c0 = 2.0 * m * (1.0 + t) / (1.0 - t);
  return k;
}

struct TvFrame {
  Topology graph;  // arc (j, i) means j sends to i
  Matrix C;        // column stochastic, c_ij > 0 iff arc (j, i) or i == j
};

// Column-stochastic weights: sender j splits its mass uniformly over its
// out-neighbours and itself, never below c_ell.
inline Matrix uniform_column_weights(const Topology& g, double c_ell) {
  const int m = g.m;
  Matrix C = Matrix::Zero(m, m);
  auto out = g.out_neighbors();
  for (int j = 0; j < m; ++j) {
    const double w = 1.0 / (static_cast<double>(out[j].size()) + 1.0);
    if (w < c_ell)
      throw ConfigError("c_ell exceeds the uniform split weight of node " + std::to_string(j));
    C(j, j) = w;
    for (int i : out[j]) C(i, j) = w;
  }
  return C;
}

class TimeVaryingNetwork {
 public:
  TimeVaryingNetwork(TvKind kind, Topology base, int B, double c_ell, std::uint64_t seed,
                     std::vector<Topology> frames = {})
      : kind_(kind), base_(std::move(base)), B_(B), c_ell_(c_ell), seed_(seed),
        frames_(std::move(frames)) {
    k_ = tv_constants(m(), B_, c_ell_);
  }

  int m() const { return kind_ == TvKind::periodic ? frames_.front().m : base_.m; }
  int B() const { return B_; }
  double c_ell() const { return c_ell_; }
  TvKind kind() const { return kind_; }
  const Topology& base() const { return base_; }
  const TvConstants& constants() const { return k_; }

  TvFrame frame(long nu) const {
    switch (kind_) {
      case TvKind::static_as_tv: {
        auto W = metropolis_weights(base_);
        Topology g = base_;
        g.directed = true;
        return {std::move(g), std::move(W.W)};
      }
      case TvKind::periodic: {
        const auto& g = frames_[static_cast<std::size_t>(nu % static_cast<long>(frames_.size()))];
        return {g, uniform_column_weights(g, c_ell_)};
      }
      case TvKind::alternating_subgraphs: {
        auto g = make_topology(base_.m, alternating_group(static_cast<int>(nu % B_)), true);
        return {g, uniform_column_weights(g, c_ell_)};
      }
      case TvKind::random_spanning: {
        auto g = random_spanning_frame(nu);
        return {g, uniform_column_weights(g, c_ell_)};
      }
    }
    throw ConfigError("unknown time-varying network kind");
  }

 private:
  std::vector<Arc> alternating_group(int group) const {
    std::vector<Arc> arcs = base_.edges;
    auto rng = make_rng(seed_, Stream::network, 0xa17e);
    std::shuffle(arcs.begin(), arcs.end(), rng);
    std::vector<Arc> out;
    for (std::size_t k = 0; k < arcs.size(); ++k)
      if (static_cast<int>(k % static_cast<std::size_t>(B_)) == group) out.push_back(arcs[k]);
    return out;
  }

  // A random spanning tree of the base graph (both orientations) plus every
  // remaining base arc with probability 1/2; each frame is strongly connected.
  Topology random_spanning_frame(long nu) const {
    auto rng = make_rng(seed_, Stream::network, 0x5000000ULL + static_cast<std::uint64_t>(nu));
    std::vector<Arc> arcs = base_.edges;
    std::shuffle(arcs.begin(), arcs.end(), rng);
    std::vector<int> parent(base_.m);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::bernoulli_distribution coin(0.5);
    std::vector<Arc> out;
    for (auto [i, j] : arcs) {
      int a = find(i), b = find(j);
      if (a != b) {
        parent[a] = b;
        out.emplace_back(i, j);
        out.emplace_back(j, i);
      } else if (coin(rng)) {
        out.emplace_back(i, j);
      }
    }
    return make_topology(base_.m, out, true);
  }

  TvKind kind_;
  Topology base_;
  int B_;
  double c_ell_;
  std::uint64_t seed_;
  std::vector<Topology> frames_;
  TvConstants k_;
};

inline bool check_B_strong_connectivity(const std::vector<Topology>& frames, int B) {
  if (B < 1 || frames.size() < static_cast<std::size_t>(B)) return false;
  const int m = frames.front().m;
  for (std::size_t s = 0; s + B <= frames.size(); ++s) {
    std::vector<Arc> arcs;
    for (int k = 0; k < B; ++k) arcs.insert(arcs.end(), frames[s + k].edges.begin(), frames[s + k].edges.end());
    if (!is_strongly_connected(make_topology(m, arcs, true))) return false;
  }
  return true;
}

inline bool check_B_strong_connectivity(const TimeVaryingNetwork& net, int horizon) {
  if (horizon < net.B()) throw ConfigError("horizon must be at least B");
  std::vector<Topology> frames;
  frames.reserve(horizon);
  for (int nu = 0; nu < horizon; ++nu) frames.push_back(net.frame(nu).graph);
  return check_B_strong_connectivity(frames, net.B());
}

// Frames repeating with the given period.
inline TimeVaryingNetwork make_periodic_network(std::vector<Topology> frames, int B, double c_ell) {
  if (frames.empty()) throw ConfigError("periodic network needs at least one frame");
  Topology base = frames.front();
  return TimeVaryingNetwork(TvKind::periodic, std::move(base), B, c_ell, 0, std::move(frames));
}

inline TimeVaryingNetwork generate_tv_network(TvKind kind, const Topology& base, int B, double c_ell,
                                              std::uint64_t seed, int check_horizon = 0) {
  if (B < 1) throw ConfigError("B must be >= 1");
  if (!(c_ell > 0.0 && c_ell <= 1.0 / base.m)) throw ConfigError("need 0 < c_ell <= 1/m");
  if (kind == TvKind::periodic) throw ConfigError("use make_periodic_network for explicit frames");
  if (!is_strongly_connected(base)) throw ConnectivityError("base topology is not strongly connected");
  TimeVaryingNetwork net(kind, base, B, c_ell, seed);
  const int horizon = check_horizon > 0 ? check_horizon : 4 * B;
  if (!check_B_strong_connectivity(net, std::max(horizon, B)))
    throw ConnectivityError("generated sequence is not B-strongly connected");
  return net;
}

// Diagnostic only: observed per-frame decay of push-sum disagreement over the
// first `horizon` frames, ((max_i |z_i/phi_i - avg|) at horizon / at 0)^(1/horizon).
inline double empirical_tv_contraction(const TimeVaryingNetwork& net, int horizon, std::uint64_t seed) {
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  const int m = net.m();
  auto rng = make_rng(seed, Stream::network, 0xe5);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(m);
  for (int i = 0; i < m; ++i) z(i) = normal(rng);
  Vector phi = Vector::Ones(m);
  const double avg = z.sum() / m;
  auto spread = [&] { return (z.cwiseQuotient(phi).array() - avg).abs().maxCoeff(); };
  const double r0 = spread();
  for (int nu = 0; nu < horizon; ++nu) {
    const Matrix C = net.frame(nu).C;
    z = C * z;
    phi = C * phi;
  }
  return std::pow(spread() / r0, 1.0 / horizon);
}

}  // namespace sonata
