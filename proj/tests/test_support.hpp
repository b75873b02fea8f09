#pragma once

// Shared generators for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "nkgad/matrix.hpp"
#include "nkgad/rng.hpp"

namespace nkgad::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline Matrix random_symmetric(std::size_t n, Rng& rng) {
  Matrix m = random_matrix(n, n, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

/// Erdos-Renyi style undirected edge list without self-loops.
inline std::vector<std::pair<std::size_t, std::size_t>> random_edges(std::size_t n, double p,
                                                                     Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  return edges;
}

// -- loop oracles ------------------------------------------------------------
// Deliberately naive index loops, independent of the library's kernels.

inline Matrix loop_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

/// relu(x w1 + b1) w2 + b2.
inline Matrix loop_mlp2(const Matrix& x, const Matrix& w1, const Matrix& b1, const Matrix& w2,
                        const Matrix& b2) {
  Matrix hidden = loop_matmul(x, w1);
  for (std::size_t i = 0; i < hidden.rows(); ++i)
    for (std::size_t j = 0; j < hidden.cols(); ++j) hidden(i, j) = std::max(0.0, hidden(i, j) + b1(0, j));
  Matrix out = loop_matmul(hidden, w2);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b2(0, j);
  return out;
}

/// Attention coefficients scored pair by pair: e_ij = LeakyReLU(a . [W h_i || W h_j])
/// normalized over the neighborhood of i (graph neighbors plus i itself).
inline Matrix loop_attention(const Matrix& h, const Matrix& w, const Matrix& a,
                             const std::vector<std::set<std::size_t>>& hood) {
  const std::size_t n = h.rows(), out = w.cols();
  const Matrix m = loop_matmul(h, w);
  Matrix alpha(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> score(n, 0.0);
    double top = -1e300;
    for (std::size_t j : hood[i]) {
      double e = 0.0;
      for (std::size_t k = 0; k < out; ++k) e += a(k, 0) * m(i, k) + a(out + k, 0) * m(j, k);
      score[j] = e > 0 ? e : 0.2 * e;
      top = std::max(top, score[j]);
    }
    double total = 0.0;
    for (std::size_t j : hood[i]) total += std::exp(score[j] - top);
    for (std::size_t j : hood[i]) alpha(i, j) = std::exp(score[j] - top) / total;
  }
  return alpha;
}

/// Neighborhoods including self, as used by the attention layers.
template <class G>
std::vector<std::set<std::size_t>> closed_neighborhoods(const G& g) {
  std::vector<std::set<std::size_t>> hood(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    hood[i].insert(i);
    for (std::size_t j : g.neighbors(i)) hood[i].insert(j);
  }
  return hood;
}

/// Mann-Whitney by enumerating every (positive, negative) pair.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  return wins / pairs;
}

}  // namespace nkgad::testing
