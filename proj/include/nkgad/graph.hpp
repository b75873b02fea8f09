#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nkgad/autodiff.hpp"
#include "nkgad/linalg.hpp"
#include "nkgad/matrix.hpp"

namespace nkgad {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Undirected attributed graph. Edges are stored once as (u, v) with u < v,
/// sorted; self-loops are rejected and duplicates collapse. Immutable.
class Graph {
 public:
  Graph() = default;
  Graph(Matrix features, const EdgeList& edges,
        std::optional<std::vector<std::uint8_t>> labels = std::nullopt);

  std::size_t node_count() const { return features_.rows(); }
  std::size_t dim() const { return features_.cols(); }
  std::size_t edge_count() const { return edges_.size(); }
  const EdgeList& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  bool has_labels() const { return labels_.has_value(); }
  /// Throws ConfigError when the graph is unlabeled.
  const std::vector<std::uint8_t>& labels() const;

  std::span<const std::size_t> neighbors(std::size_t node) const;
  std::size_t degree(std::size_t node) const { return neighbors(node).size(); }
  bool has_edge(std::size_t u, std::size_t v) const;

  /// Dense symmetric 0/1 adjacency with zero diagonal.
  Matrix adjacency() const;

  /// Directed view used by gather/segment reductions: for every node i in
  /// ascending order and each neighbor j ascending, one (i -> j) entry.
  std::span<const std::size_t> arc_sources() const { return arc_src_; }
  std::span<const std::size_t> arc_targets() const { return arc_dst_; }

  Graph with_features(Matrix features) const;
  Graph with_edges(const EdgeList& edges) const;
  Graph with_labels(std::vector<std::uint8_t> labels) const;

 private:
  Matrix features_;
  EdgeList edges_;
  std::optional<std::vector<std::uint8_t>> labels_;
  std::vector<std::size_t> offsets_;  // CSR over arc_dst_
  std::vector<std::size_t> arc_src_;
  std::vector<std::size_t> arc_dst_;
};

// -- GraphBundle directory I/O ---------------------------------------------

/// Reads `edges.tsv`, `features.tsv` and optional `labels.tsv` from `dir`.
Graph load_graph(const std::filesystem::path& dir);
void save_graph(const Graph& g, const std::filesystem::path& dir);

// -- spectral operators -----------------------------------------------------

/// D^{-1/2} (D - A) D^{-1/2}; degree-0 nodes get an all-zero row/column.
Matrix normalized_laplacian(const Graph& g);

struct FilterOperators {
  Matrix low;   // 2I - L
  Matrix high;  // L
};
FilterOperators filter_operators(const Graph& g);

/// D~^{-1/2} (A + I) D~^{-1/2}, the self-loop GCN propagation matrix.
Matrix gcn_propagation(const Graph& g);

// -- neighbor statistics ----------------------------------------------------

struct NeighborStats {
  Matrix mean;               // n x d
  Matrix std;                // n x d
  std::vector<Matrix> cov;   // n of d x d
  std::vector<char> valid_mean;  // degree >= 1
  std::vector<char> valid_cov;   // degree >= 2
};

/// Per-node mean, sample std and sample covariance of neighbor rows of `h0`.
NeighborStats neighbor_stats(const Graph& g, const Matrix& h0);

std::vector<char> mean_validity(const Graph& g);
std::vector<char> cov_validity(const Graph& g);

/// Differentiable building blocks shared with the model.
namespace graph_ops {

/// n x 1 column with 1/deg(i) (0 for isolated nodes).
Matrix inverse_degree(const Graph& g);
/// n x 1 column with 1/(deg(i) - 1) (0 when deg(i) <= 1).
Matrix inverse_degree_minus_one(const Graph& g);

/// Mean of neighbor rows.
ad::Var neighbor_mean(const Graph& g, ad::Var h);

struct CenteredMoments {
  ad::Var variance;    // n x d, diagonal of `covariance`
  ad::Var covariance;  // n x d^2, row i = vec(Sigma_i)
};
/// Sample moments of neighbor rows of `h` taken about the per-node `center`:
/// (1/(k-1)) * sum_j (h_j - c_i)(h_j - c_i)^T, zero when k <= 1.
CenteredMoments centered_moments(const Graph& g, ad::Var h, ad::Var center);

/// Stacks d x d matrices as rows of an n x d^2 matrix, and back.
Matrix flatten_rows(std::span<const Matrix> mats);
std::vector<Matrix> unflatten_rows(const Matrix& flat, std::size_t d);

}  // namespace graph_ops

// -- diagnostics -------------------------------------------------------------

struct Bin {
  double low = 0.0;
  double high = 0.0;
  double value = 0.0;
};

struct BinnedSeries {
  std::string group;
  std::vector<Bin> bins;
};

struct SpectralEnergyReport {
  std::vector<double> eigenvalues;  // ascending
  std::vector<double> energy;       // per eigenvalue, sums to 1
  BinnedSeries binned;
};

/// energy_k = (u_k^T x)^2 / ||x||^2, binned over [0, 2] with `bin_width`.
SpectralEnergyReport spectral_energy(const Graph& g, std::span<const double> signal,
                                     double bin_width = 0.25);
/// Same, reusing a precomputed eigendecomposition of the Laplacian.
SpectralEnergyReport spectral_energy(const SymmetricEigen& laplacian_eigen,
                                     std::span<const double> signal, double bin_width = 0.25);
/// Runs spectral_energy on every nonzero feature column and averages the
/// per-eigenvalue (hence binned) distributions.
SpectralEnergyReport feature_spectral_energy(const Graph& g, double bin_width = 0.25,
                                             const std::string& group = "graph");

/// Per-edge cosine similarity of feature rows, bucketed over [-1, 1]. With
/// labels, one series per pair type (anomalous-normal, normal-normal,
/// anomalous-anomalous); otherwise a single "all" series.
std::vector<BinnedSeries> similarity_histogram(const Graph& g, std::size_t bins);

/// Keeps only edges whose endpoints share a label.
Graph drop_anomalous_edges(const Graph& g);

/// `# group: <name>` header, then `low<TAB>high<TAB>value` rows per series.
void write_binned_tsv(std::ostream& out, std::span<const BinnedSeries> series);

/// Shortest decimal string that round-trips to `v`.
std::string format_real(double v);

}  // namespace nkgad
