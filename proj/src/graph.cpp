#include "nkgad/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "nkgad/error.hpp"

namespace nkgad {

// -- Graph -------------------------------------------------------------------

Graph::Graph(Matrix features, const EdgeList& edges, std::optional<std::vector<std::uint8_t>> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  const std::size_t n = features_.rows();
  if (labels_ && labels_->size() != n) {
    throw ShapeError("Graph: " + std::to_string(labels_->size()) + " labels for " +
                     std::to_string(n) + " nodes");
  }
  edges_.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) {
      throw ShapeError("Graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                       ") references a node outside [0, " + std::to_string(n) + ")");
    }
    if (u == v) throw ShapeError("Graph: self-loop on node " + std::to_string(u));
    edges_.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  std::vector<std::size_t> degree(n, 0);
  for (auto [u, v] : edges_) {
    ++degree[u];
    ++degree[v];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
  arc_dst_.assign(offsets_[n], 0);
  arc_src_.assign(offsets_[n], 0);
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (auto [u, v] : edges_) {
    arc_dst_[cursor[u]++] = v;
    arc_dst_[cursor[v]++] = u;
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(arc_dst_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
              arc_dst_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]));
    std::fill(arc_src_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
              arc_src_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]), i);
  }
}

const std::vector<std::uint8_t>& Graph::labels() const {
  if (!labels_) throw ConfigError("graph has no labels");
  return *labels_;
}

std::span<const std::size_t> Graph::neighbors(std::size_t node) const {
  return {arc_dst_.data() + offsets_.at(node), offsets_.at(node + 1) - offsets_[node]};
}

bool Graph::has_edge(std::size_t u, std::size_t v) const {
  const auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

Matrix Graph::adjacency() const {
  const std::size_t n = node_count();
  Matrix a(n, n);
  for (auto [u, v] : edges_) a(u, v) = a(v, u) = 1.0;
  return a;
}

Graph Graph::with_features(Matrix features) const {
  if (features.rows() != node_count()) throw ShapeError("Graph::with_features: row count differs");
  return Graph(std::move(features), edges_, labels_);
}

Graph Graph::with_edges(const EdgeList& edges) const { return Graph(features_, edges, labels_); }

Graph Graph::with_labels(std::vector<std::uint8_t> labels) const {
  return Graph(features_, edges_, std::move(labels));
}

// -- GraphBundle I/O ---------------------------------------------------------

namespace {

std::string location(const std::filesystem::path& file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line);
}

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("cannot open " + file.string());
  return in;
}

std::size_t parse_index(const std::string& tok, const std::filesystem::path& file, std::size_t line) {
  std::size_t value = 0;
  const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || end != tok.data() + tok.size()) {
    throw ParseError(location(file, line) + ": expected a node id, got '" + tok + "'");
  }
  return value;
}

double parse_real(const std::string& tok, const std::filesystem::path& file, std::size_t line) {
  double value = 0.0;
  const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || end != tok.data() + tok.size() || !std::isfinite(value)) {
    throw ParseError(location(file, line) + ": expected a finite real, got '" + tok + "'");
  }
  return value;
}

}  // namespace

Graph load_graph(const std::filesystem::path& dir) {
  const auto features_path = dir / "features.tsv";
  const auto edges_path = dir / "edges.tsv";
  const auto labels_path = dir / "labels.tsv";
  if (!std::filesystem::exists(features_path)) {
    throw ParseError("missing features.tsv in " + dir.string());
  }
  if (!std::filesystem::exists(edges_path)) throw ParseError("missing edges.tsv in " + dir.string());

  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  {
    auto in = open_input(features_path);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (skip_line(line)) continue;
      const auto toks = tokens(line);
      if (rows == 0) {
        cols = toks.size();
      } else if (toks.size() != cols) {
        throw ParseError(location(features_path, lineno) + ": row has " +
                         std::to_string(toks.size()) + " values, expected " + std::to_string(cols));
      }
      for (const auto& tok : toks) values.push_back(parse_real(tok, features_path, lineno));
      ++rows;
    }
  }
  if (rows == 0) throw ParseError(features_path.string() + ": no feature rows");

  EdgeList edges;
  {
    auto in = open_input(edges_path);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (skip_line(line)) continue;
      const auto toks = tokens(line);
      if (toks.size() != 2) {
        throw ParseError(location(edges_path, lineno) + ": expected 'u<TAB>v'");
      }
      const std::size_t u = parse_index(toks[0], edges_path, lineno);
      const std::size_t v = parse_index(toks[1], edges_path, lineno);
      for (std::size_t id : {u, v}) {
        if (id >= rows) {
          throw ParseError(location(edges_path, lineno) + ": node id " + std::to_string(id) +
                           " out of range (graph has " + std::to_string(rows) + " nodes)");
        }
      }
      if (u == v) throw ParseError(location(edges_path, lineno) + ": self-loop on node " + toks[0]);
      edges.emplace_back(u, v);
    }
  }

  std::optional<std::vector<std::uint8_t>> labels;
  if (std::filesystem::exists(labels_path)) {
    labels.emplace();
    auto in = open_input(labels_path);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (skip_line(line)) continue;
      const auto toks = tokens(line);
      if (toks.size() != 1 || (toks[0] != "0" && toks[0] != "1")) {
        throw ParseError(location(labels_path, lineno) + ": expected 0 or 1");
      }
      labels->push_back(toks[0] == "1" ? 1 : 0);
    }
    if (labels->size() != rows) {
      throw ParseError(labels_path.filename().string() + ": " + std::to_string(labels->size()) +
                       " labels for " + std::to_string(rows) + " nodes");
    }
  }
  return Graph(Matrix(rows, cols, std::move(values)), edges, std::move(labels));
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    for (auto [u, v] : g.edges()) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(dir / "features.tsv");
    const Matrix& x = g.features();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "\t" : "") << format_real(x(i, j));
      out << '\n';
    }
  }
  const auto labels_path = dir / "labels.tsv";
  if (g.has_labels()) {
    std::ofstream out(labels_path);
    for (auto l : g.labels()) out << static_cast<int>(l) << '\n';
  } else {
    std::filesystem::remove(labels_path);
  }
  for (const char* name : {"edges.tsv", "features.tsv"}) {
    if (!std::filesystem::exists(dir / name)) throw ParseError("failed to write " + (dir / name).string());
  }
}

// -- spectral operators ------------------------------------------------------

Matrix normalized_laplacian(const Graph& g) {
  const std::size_t n = g.node_count();
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.degree(i) > 0) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));
  }
  Matrix lap(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.degree(i) > 0) lap(i, i) = 1.0;
  }
  for (auto [u, v] : g.edges()) lap(u, v) = lap(v, u) = -inv_sqrt[u] * inv_sqrt[v];
  return lap;
}

FilterOperators filter_operators(const Graph& g) {
  Matrix lap = normalized_laplacian(g);
  Matrix low = lap * -1.0;
  for (std::size_t i = 0; i < low.rows(); ++i) low(i, i) += 2.0;
  return {std::move(low), std::move(lap)};
}

Matrix gcn_propagation(const Graph& g) {
  const std::size_t n = g.node_count();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) p(i, i) = inv_sqrt[i] * inv_sqrt[i];
  for (auto [u, v] : g.edges()) p(u, v) = p(v, u) = inv_sqrt[u] * inv_sqrt[v];
  return p;
}

// -- neighbor statistics -----------------------------------------------------

namespace graph_ops {

Matrix inverse_degree(const Graph& g) {
  Matrix out(g.node_count(), 1);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (g.degree(i) > 0) out(i, 0) = 1.0 / static_cast<double>(g.degree(i));
  }
  return out;
}

Matrix inverse_degree_minus_one(const Graph& g) {
  Matrix out(g.node_count(), 1);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (g.degree(i) > 1) out(i, 0) = 1.0 / static_cast<double>(g.degree(i) - 1);
  }
  return out;
}

ad::Var neighbor_mean(const Graph& g, ad::Var h) {
  if (h.rows() != g.node_count()) throw ShapeError("neighbor_mean: row count differs from node count");
  ad::Tape& t = *h.tape();
  const ad::Var summed = ad::segment_sum(ad::gather_rows(h, g.arc_targets()), g.arc_sources(), g.node_count());
  return ad::row_scale(summed, t.constant(inverse_degree(g)));
}

CenteredMoments centered_moments(const Graph& g, ad::Var h, ad::Var center) {
  if (h.rows() != g.node_count() || !h.value().same_shape(center.value())) {
    throw ShapeError("centered_moments: features and centers must both be node_count x d");
  }
  ad::Tape& t = *h.tape();
  const std::size_t n = g.node_count();
  const ad::Var dev = ad::sub(ad::gather_rows(h, g.arc_targets()), ad::gather_rows(center, g.arc_sources()));
  const ad::Var scale = t.constant(inverse_degree_minus_one(g));
  return {ad::row_scale(ad::segment_sum(ad::square(dev), g.arc_sources(), n), scale),
          ad::row_scale(ad::segment_sum(ad::row_outer(dev, dev), g.arc_sources(), n), scale)};
}

Matrix flatten_rows(std::span<const Matrix> mats) {
  if (mats.empty()) return {};
  const std::size_t width = mats.front().size();
  Matrix out(mats.size(), width);
  for (std::size_t i = 0; i < mats.size(); ++i) {
    if (mats[i].size() != width) throw ShapeError("flatten_rows: matrices differ in size");
    std::copy(mats[i].data().begin(), mats[i].data().end(), out.row(i).begin());
  }
  return out;
}

std::vector<Matrix> unflatten_rows(const Matrix& flat, std::size_t d) {
  if (flat.cols() != d * d) throw ShapeError("unflatten_rows: row width is not d^2");
  std::vector<Matrix> out;
  out.reserve(flat.rows());
  for (std::size_t i = 0; i < flat.rows(); ++i) {
    out.emplace_back(d, d, std::vector<double>(flat.row(i).begin(), flat.row(i).end()));
  }
  return out;
}

}  // namespace graph_ops

std::vector<char> mean_validity(const Graph& g) {
  std::vector<char> out(g.node_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.degree(i) >= 1;
  return out;
}

std::vector<char> cov_validity(const Graph& g) {
  std::vector<char> out(g.node_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.degree(i) >= 2;
  return out;
}

NeighborStats neighbor_stats(const Graph& g, const Matrix& h0) {
  if (h0.rows() != g.node_count()) {
    throw ShapeError("neighbor_stats: h0 has " + std::to_string(h0.rows()) + " rows for " +
                     std::to_string(g.node_count()) + " nodes");
  }
  ad::Tape tape;
  const ad::Var h = tape.constant(h0);
  const ad::Var mu = graph_ops::neighbor_mean(g, h);
  const auto moments = graph_ops::centered_moments(g, h, mu);
  return {mu.value(), ad::sqrt(moments.variance).value(),
          graph_ops::unflatten_rows(moments.covariance.value(), h0.cols()), mean_validity(g),
          cov_validity(g)};
}

// -- diagnostics -------------------------------------------------------------

namespace {

std::vector<Bin> make_bins(double lo, double hi, std::size_t count) {
  std::vector<Bin> bins(count);
  const double width = (hi - lo) / static_cast<double>(count);
  for (std::size_t k = 0; k < count; ++k) {
    bins[k].low = lo + width * static_cast<double>(k);
    bins[k].high = k + 1 == count ? hi : lo + width * static_cast<double>(k + 1);
  }
  return bins;
}

std::size_t bin_index(double x, double lo, double hi, std::size_t count) {
  const double pos = (x - lo) / (hi - lo) * static_cast<double>(count);
  if (!(pos > 0.0)) return 0;
  return std::min(count - 1, static_cast<std::size_t>(pos));
}

std::size_t energy_bin_count(double bin_width) {
  if (!(bin_width > 0.0) || bin_width > 2.0) throw ConfigError("spectral_energy: bin width must be in (0, 2]");
  return static_cast<std::size_t>(std::ceil(2.0 / bin_width - 1e-9));
}

}  // namespace

SpectralEnergyReport spectral_energy(const SymmetricEigen& eig, std::span<const double> signal,
                                     double bin_width) {
  const std::size_t n = eig.values.size();
  if (signal.size() != n) throw ShapeError("spectral_energy: signal length differs from node count");
  double norm2 = 0.0;
  for (double v : signal) norm2 += v * v;
  if (!(norm2 > 0.0)) throw ConfigError("spectral_energy: signal is identically zero");

  SpectralEnergyReport report{eig.values, std::vector<double>(n), {}};
  for (std::size_t k = 0; k < n; ++k) {
    double proj = 0.0;
    for (std::size_t i = 0; i < n; ++i) proj += eig.vectors(i, k) * signal[i];
    report.energy[k] = proj * proj / norm2;
  }
  const std::size_t count = energy_bin_count(bin_width);
  report.binned.bins = make_bins(0.0, bin_width * static_cast<double>(count), count);
  for (std::size_t k = 0; k < n; ++k) {
    report.binned.bins[bin_index(eig.values[k], 0.0, report.binned.bins.back().high, count)].value +=
        report.energy[k];
  }
  return report;
}

SpectralEnergyReport spectral_energy(const Graph& g, std::span<const double> signal, double bin_width) {
  return spectral_energy(eigh_symmetric(normalized_laplacian(g)), signal, bin_width);
}

SpectralEnergyReport feature_spectral_energy(const Graph& g, double bin_width, const std::string& group) {
  const SymmetricEigen eig = eigh_symmetric(normalized_laplacian(g));
  const Matrix& x = g.features();
  SpectralEnergyReport total;
  std::size_t used = 0;
  std::vector<double> column(x.rows());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      column[i] = x(i, c);
      norm2 += column[i] * column[i];
    }
    if (!(norm2 > 0.0)) continue;
    SpectralEnergyReport one = spectral_energy(eig, column, bin_width);
    if (used == 0) {
      total = std::move(one);
    } else {
      for (std::size_t k = 0; k < total.energy.size(); ++k) total.energy[k] += one.energy[k];
      for (std::size_t b = 0; b < total.binned.bins.size(); ++b) {
        total.binned.bins[b].value += one.binned.bins[b].value;
      }
    }
    ++used;
  }
  if (used == 0) throw ConfigError("feature_spectral_energy: every feature column is zero");
  const double inv = 1.0 / static_cast<double>(used);
  for (double& e : total.energy) e *= inv;
  for (Bin& b : total.binned.bins) b.value *= inv;
  total.binned.group = group;
  return total;
}

std::vector<BinnedSeries> similarity_histogram(const Graph& g, std::size_t bins) {
  if (bins == 0) throw ConfigError("similarity_histogram: need at least one bin");
  const Matrix& x = g.features();
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (double v : x.row(i)) acc += v * v;
    norms[i] = std::sqrt(acc);
  }
  auto cosine = [&](std::size_t u, std::size_t v) {
    if (norms[u] == 0.0 || norms[v] == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) dot += x(u, j) * x(v, j);
    return std::clamp(dot / (norms[u] * norms[v]), -1.0, 1.0);
  };

  std::vector<BinnedSeries> out;
  if (g.has_labels()) {
    for (const char* name : {"anomalous-normal", "normal-normal", "anomalous-anomalous"}) {
      out.push_back({name, make_bins(-1.0, 1.0, bins)});
    }
  } else {
    out.push_back({"all", make_bins(-1.0, 1.0, bins)});
  }
  for (auto [u, v] : g.edges()) {
    std::size_t group = 0;
    if (g.has_labels()) {
      const int anomalous = g.labels()[u] + g.labels()[v];
      group = anomalous == 1 ? 0 : anomalous == 0 ? 1 : 2;
    }
    out[group].bins[bin_index(cosine(u, v), -1.0, 1.0, bins)].value += 1.0;
  }
  return out;
}

Graph drop_anomalous_edges(const Graph& g) {
  const auto& labels = g.labels();
  EdgeList kept;
  for (auto [u, v] : g.edges()) {
    if (labels[u] == labels[v]) kept.emplace_back(u, v);
  }
  return g.with_edges(kept);
}

std::string format_real(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericError("format_real: conversion failed");
  return std::string(buf, end);
}

void write_binned_tsv(std::ostream& out, std::span<const BinnedSeries> series) {
  for (const auto& s : series) {
    out << "# group: " << s.group << '\n';
    for (const Bin& b : s.bins) {
      out << format_real(b.low) << '\t' << format_real(b.high) << '\t' << format_real(b.value) << '\n';
    }
  }
}

}  // namespace nkgad
