#include "nkgad/evaluation.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "nkgad/error.hpp"
#include "nkgad/rng.hpp"

namespace nkgad {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw ConfigError("auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ConfigError("auc: scores must be finite");
    pos += labels[i];
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ConfigError("auc: need at least one positive and one negative label");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    const double avg_rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      if (labels[order[k]]) rank_sum += avg_rank;
    }
    lo = hi + 1;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

Injection inject_anomalies(const Graph& g, const InjectionSpec& spec) {
  const std::size_t n = g.node_count();
  if (spec.clique_count > 0 && spec.clique_size < 2) throw ConfigError("inject: clique_size must be at least 2");
  if (spec.swap_count > 0 && spec.candidates < 2) throw ConfigError("inject: candidate pool k must be at least 2");
  const std::size_t total = spec.clique_count * spec.clique_size + spec.swap_count;
  if (total > 0 && total >= n) {
    throw ConfigError("inject: " + std::to_string(total) + " anomalies need more than the " + std::to_string(n) +
                      " distinct nodes available");
  }

  Rng rng(derive_seed(spec.seed, "inject"));
  const auto chosen = rng.sample_without_replacement(n, total);
  Injection out;
  EdgeList edges = g.edges();
  std::vector<std::uint8_t> labels = g.has_labels() ? g.labels() : std::vector<std::uint8_t>(n, 0);

  for (std::size_t c = 0; c < spec.clique_count; ++c) {
    const auto first = chosen.begin() + static_cast<std::ptrdiff_t>(c * spec.clique_size);
    const std::vector<std::size_t> members(first, first + static_cast<std::ptrdiff_t>(spec.clique_size));
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) edges.emplace_back(members[a], members[b]);
      labels[members[a]] = 1;
      out.structural.push_back(members[a]);
    }
  }

  const Matrix& original = g.features();
  Matrix features = original;
  const std::size_t k = std::min(spec.candidates, n - 1);
  for (std::size_t s = 0; s < spec.swap_count; ++s) {
    const std::size_t v = chosen[spec.clique_count * spec.clique_size + s];
    std::size_t best = v;
    double best_dist = -1.0;
    for (std::size_t idx : rng.sample_without_replacement(n - 1, k)) {
      const std::size_t c = idx >= v ? idx + 1 : idx;
      double dist = 0.0;
      for (std::size_t j = 0; j < original.cols(); ++j) dist += std::pow(original(c, j) - original(v, j), 2);
      if (dist > best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    std::copy(original.row(best).begin(), original.row(best).end(), features.row(v).begin());
    labels[v] = 1;
    out.contextual.push_back(v);
  }
  out.graph = Graph(std::move(features), edges, std::move(labels));
  return out;
}

Graph synthetic_graph(const SyntheticSpec& spec) {
  if (spec.nodes < 2 || spec.dim < 1) throw ConfigError("synthetic graph needs at least 2 nodes and 1 feature");
  if (!(spec.mean_degree > 0.0) || !(spec.noise >= 0.0)) throw ConfigError("synthetic graph: bad degree or noise");
  const std::size_t n = spec.nodes;
  Rng pos_rng(derive_seed(spec.seed, "positions"));
  std::vector<std::array<double, 2>> pos(n);
  for (auto& p : pos) p = {pos_rng.uniform(), pos_rng.uniform()};

  const double radius = std::sqrt(spec.mean_degree / (std::numbers::pi * static_cast<double>(n)));
  EdgeList edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = pos[i][0] - pos[j][0], dy = pos[i][1] - pos[j][1];
      if (dx * dx + dy * dy < radius * radius) edges.emplace_back(i, j);
    }

  Rng feat_rng(derive_seed(spec.seed, "features"));
  Matrix x(n, spec.dim);
  for (std::size_t k = 0; k < spec.dim; ++k) {
    const double wx = 3.0 * feat_rng.normal(), wy = 3.0 * feat_rng.normal();
    const double phase = feat_rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) x(i, k) = std::sin(wx * pos[i][0] + wy * pos[i][1] + phase);
  }
  Rng noise_rng(derive_seed(spec.seed, "noise"));
  for (double& v : x.data()) v += spec.noise * noise_rng.normal();
  return Graph(std::move(x), edges);
}

namespace {

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

EvalReport run_experiment(const Graph& g, const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                          std::span<const Variant> variants) {
  if (!g.has_labels()) throw ConfigError("run_experiment: the graph needs labels");
  if (seeds.empty()) throw ConfigError("run_experiment: no seeds given");
  EvalReport report;
  report.seeds.assign(seeds.begin(), seeds.end());
  for (Variant variant : variants) {
    VariantResult result;
    result.variant = variant;
    for (std::uint64_t seed : seeds) {
      TrainConfig run = cfg;
      run.variant = variant;
      run.seed = seed;
      const auto start = std::chrono::steady_clock::now();
      const TrainedModel model = train(g, run);
      const ScoreReport scored = score(model, g);
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      result.aucs.push_back(auc(scored.scores, g.labels()));
      result.seconds.push_back(elapsed.count());
    }
    std::tie(result.auc_mean, result.auc_std) = mean_and_std(result.aucs);
    std::tie(result.seconds_mean, result.seconds_std) = mean_and_std(result.seconds);
    report.variants.push_back(std::move(result));
  }
  return report;
}

std::span<const ReferenceAuc> reference_aucs() {
  static constexpr ReferenceAuc kTable[] = {
      {"weibo", 93.70, 0.87}, {"reddit", 57.27, 0.07},   {"disney", 77.26, 2.25}, {"books", 65.60, 0.72},
      {"enron", 80.82, 3.10}, {"elliptic", 52.17, 3.41}, {"dgraph", 55.30, 0.16},
  };
  return kTable;
}

void write_report(std::ostream& out, const EvalReport& report, bool with_runtime, bool with_reference) {
  if (with_reference) {
    out << "# reference AUC (%) on the real datasets, not reproduced by this harness\n";
    for (const ReferenceAuc& r : reference_aucs()) {
      out << "# reference_auc\t" << r.dataset << '\t' << format_real(r.mean) << '\t' << format_real(r.std) << '\n';
    }
  }
  for (const VariantResult& v : report.variants) {
    out << "# variant\t" << to_string(v.variant) << '\n';
    out << "# seeds";
    for (std::size_t i = 0; i < report.seeds.size(); ++i) out << (i ? "," : "\t") << report.seeds[i];
    out << '\n';
    out << "# auc_per_seed";
    for (std::size_t i = 0; i < v.aucs.size(); ++i) out << (i ? "," : "\t") << format_real(v.aucs[i]);
    out << '\n';
    out << "auc\t" << format_real(v.auc_mean) << '\t' << format_real(v.auc_std) << '\n';
    if (with_runtime) {
      out << "runtime_seconds\t" << format_real(v.seconds_mean) << '\t' << format_real(v.seconds_std) << '\n';
    }
  }
}

}  // namespace nkgad
