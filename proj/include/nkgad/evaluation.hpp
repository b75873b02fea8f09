#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nkgad/pipeline.hpp"

namespace nkgad {

/// Mann-Whitney statistic with average ranks for ties. ConfigError unless
/// both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct InjectionSpec {
  std::size_t clique_count = 0;
  std::size_t clique_size = 0;
  std::size_t swap_count = 0;
  std::size_t candidates = 50;  // k
  std::uint64_t seed = 0;
};

struct Injection {
  Graph graph;
  std::vector<std::size_t> structural;  // in clique order
  std::vector<std::size_t> contextual;  // in swap order
};

/// Cliques over disjoint random node sets, then attribute swaps on further
/// distinct nodes: each takes the features of the farthest (Euclidean) of
/// `candidates` random other nodes. Existing labels are kept and injected
/// nodes set to 1.
Injection inject_anomalies(const Graph& g, const InjectionSpec& spec);

struct SyntheticSpec {
  std::size_t nodes = 500;
  std::size_t dim = 8;
  double mean_degree = 8.0;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Random geometric graph on the unit square; features are smooth random
/// functions of position plus Gaussian noise. Unlabeled.
Graph synthetic_graph(const SyntheticSpec& spec);

struct VariantResult {
  Variant variant = Variant::full;
  std::vector<double> aucs;     // one per seed
  std::vector<double> seconds;  // one per seed
  double auc_mean = 0.0;
  double auc_std = 0.0;  // sample std; 0 for one seed
  double seconds_mean = 0.0;
  double seconds_std = 0.0;
};

struct EvalReport {
  std::vector<std::uint64_t> seeds;
  std::vector<VariantResult> variants;
};

/// Trains and scores once per (variant, seed) with cfg.seed = seed.
EvalReport run_experiment(const Graph& g, const TrainConfig& cfg, std::span<const std::uint64_t> seeds,
                          std::span<const Variant> variants);

/// `# reference_auc` annotation lines (unless `with_reference` is off), then
/// `# variant`, `# seeds` and `metric<TAB>mean<TAB>std` rows per variant.
/// Runtime rows are included only when `with_runtime` is set so the default
/// output is reproducible byte for byte.
void write_report(std::ostream& out, const EvalReport& report, bool with_runtime = false,
                  bool with_reference = true);

/// Published real-dataset AUCs (percent) carried as reference annotations.
struct ReferenceAuc {
  const char* dataset;
  double mean;
  double std;
};
std::span<const ReferenceAuc> reference_aucs();

}  // namespace nkgad
