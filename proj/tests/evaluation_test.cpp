#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "nkgad/error.hpp"
#include "nkgad/evaluation.hpp"
#include "test_support.hpp"

using namespace nkgad;
using nkgad::testing::pairwise_auc;
using nkgad::testing::random_edges;
using nkgad::testing::random_matrix;

TEST_CASE("auc: examples") {
  const std::vector<std::uint8_t> pn{1, 1, 0};
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.1}, pn) == 1.0);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.9}, pn) == 0.0);
  CHECK(auc(std::vector<double>{0.5, 0.5}, std::vector<std::uint8_t>{1, 0}) == 0.5);
  CHECK(auc(std::vector<double>{3, 3, 3, 3}, std::vector<std::uint8_t>{1, 0, 1, 0}) == 0.5);
  CHECK(auc(std::vector<double>{0.8, 0.6, 0.7, 0.1}, std::vector<std::uint8_t>{1, 0, 0, 1}) == 0.5);
}

TEST_CASE("auc: errors") {
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), ConfigError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{0, 0}), ConfigError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<std::uint8_t>{1, 0}), ShapeError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, NAN}, std::vector<std::uint8_t>{1, 0}), ConfigError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{2, 0}), ConfigError);
}

TEST_CASE("auc: brute-force oracle and monotone invariance") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    // Coarse scores force plenty of ties.
    const bool coarse = trial % 2 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = coarse ? static_cast<double>(rng.below(6)) : rng.normal();
      labels[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    const double value = auc(scores, labels);
    CHECK(std::abs(value - pairwise_auc(scores, labels)) < 1e-12);

    std::vector<double> warped(n);
    std::transform(scores.begin(), scores.end(), warped.begin(), [](double s) { return std::exp(3.0 * s) - 7.0; });
    CHECK(std::abs(auc(warped, labels) - value) < 1e-12);

    std::vector<double> negated(n);
    std::transform(scores.begin(), scores.end(), negated.begin(), [](double s) { return -s; });
    CHECK(std::abs(auc(negated, labels) - (1.0 - value)) < 1e-12);
  }
}

TEST_CASE("inject_anomalies") {
  Rng rng(23);
  const std::size_t n = 50;
  const Graph g(random_matrix(n, 5, rng), random_edges(n, 0.05, rng));

  SUBCASE("identity") {
    const Injection out = inject_anomalies(g, {});
    CHECK(out.graph.edges() == g.edges());
    CHECK(out.graph.features() == g.features());
    for (auto l : out.graph.labels()) CHECK(l == 0);
    CHECK(out.structural.empty());
    CHECK(out.contextual.empty());
  }
  SUBCASE("one triangle on an edgeless graph") {
    const Graph empty(random_matrix(10, 2, rng), {});
    InjectionSpec spec;
    spec.clique_count = 1;
    spec.clique_size = 3;
    const Injection out = inject_anomalies(empty, spec);
    REQUIRE(out.graph.edge_count() == 3);
    REQUIRE(out.structural.size() == 3);
    const std::set<std::size_t> chosen(out.structural.begin(), out.structural.end());
    CHECK(chosen.size() == 3);
    for (const auto& [u, v] : out.graph.edges()) {
      CHECK(chosen.count(u) == 1);
      CHECK(chosen.count(v) == 1);
    }
  }
  SUBCASE("properties and determinism") {
    InjectionSpec spec;
    spec.clique_count = 2;
    spec.clique_size = 5;
    spec.swap_count = 6;
    spec.candidates = 10;
    spec.seed = 4;
    const Injection a = inject_anomalies(g, spec);
    const Injection b = inject_anomalies(g, spec);
    CHECK(a.structural == b.structural);
    CHECK(a.contextual == b.contextual);
    CHECK(a.graph.features() == b.graph.features());
    spec.seed = 5;
    CHECK(inject_anomalies(g, spec).structural != a.structural);

    std::set<std::size_t> injected(a.structural.begin(), a.structural.end());
    injected.insert(a.contextual.begin(), a.contextual.end());
    CHECK(injected.size() == 16);

    std::set<std::pair<std::size_t, std::size_t>> after;
    for (auto [u, v] : a.graph.edges()) after.insert({std::min(u, v), std::max(u, v)});
    for (auto [u, v] : g.edges()) CHECK(after.count({std::min(u, v), std::max(u, v)}) == 1);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i + 1; j < 5; ++j) {
          const std::size_t u = a.structural[c * 5 + i], v = a.structural[c * 5 + j];
          CHECK(after.count({std::min(u, v), std::max(u, v)}) == 1);
        }
    for (std::size_t v : a.structural) CHECK(a.graph.degree(v) >= 4);

    for (std::size_t v = 0; v < n; ++v) {
      CHECK(a.graph.labels()[v] == (injected.count(v) ? 1 : 0));
      const bool swapped = std::find(a.contextual.begin(), a.contextual.end(), v) != a.contextual.end();
      if (!swapped) {
        for (std::size_t j = 0; j < 5; ++j) CHECK(a.graph.features()(v, j) == g.features()(v, j));
      }
    }
    // Each swapped row is a copy of some other node's original row.
    for (std::size_t v : a.contextual) {
      bool found = false;
      for (std::size_t u = 0; u < n && !found; ++u) {
        if (u == v) continue;
        bool same = true;
        for (std::size_t j = 0; j < 5; ++j) same = same && a.graph.features()(v, j) == g.features()(u, j);
        found = same;
      }
      CHECK(found);
    }
  }
  SUBCASE("full candidate pool picks the farthest node") {
    const Graph line(Matrix::from_rows({{0.0}, {1.0}, {2.0}, {10.0}, {3.0}}), {});
    InjectionSpec spec;
    spec.swap_count = 1;
    spec.candidates = 100;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      spec.seed = seed;
      const Injection out = inject_anomalies(line, spec);
      const std::size_t v = out.contextual.at(0);
      CHECK(out.graph.features()(v, 0) == (v == 3 ? 0.0 : 10.0));
    }
  }
  SUBCASE("existing labels are kept") {
    std::vector<std::uint8_t> labels(n, 0);
    labels[7] = 1;
    const Graph labelled(g.features(), g.edges(), labels);
    InjectionSpec spec;
    spec.swap_count = 3;
    const Injection out = inject_anomalies(labelled, spec);
    CHECK(out.graph.labels()[7] == 1);
  }
  SUBCASE("invalid specs") {
    InjectionSpec spec;
    spec.clique_count = 1;
    spec.clique_size = 1;
    CHECK_THROWS_AS(inject_anomalies(g, spec), ConfigError);
    spec = {};
    spec.swap_count = 1;
    spec.candidates = 1;
    CHECK_THROWS_AS(inject_anomalies(g, spec), ConfigError);
    spec = {};
    spec.clique_count = 10;
    spec.clique_size = 5;
    CHECK_THROWS_AS(inject_anomalies(g, spec), ConfigError);
  }
}

TEST_CASE("synthetic_graph") {
  SyntheticSpec spec;
  spec.nodes = 200;
  spec.seed = 3;
  const Graph a = synthetic_graph(spec);
  const Graph b = synthetic_graph(spec);
  CHECK(a.features() == b.features());
  CHECK(a.edges() == b.edges());
  CHECK(a.node_count() == 200);
  CHECK(a.dim() == 8);
  CHECK_FALSE(a.has_labels());
  const double mean_degree = 2.0 * static_cast<double>(a.edge_count()) / 200.0;
  CHECK(mean_degree > 5.0);
  CHECK(mean_degree < 9.0);
  spec.nodes = 1;
  CHECK_THROWS_AS(synthetic_graph(spec), ConfigError);
}

TEST_CASE("run_experiment and report") {
  SyntheticSpec gs;
  gs.nodes = 40;
  gs.dim = 3;
  InjectionSpec is;
  is.clique_count = 1;
  is.clique_size = 3;
  is.swap_count = 2;
  const Graph g = inject_anomalies(synthetic_graph(gs), is).graph;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.hidden_dim = 3;

  const std::vector<Variant> variants{Variant::full, Variant::dagger};
  const std::vector<std::uint64_t> one{7};
  const EvalReport single = run_experiment(g, cfg, one, variants);
  REQUIRE(single.variants.size() == 2);
  for (const VariantResult& v : single.variants) {
    CHECK(v.aucs.size() == 1);
    CHECK(v.auc_std == 0.0);
    CHECK(v.auc_mean == v.aucs[0]);
    CHECK(v.auc_mean >= 0.0);
    CHECK(v.auc_mean <= 1.0);
  }

  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const EvalReport many = run_experiment(g, cfg, seeds, std::vector<Variant>{Variant::section});
  CHECK(many.seeds == seeds);
  CHECK(many.variants[0].aucs.size() == 3);
  CHECK(many.variants[0].auc_std >= 0.0);

  std::ostringstream a, b, timed;
  write_report(a, many);
  write_report(b, run_experiment(g, cfg, seeds, std::vector<Variant>{Variant::section}));
  write_report(timed, many, true);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("# variant\tsection\n# seeds\t0,1,2\n") != std::string::npos);
  CHECK(a.str().find("# reference_auc\tweibo\t93.7\t0.87\n") != std::string::npos);
  CHECK(a.str().find("runtime_seconds") == std::string::npos);
  CHECK(timed.str().find("runtime_seconds") != std::string::npos);

  CHECK_THROWS_AS(run_experiment(synthetic_graph(gs), cfg, seeds, variants), ConfigError);
  CHECK_THROWS_AS(run_experiment(g, cfg, std::vector<std::uint64_t>{}, variants), ConfigError);
}
