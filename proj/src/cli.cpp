#include "nkgad/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "nkgad/error.hpp"
#include "nkgad/evaluation.hpp"
#include "nkgad/graph.hpp"
#include "nkgad/pipeline.hpp"

namespace nkgad {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string data;
  std::string config;
  std::string out;
  std::string model;
  std::string history;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  // eval
  std::string seeds = "0-9";
  std::string variants = "full,section,ddagger,dagger";
  std::string sweep;
  bool timing = false;

  // inject
  InjectionSpec injection;

  // generate
  SyntheticSpec synthetic;

  // spectrum / similarity
  double bin_width = 0.25;
  std::size_t bins = 20;
};

void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw ParseError("cannot write " + path);
  file << content;
  if (!file) throw ParseError("failed writing " + path);
}

TrainConfig layered_config(const Options& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_config(o.config);
  for (const std::string& s : o.sets) apply_override(cfg, s);
  if (o.seed) cfg.seed = *o.seed;
  validate(cfg);
  return cfg;
}

std::uint64_t parse_seed(const std::string& text) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || text.front() == '-') throw ConfigError("bad seed '" + text + "'");
  return v;
}

/// "0-9", "1,4,7" or a mix such as "0-2,8".
std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      seeds.push_back(parse_seed(item));
      continue;
    }
    const std::uint64_t lo = parse_seed(item.substr(0, dash)), hi = parse_seed(item.substr(dash + 1));
    if (hi < lo) throw ConfigError("bad seed range '" + item + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

std::vector<Variant> parse_variant_list(const std::string& text) {
  std::vector<Variant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_variant(item));
  if (out.empty()) throw ConfigError("no variants given");
  return out;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const std::string& w : warnings) err << "warning: " << w << '\n';
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = layered_config(o);
  const Graph g = load_graph(o.data);
  const TrainedModel model = train(g, cfg, [&](std::size_t epoch, const LossBreakdown& b) {
    if (o.verbose) err << "epoch " << epoch << " rec " << format_real(b.rec) << " total " << format_real(b.total) << '\n';
  });
  print_warnings(model.warnings, err);
  if (const fs::path parent = fs::path(o.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_model(model, o.out);

  std::ostringstream history;
  write_history_tsv(history, model.history);
  const fs::path history_path = o.history.empty() ? fs::path(o.out).parent_path() / "history.tsv" : fs::path(o.history);
  emit(history_path.string(), history.str(), out);
  err << "initial total " << format_real(model.initial.total) << ", final total " << format_real(model.final.total)
      << '\n';
  return kExitOk;
}

int cmd_score(const Options& o, std::ostream& out, std::ostream&) {
  const TrainedModel model = load_model(o.model);
  const Graph g = load_graph(o.data);
  const ScoreReport report = score(model, g);
  std::ostringstream text;
  for (std::size_t i = 0; i < report.scores.size(); ++i) text << i << '\t' << format_real(report.scores[i]) << '\n';
  emit(o.out, text.str(), out);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = layered_config(o);
  const Graph g = load_graph(o.data);
  const auto seeds = parse_seed_list(o.seeds);
  const auto variants = parse_variant_list(o.variants);

  std::ostringstream text;
  const auto report_for = [&](const TrainConfig& run_cfg, bool first) {
    const EvalReport report = run_experiment(g, run_cfg, seeds, variants);
    write_report(text, report, o.timing, first);
    for (const VariantResult& v : report.variants) {
      err << to_string(v.variant) << ": auc " << format_real(v.auc_mean) << " +- " << format_real(v.auc_std) << ", "
          << format_real(v.seconds_mean) << " s/run\n";
    }
  };
  if (o.sweep.empty()) {
    report_for(cfg, true);
  } else {
    // Grid of 0.1 .. 0.9 in steps of 0.1 for one coefficient.
    for (int k = 1; k <= 9; ++k) {
      TrainConfig run_cfg = cfg;
      const std::string value = "0." + std::to_string(k);
      apply_setting(run_cfg, o.sweep, value);
      validate(run_cfg);
      if (k == 1) write_report(text, EvalReport{}, false, true);
      text << "# sweep\t" << o.sweep << '\t' << value << '\n';
      err << o.sweep << " = " << value << '\n';
      report_for(run_cfg, false);
    }
  }
  emit(o.out, text.str(), out);
  return kExitOk;
}

int cmd_inject(const Options& o, std::ostream& out, std::ostream&) {
  const Graph g = load_graph(o.data);
  InjectionSpec spec = o.injection;
  if (o.seed) spec.seed = *o.seed;
  const Injection inj = inject_anomalies(g, spec);
  save_graph(inj.graph, o.out);
  std::ostringstream text;
  for (std::size_t v : inj.structural) text << v << "\tstructural\n";
  for (std::size_t v : inj.contextual) text << v << "\tcontextual\n";
  out << text.str();
  return kExitOk;
}

int cmd_generate(const Options& o, std::ostream&, std::ostream&) {
  SyntheticSpec spec = o.synthetic;
  if (o.seed) spec.seed = *o.seed;
  save_graph(synthetic_graph(spec), o.out);
  return kExitOk;
}

int cmd_spectrum(const Options& o, std::ostream& out, std::ostream& err) {
  const Graph g = load_graph(o.data);
  std::vector<BinnedSeries> series{feature_spectral_energy(g, o.bin_width, "graph").binned};
  if (g.has_labels()) {
    series.push_back(feature_spectral_energy(drop_anomalous_edges(g), o.bin_width, "without_anomalous_edges").binned);
  } else {
    err << "warning: no labels, reporting the graph as-is only\n";
  }
  std::ostringstream text;
  write_binned_tsv(text, series);
  emit(o.out, text.str(), out);
  return kExitOk;
}

int cmd_similarity(const Options& o, std::ostream& out, std::ostream&) {
  const Graph g = load_graph(o.data);
  std::ostringstream text;
  write_binned_tsv(text, similarity_histogram(g, o.bins));
  emit(o.out, text.str(), out);
  return kExitOk;
}

CLI::Option* add_seed(CLI::App* cmd, Options& o) {
  return cmd->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t s) { o.seed = s; }, "Random seed");
}

void add_config_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Config file (key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "Override one config key, key=value (repeatable)")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  add_seed(cmd, o);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Graph anomaly detection with neighbor knowledge", "nkgad"};
  app.require_subcommand(1, 1);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write it with history.tsv");
  train_cmd->add_option("--data", o.data, "GraphBundle directory")->required();
  train_cmd->add_option("--out", o.out, "Model file")->required();
  train_cmd->add_option("--history", o.history, "History TSV (default: history.tsv beside the model)");
  train_cmd->add_flag("--verbose", o.verbose, "Per-epoch losses on stderr");
  add_config_flags(train_cmd, o);

  auto* score_cmd = app.add_subcommand("score", "Score every node with a trained model");
  score_cmd->add_option("--data", o.data, "GraphBundle directory")->required();
  score_cmd->add_option("--model", o.model, "Model file")->required();
  score_cmd->add_option("--out", o.out, "scores.tsv (default stdout)");

  auto* eval_cmd = app.add_subcommand("eval", "AUC mean and std per variant over seeds");
  eval_cmd->add_option("--data", o.data, "Labeled GraphBundle directory")->required();
  eval_cmd->add_option("--out", o.out, "report.tsv (default stdout)");
  eval_cmd->add_option("--seeds", o.seeds, "Seed list, e.g. 0-9 or 1,3,5")->capture_default_str();
  eval_cmd->add_option("--variants", o.variants, "Comma-separated variants")->capture_default_str();
  eval_cmd->add_option("--sweep", o.sweep, "Config key swept over 0.1 .. 0.9 (e.g. lambda_ca)");
  eval_cmd->add_flag("--timing", o.timing, "Add runtime rows (output no longer reproducible)");
  add_config_flags(eval_cmd, o);

  auto* inject_cmd = app.add_subcommand("inject", "Inject structural and contextual anomalies");
  inject_cmd->add_option("--data", o.data, "Input GraphBundle directory")->required();
  inject_cmd->add_option("--out", o.out, "Output GraphBundle directory")->required();
  inject_cmd->add_option("--cliques", o.injection.clique_count, "Number of cliques")->capture_default_str();
  inject_cmd->add_option("--clique-size", o.injection.clique_size, "Nodes per clique")->capture_default_str();
  inject_cmd->add_option("--swaps", o.injection.swap_count, "Contextual anomalies")->capture_default_str();
  inject_cmd->add_option("--candidates", o.injection.candidates, "Candidate pool k")->capture_default_str();
  add_seed(inject_cmd, o);

  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic random geometric graph");
  generate_cmd->add_option("--out", o.out, "Output GraphBundle directory")->required();
  generate_cmd->add_option("--nodes", o.synthetic.nodes, "Node count")->capture_default_str();
  generate_cmd->add_option("--dim", o.synthetic.dim, "Feature dimension")->capture_default_str();
  generate_cmd->add_option("--degree", o.synthetic.mean_degree, "Expected mean degree")->capture_default_str();
  generate_cmd->add_option("--noise", o.synthetic.noise, "Feature noise std")->capture_default_str();
  add_seed(generate_cmd, o);

  auto* spectrum_cmd = app.add_subcommand("spectrum", "Spectral energy with and without anomalous edges");
  spectrum_cmd->add_option("--data", o.data, "GraphBundle directory")->required();
  spectrum_cmd->add_option("--out", o.out, "Output TSV (default stdout)");
  spectrum_cmd->add_option("--bin-width", o.bin_width, "Eigenvalue bin width")->capture_default_str();

  auto* similarity_cmd = app.add_subcommand("similarity", "Edge cosine similarity per pair type");
  similarity_cmd->add_option("--data", o.data, "GraphBundle directory")->required();
  similarity_cmd->add_option("--out", o.out, "Output TSV (default stdout)");
  similarity_cmd->add_option("--bins", o.bins, "Histogram bins over [-1, 1]")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(o, out, err);
    if (score_cmd->parsed()) return cmd_score(o, out, err);
    if (eval_cmd->parsed()) return cmd_eval(o, out, err);
    if (inject_cmd->parsed()) return cmd_inject(o, out, err);
    if (generate_cmd->parsed()) return cmd_generate(o, out, err);
    if (spectrum_cmd->parsed()) return cmd_spectrum(o, out, err);
    return cmd_similarity(o, out, err);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace nkgad
