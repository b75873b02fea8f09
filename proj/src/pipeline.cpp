#include "nkgad/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "nkgad/error.hpp"
#include "nkgad/optimizer.hpp"
#include "nkgad/rng.hpp"

namespace nkgad {

// -- configuration -----------------------------------------------------------

Variant parse_variant(const std::string& text) {
  if (text == "full") return Variant::full;
  if (text == "dagger") return Variant::dagger;
  if (text == "ddagger") return Variant::ddagger;
  if (text == "section") return Variant::section;
  throw ConfigError("unknown variant '" + text + "' (expected full, dagger, ddagger or section)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::dagger: return "dagger";
    case Variant::ddagger: return "ddagger";
    case Variant::section: return "section";
  }
  return "full";
}

void validate(const TrainConfig& cfg) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("lr must be positive");
  if (!(cfg.weight_decay >= 0.0) || !std::isfinite(cfg.weight_decay)) {
    throw ConfigError("weight_decay must be nonnegative");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (cfg.hidden_dim < 1) throw ConfigError("hidden_dim must be at least 1");
  if (cfg.low_layers < 1 || cfg.high_layers < 1) throw ConfigError("low_layers and high_layers must be at least 1");
  if (!unit(cfg.lambda_joint)) throw ConfigError("lambda_joint must lie in [0, 1]");
  if (!unit(cfg.lambda_ca)) throw ConfigError("lambda_ca must lie in [0, 1]");
  if (!(cfg.nr_weight >= 0.0) || !std::isfinite(cfg.nr_weight)) throw ConfigError("nr_weight must be nonnegative");
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return value;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "epochs") cfg.epochs = parse_number<std::size_t>(key, value);
  else if (key == "lr") cfg.lr = parse_number<double>(key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_number<double>(key, value);
  else if (key == "dropout") cfg.dropout = parse_number<double>(key, value);
  else if (key == "hidden_dim") cfg.hidden_dim = parse_number<std::size_t>(key, value);
  else if (key == "low_layers") cfg.low_layers = parse_number<std::size_t>(key, value);
  else if (key == "high_layers") cfg.high_layers = parse_number<std::size_t>(key, value);
  else if (key == "lambda_joint") cfg.lambda_joint = parse_number<double>(key, value);
  else if (key == "lambda_ca") cfg.lambda_ca = parse_number<double>(key, value);
  else if (key == "nr_weight") cfg.nr_weight = parse_number<double>(key, value);
  else if (key == "decoder_att") cfg.decoder_att = parse_layer_kind(value);
  else if (key == "decoder_str") cfg.decoder_str = parse_layer_kind(value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "variant") cfg.variant = parse_variant(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

TrainConfig parse_config(std::istream& in, const std::string& source) {
  TrainConfig cfg;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    try {
      apply_override(cfg, body);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  return parse_config(in, path.filename().string());
}

std::string format_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "epochs = " << cfg.epochs << '\n'
      << "lr = " << format_real(cfg.lr) << '\n'
      << "weight_decay = " << format_real(cfg.weight_decay) << '\n'
      << "dropout = " << format_real(cfg.dropout) << '\n'
      << "hidden_dim = " << cfg.hidden_dim << '\n'
      << "low_layers = " << cfg.low_layers << '\n'
      << "high_layers = " << cfg.high_layers << '\n'
      << "lambda_joint = " << format_real(cfg.lambda_joint) << '\n'
      << "lambda_ca = " << format_real(cfg.lambda_ca) << '\n'
      << "nr_weight = " << format_real(cfg.nr_weight) << '\n'
      << "decoder_att = " << to_string(cfg.decoder_att) << '\n'
      << "decoder_str = " << to_string(cfg.decoder_str) << '\n'
      << "seed = " << cfg.seed << '\n'
      << "variant = " << to_string(cfg.variant) << '\n';
  return out.str();
}

std::vector<double> to_vector(const LossBreakdown& b) {
  return {b.fr, b.mu, b.sigma, b.cov, b.nr, b.att, b.str, b.rec, b.total};
}

LossBreakdown from_vector(std::span<const double> v) {
  if (v.size() != std::size(kLossNames)) throw ShapeError("loss breakdown needs 9 values");
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
}

// -- model -------------------------------------------------------------------

ParamSet init_params(std::size_t input_dim, const TrainConfig& cfg) {
  validate(cfg);
  const std::size_t d = cfg.hidden_dim;
  ParamSet params;
  const EncoderKind kind = cfg.variant == Variant::dagger ? EncoderKind::plain_gcn : EncoderKind::joint;
  add_encoder_params(params, {input_dim, d, cfg.low_layers, cfg.high_layers, kind}, cfg.seed);
  if (cfg.variant == Variant::full || cfg.variant == Variant::section) add_neighbor_head_params(params, d, cfg.seed);
  if (cfg.variant == Variant::full) add_center_params(params, d, cfg.seed);
  add_decoder_params(params, d, input_dim, cfg.decoder_att, cfg.decoder_str, cfg.seed);
  return params;
}

ForwardVars forward(const GraphContext& ctx, const ParamView& p, const TrainConfig& cfg, double lambda_cs,
                    const ForwardOptions& opts) {
  const char* stage = "encoder";
  try {
    ForwardVars out;
    const EncodeOptions eo{cfg.lambda_joint, cfg.dropout, opts.training, opts.dropout_seed};
    out.enc = encode(ctx, p, eo);
    out.h_tilde = out.enc.z;

    ad::Var nr;
    if (cfg.variant == Variant::full || cfg.variant == Variant::section) {
      stage = "neighbor reconstruction";
      const PredictedVars pred = predict_stats(ctx, p, out.enc);
      const TargetVars truth = neighbor_targets(ctx, out.enc.h0);
      NeighborLossVars lv = neighbor_losses(ctx, out.enc.h0, pred, truth);
      out.warnings = std::move(lv.warnings);
      out.losses.fr = lv.fr.scalar();
      out.losses.mu = lv.mu.scalar();
      out.losses.sigma = lv.sigma.scalar();
      out.losses.cov = lv.cov.scalar();
      out.losses.nr = lv.nr.scalar();
      nr = lv.nr;
      if (cfg.variant == Variant::full) {
        stage = "center aggregation";
        out.h_tilde = center_aggregate(ctx, p, pred, out.enc.z, cfg.lambda_ca).h_tilde;
      }
    }

    stage = "decoder";
    out.decoded = decode(ctx, p, out.h_tilde);
    stage = "reconstruction loss";
    const ReconLossVars rec = reconstruction_loss(ctx, out.decoded.x_hat, out.decoded.a_hat, lambda_cs);
    out.losses.att = rec.att.scalar();
    out.losses.str = rec.str.scalar();
    out.losses.rec = rec.rec.scalar();
    out.objective = rec.rec;
    if (nr.valid()) {
      stage = "total loss";
      out.objective = ad::add(rec.rec, ad::scale(nr, cfg.nr_weight));
    }
    out.losses.total = out.objective.scalar();
    return out;
  } catch (const NumericError& e) {
    throw NumericError(std::string(stage) + ": " + e.what());
  }
}

namespace {

struct Evaluated {
  LossBreakdown losses;
  Matrix x_hat;
  Matrix a_hat;
};

Evaluated evaluate_model(const GraphContext& ctx, const ParamSet& params, const TrainConfig& cfg, double lambda_cs) {
  ad::Tape tape;
  const auto vars = bind_constants(tape, params);
  const ForwardVars fw = forward(ctx, ParamView(params, vars), cfg, lambda_cs, {});
  return {fw.losses, fw.decoded.x_hat.value(), fw.decoded.a_hat.value()};
}

std::string epoch_prefix(std::size_t epoch) { return "epoch " + std::to_string(epoch) + ", "; }

}  // namespace

TrainedModel train(const Graph& g, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (g.node_count() == 0 || g.dim() == 0) throw ConfigError("train: graph must have nodes and features");
  const GraphContext ctx = make_context(g);
  const Balance balance = structure_feature_balance(g);

  TrainedModel model;
  model.config = cfg;
  model.input_dim = g.dim();
  model.lambda_cs = balance.lambda_cs;
  model.params = init_params(g.dim(), cfg);
  model.initial = evaluate_model(ctx, model.params, cfg, balance.lambda_cs).losses;
  if (balance.degenerate) model.warnings.push_back("structure/feature balance is degenerate, using 0.5");

  const std::uint64_t dropout_base = derive_seed(cfg.seed, "dropout");
  AdamState state;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossBreakdown losses;
    const ad::Program program = [&](ad::Tape&, std::span<const ad::Var> vars) {
      ForwardVars fw = forward(ctx, ParamView(model.params, vars), cfg, balance.lambda_cs,
                               {true, derive_seed(dropout_base, static_cast<std::uint64_t>(epoch))});
      losses = fw.losses;
      for (std::string& w : fw.warnings) {
        if (std::find(model.warnings.begin(), model.warnings.end(), w) == model.warnings.end())
          model.warnings.push_back(std::move(w));
      }
      return fw.objective;
    };
    ad::Evaluation eval;
    try {
      eval = ad::evaluate_with_gradients(program, model.params);
    } catch (const NumericError& e) {
      throw NumericError(epoch_prefix(epoch) + e.what());
    }
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      if (!eval.grads[i].all_finite()) {
        throw NumericError(epoch_prefix(epoch) + "gradient of '" + model.params.name(i) + "' is not finite");
      }
    }
    model.history.push_back(losses);
    if (on_epoch) on_epoch(epoch, losses);
    optimizer_step(model.params, eval.grads, state, cfg.lr, cfg.weight_decay);
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      if (!model.params.value(i).all_finite()) {
        throw NumericError(epoch_prefix(epoch) + "parameter '" + model.params.name(i) + "' became non-finite");
      }
    }
  }
  model.final = evaluate_model(ctx, model.params, cfg, balance.lambda_cs).losses;
  return model;
}

ScoreReport score(const TrainedModel& model, const Graph& g) {
  if (g.dim() != model.input_dim) {
    throw ShapeError("score: graph has " + std::to_string(g.dim()) + " features, model expects " +
                     std::to_string(model.input_dim));
  }
  const GraphContext ctx = make_context(g);
  const double lambda_cs = structure_feature_balance(g).lambda_cs;
  const Evaluated ev = evaluate_model(ctx, model.params, model.config, lambda_cs);
  return {node_scores(ev.x_hat, ev.a_hat, g, lambda_cs), ev.losses};
}

// -- persistence -------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'N', 'K', 'G', 'D'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class T>
  void integer(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void real(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) {
    integer<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void matrix(const std::string& name, const Matrix& m) {
    integer<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    integer<std::uint64_t>(m.rows());
    integer<std::uint64_t>(m.cols());
    for (double v : m.data()) real(v);
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError("model file is truncated");
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  template <class T>
  T integer() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  double real() { return std::bit_cast<double>(integer<std::uint64_t>()); }
  std::string text() {
    const auto n = integer<std::uint64_t>();
    need(n);
    return bytes(static_cast<std::size_t>(n));
  }
  std::pair<std::string, Matrix> matrix() {
    std::string name = bytes(integer<std::uint32_t>());
    const auto rows = integer<std::uint64_t>();
    const auto cols = integer<std::uint64_t>();
    if (cols != 0 && rows > (buf_.size() - pos_) / 8 / cols) throw FormatError("model file is truncated");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = real();
    return {std::move(name), std::move(m)};
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

Matrix breakdown_row(const LossBreakdown& b) {
  const auto v = to_vector(b);
  return Matrix(1, v.size(), v);
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, 4);
  w.integer<std::uint32_t>(kModelFormatVersion);
  w.text(format_config(model.config));
  w.integer<std::uint64_t>(model.input_dim);
  w.real(model.lambda_cs);
  w.integer<std::uint64_t>(model.params.size() + 3);
  w.matrix("@initial", breakdown_row(model.initial));
  w.matrix("@final", breakdown_row(model.final));
  Matrix history(model.history.size(), std::size(kLossNames));
  for (std::size_t e = 0; e < model.history.size(); ++e) {
    const auto v = to_vector(model.history[e]);
    std::copy(v.begin(), v.end(), history.row(e).begin());
  }
  w.matrix("@history", history);
  for (std::size_t i = 0; i < model.params.size(); ++i) w.matrix(model.params.name(i), model.params.value(i));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write model to " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw ParseError("failed writing model to " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open model " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError(path.string() + " is not a model file");
  const auto version = r.integer<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version) + " (this build reads version " +
                      std::to_string(kModelFormatVersion) + ")");
  }

  TrainedModel model;
  std::istringstream cfg_text(r.text());
  try {
    model.config = parse_config(cfg_text, "model config");
    validate(model.config);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("corrupt model config: ") + e.what());
  }
  model.input_dim = r.integer<std::uint64_t>();
  model.lambda_cs = r.real();
  if (model.input_dim == 0 || model.input_dim > (std::size_t{1} << 32)) throw FormatError("corrupt input dimension");
  const ParamSet expected = init_params(model.input_dim, model.config);

  const auto count = r.integer<std::uint64_t>();
  if (count != expected.size() + 3) throw FormatError("model holds an unexpected number of matrices");
  const auto read_breakdown = [&](const char* name) {
    auto [got, m] = r.matrix();
    if (got != name || m.rows() != 1 || m.cols() != std::size(kLossNames)) {
      throw FormatError(std::string("expected ") + name + " block");
    }
    return from_vector(m.data());
  };
  model.initial = read_breakdown("@initial");
  model.final = read_breakdown("@final");
  auto [history_name, history] = r.matrix();
  if (history_name != "@history" || history.cols() != std::size(kLossNames) ||
      history.rows() != model.config.epochs) {
    throw FormatError("expected an @history block with one row per epoch");
  }
  for (std::size_t e = 0; e < history.rows(); ++e) model.history.push_back(from_vector(history.row(e)));

  model.params = expected;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    auto [name, m] = r.matrix();
    if (name != expected.name(i) || !m.same_shape(expected.value(i))) {
      throw FormatError("parameter " + std::to_string(i) + " ('" + name + "') does not match the config");
    }
    if (!m.all_finite()) throw FormatError("parameter '" + name + "' holds non-finite values");
    model.params.set(i, std::move(m));
  }
  if (!r.done()) throw FormatError("trailing bytes after the last parameter");
  return model;
}

void write_history_tsv(std::ostream& out, const std::vector<LossBreakdown>& history) {
  out << "epoch";
  for (const char* name : kLossNames) out << '\t' << name;
  out << '\n';
  for (std::size_t e = 0; e < history.size(); ++e) {
    out << e;
    for (double v : to_vector(history[e])) out << '\t' << format_real(v);
    out << '\n';
  }
}

}  // namespace nkgad
