#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nkgad/neighbor.hpp"
#include "nkgad/reconstruction.hpp"

namespace nkgad {

enum class Variant {
  full,     // joint encoder, neighbor reconstruction, center aggregation
  dagger,   // plain GCN encoder, reconstruction only
  ddagger,  // joint encoder, reconstruction only
  section,  // joint encoder and neighbor reconstruction, no center aggregation
};

Variant parse_variant(const std::string& text);
std::string to_string(Variant v);

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double dropout = 0.3;
  std::size_t hidden_dim = 16;
  std::size_t low_layers = 1;
  std::size_t high_layers = 1;
  double lambda_joint = 0.5;
  double lambda_ca = 0.5;
  /// Multiplies the neighbor reconstruction loss in the training objective.
  double nr_weight = 1.0;
  LayerKind decoder_att = LayerKind::gat;
  LayerKind decoder_str = LayerKind::gcn;
  std::uint64_t seed = 0;
  Variant variant = Variant::full;
};

/// Throws ConfigError naming the first violated field.
void validate(const TrainConfig& cfg);

/// Sets one field from its text form; unknown keys and bad values throw
/// ConfigError.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
/// `key=value`.
void apply_override(TrainConfig& cfg, const std::string& assignment);
/// Line-oriented `key = value` text with `#` comments. Not validated, so
/// later overrides can still repair a value; train() validates.
TrainConfig parse_config(std::istream& in, const std::string& source = "config");
TrainConfig load_config(const std::filesystem::path& path);
std::string format_config(const TrainConfig& cfg);

struct LossBreakdown {
  double fr = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double cov = 0.0;
  double nr = 0.0;
  double att = 0.0;
  double str = 0.0;
  double rec = 0.0;
  double total = 0.0;
};

inline constexpr const char* kLossNames[] = {"fr", "mu", "sigma", "cov", "nr", "att", "str", "rec", "total"};
std::vector<double> to_vector(const LossBreakdown& b);
LossBreakdown from_vector(std::span<const double> v);

struct TrainedModel {
  ParamSet params;
  TrainConfig config;
  std::size_t input_dim = 0;
  double lambda_cs = 0.5;
  LossBreakdown initial;  // evaluation mode, before the first step
  LossBreakdown final;    // evaluation mode, after the last step
  std::vector<LossBreakdown> history;  // training mode, one entry per epoch
  std::vector<std::string> warnings;   // not persisted
};

/// Parameters for `cfg` with every leaf seeded from (cfg.seed, leaf name).
ParamSet init_params(std::size_t input_dim, const TrainConfig& cfg);

struct ForwardVars {
  EncoderVars enc;
  ad::Var h_tilde;
  DecodedVars decoded;
  LossBreakdown losses;
  ad::Var objective;
  std::vector<std::string> warnings;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

/// One pass of the configured variant. Throws NumericError prefixed with
/// the failing stage.
ForwardVars forward(const GraphContext& ctx, const ParamView& p, const TrainConfig& cfg, double lambda_cs,
                    const ForwardOptions& opts);

using EpochCallback = std::function<void(std::size_t epoch, const LossBreakdown&)>;

/// One full-graph AdamW step per epoch. Non-finite values abort with the
/// epoch and stage named.
TrainedModel train(const Graph& g, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct ScoreReport {
  std::vector<double> scores;
  LossBreakdown losses;
};

/// Evaluation mode (no dropout).
ScoreReport score(const TrainedModel& model, const Graph& g);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const TrainedModel& model, const std::filesystem::path& path);
/// FormatError on a bad magic, unknown version or truncated/corrupt file.
TrainedModel load_model(const std::filesystem::path& path);

/// `epoch<TAB>fr<TAB>...<TAB>total` rows after a header line.
void write_history_tsv(std::ostream& out, const std::vector<LossBreakdown>& history);

}  // namespace nkgad
