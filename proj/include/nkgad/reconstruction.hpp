#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nkgad/layers.hpp"

namespace nkgad {

enum class LayerKind { gat, gcn };

LayerKind parse_layer_kind(const std::string& text);
std::string to_string(LayerKind kind);

/// `dec.att` maps d -> dim, `dec.str` maps d -> d. A gat layer owns `.W` and
/// `.a`; a gcn layer owns `.W` only.
void add_decoder_params(ParamSet& params, std::size_t d, std::size_t dim, LayerKind att, LayerKind str,
                        std::uint64_t seed);

struct DecodedVars {
  ad::Var x_hat;
  ad::Var embedding;  // E
  ad::Var a_hat;      // sigmoid(E E^T)
};

/// Decoder kinds are read off the parameters (a gat layer has `.a`).
DecodedVars decode(const GraphContext& ctx, const ParamView& p, ad::Var h_tilde);

struct ReconLossVars {
  double lambda_cs = 0.5;
  ad::Var att;
  ad::Var str;
  ad::Var rec;
};

ReconLossVars reconstruction_loss(const GraphContext& ctx, ad::Var x_hat, ad::Var a_hat, double lambda_cs);

/// std(A) / (std(A) + std(X)) with population std over all entries of the
/// dense adjacency and of the features; 0.5 (and `degenerate` set) when
/// both are constant.
struct Balance {
  double lambda_cs = 0.5;
  bool degenerate = false;
};
Balance structure_feature_balance(const Graph& g);

// -- value-level entry points ------------------------------------------------

struct Decoded {
  Matrix x_hat;
  Matrix a_hat;
};
Decoded decode(const Matrix& h_tilde, const Graph& g, const ParamSet& params);

struct ReconLosses {
  double lambda_cs = 0.5;
  double att = 0.0;
  double str = 0.0;
  double rec = 0.0;
  std::vector<std::string> warnings;
};
ReconLosses reconstruction_loss(const Matrix& x_hat, const Matrix& a_hat, const Graph& g);

/// s_i = lambda ||x_hat_i - x_i|| + (1 - lambda) ||a_hat_i - a_i||.
std::vector<double> node_scores(const Matrix& x_hat, const Matrix& a_hat, const Graph& g, double lambda_cs);

/// loss_rec + loss_nr; ConfigError on a negative input.
double total_loss(double loss_rec, double loss_nr);

}  // namespace nkgad
