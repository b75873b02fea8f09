#pragma once

#include <cstdint>

#include "nkgad/layers.hpp"

namespace nkgad {

enum class EncoderKind {
  joint,      // low-pass and high-pass filter branches mixed by lambda_joint
  plain_gcn,  // two self-loop GCN layers with ReLU between them
};

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 16;
  std::size_t low_layers = 1;
  std::size_t high_layers = 1;
  EncoderKind kind = EncoderKind::joint;
};

/// Adds `enc.input` (input_dim x d) and either `enc.low.<l>`/`enc.high.<l>`
/// or `enc.gcn.0`/`enc.gcn.1`, all d x d.
void add_encoder_params(ParamSet& params, const EncoderShape& shape, std::uint64_t seed);

struct EncodeOptions {
  double lambda_joint = 0.5;
  double dropout = 0.0;
  bool training = false;
  std::uint64_t seed = 0;  // dropout masks only
};

struct EncoderVars {
  ad::Var h0;
  ad::Var h_low;
  ad::Var h_high;
  ad::Var z;
};

/// H0 = X W_in; H_low^l = f_low H_low^{l-1} W_low^l (no activation), same for
/// the high branch; Z = (1 - lambda) H_low + lambda H_high. The plain GCN
/// kind reports its output as h_low, h_high and z alike. `h0` is taken
/// before dropout.
EncoderVars encode(const GraphContext& ctx, const ParamView& p, const EncodeOptions& opts);

struct EncoderOutput {
  Matrix h0;
  Matrix h_low;
  Matrix h_high;
  Matrix z;
};

EncoderOutput encode(const Graph& g, const ParamSet& params, const EncodeOptions& opts);

}  // namespace nkgad
