#pragma once

// Neighbor reconstruction (self-feature MLP, mean/std heads, predicted
// covariance and their losses) and center aggregation.

#include <cstdint>
#include <string>
#include <vector>

#include "nkgad/encoder.hpp"

namespace nkgad {

/// `nr.self`, `nr.mu`, `nr.sigma`: 2-layer d -> d -> d perceptrons.
void add_neighbor_head_params(ParamSet& params, std::size_t d, std::uint64_t seed);

/// `ca.mean` (attention d -> d), `ca.cov` (attention d^2 -> d^2),
/// `ca.mean_out` (d -> d -> d) and `ca.cov_out` (d^2 -> d^2 -> d^2).
void add_center_params(ParamSet& params, std::size_t d, std::uint64_t seed);

struct PredictedVars {
  ad::Var h0_hat;
  ad::Var mu_hat;
  ad::Var sigma_hat;
  ad::Var cov_hat;  // n x d^2, row i = vec(Sigma_hat_i)
};

struct TargetVars {
  ad::Var mu;
  ad::Var sigma;
  ad::Var cov;  // n x d^2
};

struct NeighborLossVars {
  ad::Var fr;
  ad::Var mu;
  ad::Var sigma;
  ad::Var cov;
  ad::Var nr;
  std::vector<std::string> warnings;
};

struct CenterVars {
  ad::Var alpha_mean;
  ad::Var alpha_cov;
  ad::Var mu_tilde;
  ad::Var sigma_tilde;  // n x d^2, symmetric per row
  ad::Var h_tilde;
};

PredictedVars predict_stats(const GraphContext& ctx, const ParamView& p, const EncoderVars& enc);

/// True neighbor mean, std and covariance of `h0`, kept on the tape.
TargetVars neighbor_targets(const GraphContext& ctx, ad::Var h0);

/// fr over every node; mu over degree >= 1; sigma and cov over degree >= 2.
NeighborLossVars neighbor_losses(const GraphContext& ctx, ad::Var h0, const PredictedVars& pred,
                                 const TargetVars& truth);

CenterVars center_aggregate(const GraphContext& ctx, const ParamView& p, const PredictedVars& pred,
                            ad::Var z, double lambda_ca);

// -- value-level entry points ------------------------------------------------

struct SelfReconstruction {
  Matrix h0_hat;
  double loss_fr = 0.0;
};
SelfReconstruction reconstruct_self(const Matrix& z, const Matrix& h0, const ParamSet& params);

struct PredictedStats {
  Matrix h0_hat;
  Matrix mu_hat;
  Matrix sigma_hat;
  std::vector<Matrix> cov_hat;
};
PredictedStats predict_stats(const Graph& g, const EncoderOutput& enc, const ParamSet& params);

struct NeighborLosses {
  double mu = 0.0;
  double sigma = 0.0;
  double cov = 0.0;
  double nr = 0.0;
  std::vector<std::string> warnings;
};
NeighborLosses neighbor_losses(const PredictedStats& pred, const NeighborStats& truth, double loss_fr);

struct CenterOutput {
  Matrix alpha_mean;
  Matrix alpha_cov;
  Matrix mu_tilde;
  std::vector<Matrix> sigma_tilde;
  Matrix h_tilde;
};
CenterOutput center_aggregate(const PredictedStats& pred, const Matrix& z, const Graph& g,
                              const ParamSet& params, double lambda_ca);

}  // namespace nkgad
