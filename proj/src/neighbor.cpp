#include "nkgad/neighbor.hpp"

#include "nkgad/error.hpp"

namespace nkgad {

void add_neighbor_head_params(ParamSet& params, std::size_t d, std::uint64_t seed) {
  for (const char* head : {"nr.self", "nr.mu", "nr.sigma"}) add_mlp2(params, head, d, d, d, seed);
}

void add_center_params(ParamSet& params, std::size_t d, std::uint64_t seed) {
  add_attention(params, "ca.mean", d, d, seed);
  add_attention(params, "ca.cov", d * d, d * d, seed);
  add_mlp2(params, "ca.mean_out", d, d, d, seed);
  add_mlp2(params, "ca.cov_out", d * d, d * d, d * d, seed);
}

PredictedVars predict_stats(const GraphContext& ctx, const ParamView& p, const EncoderVars& enc) {
  PredictedVars out;
  out.h0_hat = mlp2(p, "nr.self", enc.z);
  out.mu_hat = mlp2(p, "nr.mu", enc.h_low);
  out.sigma_hat = mlp2(p, "nr.sigma", enc.h_high);
  out.cov_hat = graph_ops::centered_moments(*ctx.graph, out.h0_hat, out.mu_hat).covariance;
  return out;
}

TargetVars neighbor_targets(const GraphContext& ctx, ad::Var h0) {
  const ad::Var mu = graph_ops::neighbor_mean(*ctx.graph, h0);
  const auto moments = graph_ops::centered_moments(*ctx.graph, h0, mu);
  return {mu, ad::sqrt(moments.variance), moments.covariance};
}

namespace {

ad::Var masked_distance(ad::Var a, ad::Var b, const std::vector<char>& mask, const char* what,
                        std::vector<std::string>& warnings) {
  bool any = false;
  for (char m : mask) any = any || m;
  if (!any) warnings.push_back(std::string("no node qualifies for the ") + what + " loss; it contributes 0");
  return ad::masked_mean(ad::row_norms(ad::sub(a, b)), mask);
}

NeighborLossVars losses_from(ad::Var fr, const PredictedVars& pred, const TargetVars& truth,
                             const std::vector<char>& valid_mean, const std::vector<char>& valid_cov) {
  NeighborLossVars out;
  out.fr = fr;
  out.mu = masked_distance(pred.mu_hat, truth.mu, valid_mean, "neighbor mean", out.warnings);
  out.sigma = masked_distance(pred.sigma_hat, truth.sigma, valid_cov, "neighbor std", out.warnings);
  out.cov = masked_distance(pred.cov_hat, truth.cov, valid_cov, "neighbor covariance", out.warnings);
  out.nr = ad::add(ad::add(out.fr, out.mu), ad::add(out.sigma, out.cov));
  return out;
}

// d^2 x d^2 permutation taking vec(M) to vec(M^T).
Matrix transpose_permutation(std::size_t d) {
  Matrix t(d * d, d * d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) t(a * d + b, b * d + a) = 1.0;
  return t;
}

}  // namespace

NeighborLossVars neighbor_losses(const GraphContext& ctx, ad::Var h0, const PredictedVars& pred,
                                 const TargetVars& truth) {
  const ad::Var fr = ad::mean(ad::row_norms(ad::sub(pred.h0_hat, h0)));
  return losses_from(fr, pred, truth, ctx.valid_mean, ctx.valid_cov);
}

CenterVars center_aggregate(const GraphContext& ctx, const ParamView& p, const PredictedVars& pred,
                            ad::Var z, double lambda_ca) {
  if (!(lambda_ca >= 0.0 && lambda_ca <= 1.0)) throw ConfigError("lambda_ca must lie in [0, 1]");
  const std::size_t d = z.cols();
  if (!pred.mu_hat.value().same_shape(z.value()) || pred.cov_hat.cols() != d * d ||
      pred.cov_hat.rows() != z.rows()) {
    throw ShapeError("center_aggregate: predicted statistics do not match z");
  }
  ad::Tape& tape = *z.tape();
  CenterVars out;
  const Attention mean_attn = attention(p, "ca.mean", pred.mu_hat, ctx.attention_mask);
  const Attention cov_attn = attention(p, "ca.cov", pred.cov_hat, ctx.attention_mask);
  out.alpha_mean = mean_attn.alpha;
  out.alpha_cov = cov_attn.alpha;
  out.mu_tilde = mlp2(p, "ca.mean_out", ad::relu(mean_attn.messages));
  const ad::Var flat = ad::row_normalize(mlp2(p, "ca.cov_out", ad::relu(cov_attn.messages)));
  const ad::Var flipped = ad::matmul(flat, tape.constant(transpose_permutation(d)));
  out.sigma_tilde = ad::scale(ad::add(flat, flipped), 0.5);
  const ad::Var mixed = ad::row_vecmat(out.mu_tilde, out.sigma_tilde, d);
  out.h_tilde = ad::add(ad::scale(z, 1.0 - lambda_ca), ad::scale(mixed, lambda_ca));
  return out;
}

// -- value-level entry points ------------------------------------------------

SelfReconstruction reconstruct_self(const Matrix& z, const Matrix& h0, const ParamSet& params) {
  if (!z.same_shape(h0)) throw ShapeError("reconstruct_self: z and h0 differ in shape");
  ad::Tape tape;
  const auto vars = bind_constants(tape, params);
  const ad::Var h0_hat = mlp2(ParamView(params, vars), "nr.self", tape.constant(z));
  const ad::Var loss = ad::mean(ad::row_norms(ad::sub(h0_hat, tape.constant(h0))));
  return {h0_hat.value(), loss.scalar()};
}

PredictedStats predict_stats(const Graph& g, const EncoderOutput& enc, const ParamSet& params) {
  const GraphContext ctx = make_context(g);
  ad::Tape tape;
  const auto vars = bind_constants(tape, params);
  const EncoderVars ev{tape.constant(enc.h0), tape.constant(enc.h_low), tape.constant(enc.h_high),
                       tape.constant(enc.z)};
  const PredictedVars pv = predict_stats(ctx, ParamView(params, vars), ev);
  return {pv.h0_hat.value(), pv.mu_hat.value(), pv.sigma_hat.value(),
          graph_ops::unflatten_rows(pv.cov_hat.value(), enc.z.cols())};
}

NeighborLosses neighbor_losses(const PredictedStats& pred, const NeighborStats& truth, double loss_fr) {
  if (!pred.mu_hat.same_shape(truth.mean) || !pred.sigma_hat.same_shape(truth.std) ||
      pred.cov_hat.size() != truth.cov.size()) {
    throw ShapeError("neighbor_losses: predictions and targets differ in shape");
  }
  ad::Tape tape;
  const PredictedVars pv{tape.constant(pred.h0_hat), tape.constant(pred.mu_hat),
                         tape.constant(pred.sigma_hat),
                         tape.constant(graph_ops::flatten_rows(pred.cov_hat))};
  const TargetVars tv{tape.constant(truth.mean), tape.constant(truth.std),
                      tape.constant(graph_ops::flatten_rows(truth.cov))};
  const NeighborLossVars lv =
      losses_from(tape.constant(Matrix(1, 1, loss_fr)), pv, tv, truth.valid_mean, truth.valid_cov);
  return {lv.mu.scalar(), lv.sigma.scalar(), lv.cov.scalar(), lv.nr.scalar(), lv.warnings};
}

CenterOutput center_aggregate(const PredictedStats& pred, const Matrix& z, const Graph& g,
                              const ParamSet& params, double lambda_ca) {
  const GraphContext ctx = make_context(g);
  ad::Tape tape;
  const auto vars = bind_constants(tape, params);
  const Matrix cov_flat = graph_ops::flatten_rows(pred.cov_hat);
  const PredictedVars pv{tape.constant(pred.h0_hat), tape.constant(pred.mu_hat),
                         tape.constant(pred.sigma_hat), tape.constant(cov_flat)};
  const CenterVars cv = center_aggregate(ctx, ParamView(params, vars), pv, tape.constant(z), lambda_ca);
  return {cv.alpha_mean.value(), cv.alpha_cov.value(), cv.mu_tilde.value(),
          graph_ops::unflatten_rows(cv.sigma_tilde.value(), z.cols()), cv.h_tilde.value()};
}

}  // namespace nkgad
