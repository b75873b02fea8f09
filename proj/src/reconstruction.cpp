#include "nkgad/reconstruction.hpp"

#include <cmath>

#include "nkgad/error.hpp"

namespace nkgad {

LayerKind parse_layer_kind(const std::string& text) {
  if (text == "gat") return LayerKind::gat;
  if (text == "gcn") return LayerKind::gcn;
  throw ConfigError("unknown decoder kind '" + text + "' (expected gat or gcn)");
}

std::string to_string(LayerKind kind) { return kind == LayerKind::gat ? "gat" : "gcn"; }

namespace {

void add_layer(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, LayerKind kind,
               std::uint64_t seed) {
  if (kind == LayerKind::gat) {
    add_attention(params, prefix, in, out, seed);
  } else {
    add_weight(params, prefix + ".W", in, out, seed);
  }
}

ad::Var graph_layer(const GraphContext& ctx, const ParamView& p, const std::string& prefix, ad::Var h) {
  if (p.has(prefix + ".a")) return attention(p, prefix, h, ctx.attention_mask).messages;
  return propagate(ctx.gcn, h, p(prefix + ".W"));
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

}  // namespace

void add_decoder_params(ParamSet& params, std::size_t d, std::size_t dim, LayerKind att, LayerKind str,
                        std::uint64_t seed) {
  add_layer(params, "dec.att", d, dim, att, seed);
  add_layer(params, "dec.str", d, d, str, seed);
}

DecodedVars decode(const GraphContext& ctx, const ParamView& p, ad::Var h_tilde) {
  if (h_tilde.rows() != ctx.features.rows()) throw ShapeError("decode: h_tilde row count differs from node count");
  DecodedVars out;
  out.x_hat = graph_layer(ctx, p, "dec.att", h_tilde);
  if (out.x_hat.cols() != ctx.features.cols()) throw ShapeError("decode: attribute decoder width differs from dim");
  out.embedding = graph_layer(ctx, p, "dec.str", h_tilde);
  out.a_hat = ad::sigmoid(ad::matmul(out.embedding, ad::transpose(out.embedding)));
  return out;
}

ReconLossVars reconstruction_loss(const GraphContext& ctx, ad::Var x_hat, ad::Var a_hat, double lambda_cs) {
  if (!x_hat.value().same_shape(ctx.features) || !a_hat.value().same_shape(ctx.adjacency)) {
    throw ShapeError("reconstruction_loss: reconstructions differ in shape from the graph");
  }
  ad::Tape& tape = *x_hat.tape();
  ReconLossVars out;
  out.lambda_cs = lambda_cs;
  out.att = ad::mean(ad::row_norms(ad::sub(x_hat, tape.constant(ctx.features))));
  out.str = ad::mean(ad::row_norms(ad::sub(a_hat, tape.constant(ctx.adjacency))));
  out.rec = ad::add(ad::scale(out.att, lambda_cs), ad::scale(out.str, 1.0 - lambda_cs));
  return out;
}

Balance structure_feature_balance(const Graph& g) {
  const double sa = population_std(g.adjacency().data());
  const double sx = population_std(g.features().data());
  if (!(sa + sx > 0.0)) return {0.5, true};
  return {sa / (sa + sx), false};
}

Decoded decode(const Matrix& h_tilde, const Graph& g, const ParamSet& params) {
  const GraphContext ctx = make_context(g);
  ad::Tape tape;
  const auto vars = bind_constants(tape, params);
  const DecodedVars out = decode(ctx, ParamView(params, vars), tape.constant(h_tilde));
  return {out.x_hat.value(), out.a_hat.value()};
}

ReconLosses reconstruction_loss(const Matrix& x_hat, const Matrix& a_hat, const Graph& g) {
  const GraphContext ctx = make_context(g);
  const Balance balance = structure_feature_balance(g);
  ad::Tape tape;
  const ReconLossVars lv = reconstruction_loss(ctx, tape.constant(x_hat), tape.constant(a_hat), balance.lambda_cs);
  ReconLosses out{balance.lambda_cs, lv.att.scalar(), lv.str.scalar(), lv.rec.scalar(), {}};
  if (balance.degenerate) out.warnings.push_back("adjacency and features are both constant; lambda_cs set to 0.5");
  return out;
}

std::vector<double> node_scores(const Matrix& x_hat, const Matrix& a_hat, const Graph& g, double lambda_cs) {
  const Matrix& x = g.features();
  const std::size_t n = g.node_count();
  if (!x_hat.same_shape(x) || a_hat.rows() != n || a_hat.cols() != n) {
    throw ShapeError("node_scores: reconstructions differ in shape from the graph");
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double att = 0.0, str = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) att += (x_hat(i, j) - x(i, j)) * (x_hat(i, j) - x(i, j));
    const auto nb = g.neighbors(i);
    std::size_t next = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double a = 0.0;
      if (next < nb.size() && nb[next] == j) {
        a = 1.0;
        ++next;
      }
      str += (a_hat(i, j) - a) * (a_hat(i, j) - a);
    }
    scores[i] = lambda_cs * std::sqrt(att) + (1.0 - lambda_cs) * std::sqrt(str);
  }
  return scores;
}

double total_loss(double loss_rec, double loss_nr) {
  if (!(loss_rec >= 0.0) || !(loss_nr >= 0.0)) throw ConfigError("total_loss: losses must be nonnegative");
  return loss_rec + loss_nr;
}

}  // namespace nkgad
