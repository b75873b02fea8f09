#include "nkgad/encoder.hpp"

#include "nkgad/error.hpp"
#include "nkgad/rng.hpp"

namespace nkgad {

void add_encoder_params(ParamSet& params, const EncoderShape& shape, std::uint64_t seed) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0) throw ConfigError("encoder dimensions must be positive");
  const std::size_t d = shape.hidden_dim;
  add_weight(params, "enc.input", shape.input_dim, d, seed);
  if (shape.kind == EncoderKind::plain_gcn) {
    add_weight(params, "enc.gcn.0", d, d, seed);
    add_weight(params, "enc.gcn.1", d, d, seed);
    return;
  }
  if (shape.low_layers == 0 || shape.high_layers == 0) throw ConfigError("filter depths must be at least 1");
  for (std::size_t l = 0; l < shape.low_layers; ++l) add_weight(params, "enc.low." + std::to_string(l), d, d, seed);
  for (std::size_t l = 0; l < shape.high_layers; ++l) add_weight(params, "enc.high." + std::to_string(l), d, d, seed);
}

namespace {

ad::Var filter_branch(const ParamView& p, const EncodeOptions& opts, const std::string& branch,
                      const Matrix& op, ad::Var h) {
  ad::Tape& tape = *h.tape();
  const ad::Var f = tape.constant(op);
  for (std::size_t l = 0;; ++l) {
    const std::string name = "enc." + branch + "." + std::to_string(l);
    if (!p.has(name)) {
      if (l == 0) throw ConfigError("encoder has no '" + branch + "' layers");
      return h;
    }
    h = ad::matmul(f, ad::matmul(h, p(name)));
    h = dropout(h, opts.dropout, derive_seed(opts.seed, name));
  }
}

}  // namespace

EncoderVars encode(const GraphContext& ctx, const ParamView& p, const EncodeOptions& opts) {
  if (!(opts.lambda_joint >= 0.0 && opts.lambda_joint <= 1.0)) {
    throw ConfigError("lambda_joint must lie in [0, 1]");
  }
  if (!(opts.dropout >= 0.0 && opts.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  const ad::Var w_in = p("enc.input");
  if (w_in.rows() != ctx.features.cols()) {
    throw ShapeError("encode: graph has " + std::to_string(ctx.features.cols()) +
                     " features, encoder expects " + std::to_string(w_in.rows()));
  }
  ad::Tape& tape = *w_in.tape();
  const ad::Var h0 = ad::matmul(tape.constant(ctx.features), w_in);
  const double rate = opts.training ? opts.dropout : 0.0;
  const ad::Var h = dropout(h0, rate, derive_seed(opts.seed, "enc.input"));

  if (p.has("enc.gcn.0")) {
    ad::Var hidden = ad::relu(propagate(ctx.gcn, h, p("enc.gcn.0")));
    hidden = dropout(hidden, rate, derive_seed(opts.seed, "enc.gcn.0"));
    const ad::Var z = propagate(ctx.gcn, hidden, p("enc.gcn.1"));
    return {h0, z, z, z};
  }

  EncodeOptions inner = opts;
  inner.dropout = rate;
  const ad::Var low = filter_branch(p, inner, "low", ctx.f_low, h);
  const ad::Var high = filter_branch(p, inner, "high", ctx.f_high, h);
  const ad::Var z = ad::add(ad::scale(low, 1.0 - opts.lambda_joint), ad::scale(high, opts.lambda_joint));
  return {h0, low, high, z};
}

EncoderOutput encode(const Graph& g, const ParamSet& params, const EncodeOptions& opts) {
  const GraphContext ctx = make_context(g);
  ad::Tape tape;
  const auto vars = bind_constants(tape, params);
  const EncoderVars out = encode(ctx, ParamView(params, vars), opts);
  return {out.h0.value(), out.h_low.value(), out.h_high.value(), out.z.value()};
}

}  // namespace nkgad
