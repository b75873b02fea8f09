#include "nkgad/layers.hpp"

#include "nkgad/error.hpp"
#include "nkgad/rng.hpp"

namespace nkgad {

GraphContext make_context(const Graph& g) {
  GraphContext ctx;
  ctx.graph = &g;
  ctx.features = g.features();
  ctx.adjacency = g.adjacency();
  auto ops = filter_operators(g);
  ctx.f_low = std::move(ops.low);
  ctx.f_high = std::move(ops.high);
  ctx.gcn = gcn_propagation(g);
  ctx.attention_mask = ctx.adjacency + Matrix::identity(g.node_count());
  ctx.valid_mean = mean_validity(g);
  ctx.valid_cov = cov_validity(g);
  return ctx;
}

ParamView::ParamView(const ParamSet& params, std::span<const ad::Var> vars)
    : params_(&params), vars_(vars) {
  if (vars.size() != params.size()) throw ShapeError("ParamView: one Var per leaf required");
}

ad::Var ParamView::operator()(std::string_view name) const {
  const auto idx = params_->find(name);
  if (!idx) throw ConfigError("missing parameter '" + std::string(name) + "'");
  return vars_[*idx];
}

std::vector<ad::Var> bind_constants(ad::Tape& tape, const ParamSet& params) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.constant(params.value(i)));
  return vars;
}

void add_weight(ParamSet& params, const std::string& name, std::size_t rows, std::size_t cols,
                std::uint64_t seed) {
  params.add(name, glorot_init(rows, cols, derive_seed(seed, name)));
}

void add_mlp2(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::size_t out, std::uint64_t seed) {
  add_weight(params, prefix + ".w1", in, hidden, seed);
  params.add(prefix + ".b1", Matrix(1, hidden));
  add_weight(params, prefix + ".w2", hidden, out, seed);
  params.add(prefix + ".b2", Matrix(1, out));
}

ad::Var mlp2(const ParamView& p, const std::string& prefix, ad::Var x) {
  const ad::Var hidden = ad::relu(ad::add_row(ad::matmul(x, p(prefix + ".w1")), p(prefix + ".b1")));
  return ad::add_row(ad::matmul(hidden, p(prefix + ".w2")), p(prefix + ".b2"));
}

void add_attention(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                   std::uint64_t seed) {
  add_weight(params, prefix + ".W", in, out, seed);
  add_weight(params, prefix + ".a", 2 * out, 1, seed);
}

Attention attention(const ParamView& p, const std::string& prefix, ad::Var h, const Matrix& mask) {
  const ad::Var w = p(prefix + ".W");
  const ad::Var a = p(prefix + ".a");
  const std::size_t out = w.cols();
  const ad::Var m = ad::matmul(h, w);
  const ad::Var src = ad::matmul(m, ad::slice_rows(a, 0, out));
  const ad::Var dst = ad::matmul(m, ad::slice_rows(a, out, out));
  const ad::Var alpha = ad::row_softmax(ad::leaky_relu(ad::outer_sum(src, dst), 0.2), mask);
  return {alpha, ad::matmul(alpha, m)};
}

ad::Var propagate(const Matrix& prop, ad::Var h, ad::Var w) {
  return ad::matmul(h.tape()->constant(prop), ad::matmul(h, w));
}

ad::Var dropout(ad::Var h, double rate, std::uint64_t seed) {
  if (rate == 0.0) return h;
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  Rng rng(seed);
  Matrix mask(h.rows(), h.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (double& v : mask.data()) v = rng.uniform() < rate ? 0.0 : keep;
  return ad::mul(h, h.tape()->constant(std::move(mask)));
}

}  // namespace nkgad
