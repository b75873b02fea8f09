#pragma once

// Building blocks shared by the encoder, the neighbor-knowledge heads and
// the decoders: cached graph operators, name-based parameter lookup, and
// the perceptron / attention / propagation layers.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nkgad/autodiff.hpp"
#include "nkgad/graph.hpp"
#include "nkgad/params.hpp"

namespace nkgad {

/// Dense operators derived once per graph and reused across epochs.
struct GraphContext {
  const Graph* graph = nullptr;
  Matrix features;
  Matrix adjacency;
  Matrix f_low;
  Matrix f_high;
  Matrix gcn;             // D~^{-1/2}(A+I)D~^{-1/2}
  Matrix attention_mask;  // A + I
  std::vector<char> valid_mean;
  std::vector<char> valid_cov;
};

GraphContext make_context(const Graph& g);

/// Resolves parameter names to the tape handles bound for a ParamSet.
class ParamView {
 public:
  ParamView(const ParamSet& params, std::span<const ad::Var> vars);

  ad::Var operator()(std::string_view name) const;
  bool has(std::string_view name) const { return params_->find(name).has_value(); }
  const ParamSet& params() const { return *params_; }

 private:
  const ParamSet* params_;
  std::span<const ad::Var> vars_;
};

/// Binds every leaf of `params` as a constant on `tape`.
std::vector<ad::Var> bind_constants(ad::Tape& tape, const ParamSet& params);

/// Glorot-initialized weight seeded from (seed, name).
void add_weight(ParamSet& params, const std::string& name, std::size_t rows, std::size_t cols,
                std::uint64_t seed);

/// Two-layer perceptron `prefix.{w1,b1,w2,b2}`: in -> hidden (ReLU) -> out.
void add_mlp2(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t hidden,
              std::size_t out, std::uint64_t seed);
ad::Var mlp2(const ParamView& p, const std::string& prefix, ad::Var x);

/// Attention layer `prefix.{W,a}` with W: in x out and a: 2out x 1.
void add_attention(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                   std::uint64_t seed);

struct Attention {
  ad::Var alpha;     // n x n, rows sum to 1 over the mask
  ad::Var messages;  // alpha * (h W), no activation
};
/// alpha_ij = softmax_j LeakyReLU(a^T [W h_i || W h_j]) over mask(i, j) != 0.
Attention attention(const ParamView& p, const std::string& prefix, ad::Var h, const Matrix& mask);

/// prop * h * w.
ad::Var propagate(const Matrix& prop, ad::Var h, ad::Var w);

/// Inverted dropout with a mask drawn from `seed`; identity when rate is 0.
ad::Var dropout(ad::Var h, double rate, std::uint64_t seed);

}  // namespace nkgad
