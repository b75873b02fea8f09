#pragma once

// Tape-based reverse-mode differentiation over dense matrices.
//
// Every primitive records its value and a closure that pushes the output
// gradient to its parents. Values are checked for NaN/Inf as they are
// produced; a failure raises NumericError naming the primitive.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nkgad/matrix.hpp"
#include "nkgad/params.hpp"

namespace nkgad::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  double scalar() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the tape and the id of the node being differentiated; the
  /// incoming gradient is grad(self).
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Var constant(Matrix value);
  /// A leaf that receives a gradient on backward().
  Var variable(Matrix value);

  /// Seeds d(output)/d(output) = 1 and propagates to every reachable node.
  /// `output` must be 1x1.
  void backward(const Var& output);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// grad(id) += g; ignored for nodes that do not require gradients.
  void accumulate(std::size_t id, const Matrix& g);
  /// Mutable gradient storage of `id`, zero-initialized on first use.
  Matrix& grad_buffer(std::size_t id);

  /// Appends an op node. `backward` is dropped if no parent needs a gradient.
  Var record(const char* op, Matrix value, std::initializer_list<Var> parents, Backward backward);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    const char* op = "";
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// -- primitives ------------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds the 1 x m row `bias` to every row of `a`.
Var add_row(Var a, Var bias);
Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var sigmoid(Var a);
Var exp(Var a);
Var square(Var a);
/// Elementwise sqrt. The value is exact; the derivative uses
/// 0.5 / sqrt(x + kSqrtGuard) so it stays finite at 0.
Var sqrt(Var a);
Var sum(Var a);
Var mean(Var a);
/// Softmax along each row restricted to entries where mask != 0; masked
/// entries take logit kMaskedLogit and come out as 0.
Var row_softmax(Var a, const Matrix& mask);
/// n x 1 column of row-wise L2 norms (guarded derivative as in sqrt).
Var row_norms(Var a);
/// 1 x 1 Frobenius norm (guarded derivative as in sqrt).
Var frobenius_norm(Var a);
/// Each row divided by (its L2 norm + eps).
Var row_normalize(Var a, double eps = 1e-12);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var concat_cols(Var a, Var b);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Row k of the result is row index[k] of `a`.
Var gather_rows(Var a, std::span<const std::size_t> index);
/// Row segment[k] of the (rows x cols) result accumulates row k of `a`.
Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t rows);
/// Mean of the entries of column `v` where mask is set; 0 when none is.
Var masked_mean(Var v, std::span<const char> mask);
/// Row i of `a` times the scalar s(i, 0).
Var row_scale(Var a, Var s);
/// Row i is vec(a_i b_i^T) in row-major order: n x (p*q).
Var row_outer(Var a, Var b);
/// Row i is u_i (1 x p) times the p x q matrix stored row-major in m_i.
Var row_vecmat(Var u, Var m, std::size_t q);
/// out(i, j) = s(i, 0) + t(j, 0).
Var outer_sum(Var s, Var t);

inline constexpr double kSqrtGuard = 1e-12;
inline constexpr double kMaskedLogit = -1e9;

// -- whole-program evaluation ---------------------------------------------

/// A scalar-valued computation over the leaves of a ParamSet. The span holds
/// one Var per leaf, in ParamSet order.
using Program = std::function<Var(Tape&, std::span<const Var> params)>;

struct Evaluation {
  double value = 0.0;
  GradSet grads;
};

/// Runs `program` with trainable leaves as tape variables and returns the
/// value together with the gradient of every leaf.
Evaluation evaluate_with_gradients(const Program& program, const ParamSet& params);

/// Runs `program` with every leaf bound as a constant.
double evaluate(const Program& program, const ParamSet& params);

struct GradCheckReport {
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

/// Compares reverse-mode gradients with central differences entry by entry.
/// Entries where both gradients are below `min_magnitude` are skipped.
GradCheckReport check_gradients(const Program& program, const ParamSet& params,
                                double step = 1e-5, double tolerance = 1e-4,
                                double min_magnitude = 1e-6);

}  // namespace nkgad::ad
