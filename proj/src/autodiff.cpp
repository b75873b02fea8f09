#include "nkgad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nkgad/error.hpp"

namespace nkgad::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

void require_same(const Var& a, const Var& b, const char* op) {
  require(a.value().same_shape(b.value()), op,
          "shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
}

Matrix map(const Matrix& x, auto&& f) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

// Unary elementwise op whose derivative depends on input and output value.
Var elementwise(const char* op, Var a, auto&& f, auto&& df) {
  Tape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(op, map(a.value(), f), {a}, [ia, df](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

double guarded_half_inv_sqrt(double x) { return 0.5 / std::sqrt(x + kSqrtGuard); }

}  // namespace

const Matrix& Var::value() const {
  if (!tape_) throw CapabilityError("Var: use of an unbound variable");
  return tape_->value(id_);
}

const Matrix& Var::grad() const {
  if (!tape_) throw CapabilityError("Var: use of an unbound variable");
  return tape_->grad(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("Var::scalar: value is " + shape_str(v) + ", expected 1x1");
  }
  return v[0];
}

Var Tape::constant(Matrix value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input value");
  nodes_.push_back({std::move(value), {}, "constant", false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  if (!value.all_finite()) throw NumericError("variable: non-finite input value");
  nodes_.push_back({std::move(value), {}, "variable", true, {}});
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t id) const {
  return nodes_.at(id).grad;
}

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.size() != n.value.size() || !n.grad.same_shape(n.value)) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  if (!nodes_.at(id).requires_grad) return;
  grad_buffer(id) += g;
}

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> parents,
                 Backward backward) {
  bool needs_grad = false;
  for (const Var& p : parents) {
    if (p.tape() != this) {
      throw CapabilityError(std::string(op) + ": operand belongs to a different tape");
    }
    needs_grad = needs_grad || nodes_[p.id()].requires_grad;
  }
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by primitive '") + op + "'");
  }
  nodes_.push_back({std::move(value), {}, op, needs_grad,
                    needs_grad ? std::move(backward) : Backward{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& output) {
  if (output.tape() != this) throw CapabilityError("backward: output from a different tape");
  const Matrix& out = output.value();
  if (out.rows() != 1 || out.cols() != 1) {
    throw CapabilityError("backward: output must be a 1x1 scalar, got " + shape_str(out));
  }
  for (Node& n : nodes_) n.grad = Matrix();
  grad_buffer(output.id())[0] = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

// -- primitives ------------------------------------------------------------

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul",
          "inner dimensions differ " + shape_str(a.value()) + " * " + shape_str(b.value()));
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", nkgad::matmul(a.value(), b.value()), {a, b},
                          [ia, ib](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(ia)) t.accumulate(ia, matmul_nt(g, t.value(ib)));
                            if (t.requires_grad(ib)) t.accumulate(ib, matmul_tn(t.value(ia), g));
                          });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->record("transpose", nkgad::transpose(a.value()), {a},
                          [ia](Tape& t, std::size_t self) {
                            t.accumulate(ia, nkgad::transpose(t.grad(self)));
                          });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self));
    if (t.requires_grad(ib)) t.accumulate(ib, -1.0 * t.grad(self));
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("mul", hadamard(a.value(), b.value()), {a, b},
                          [ia, ib](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(ia)) t.accumulate(ia, hadamard(g, t.value(ib)));
                            if (t.requires_grad(ib)) t.accumulate(ib, hadamard(g, t.value(ia)));
                          });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape()->record("scale", a.value() * s, {a}, [ia, s](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad(self) * s);
  });
}

Var add_row(Var a, Var bias) {
  require(bias.rows() == 1 && bias.cols() == a.cols(), "add_row",
          "bias " + shape_str(bias.value()) + " does not fit " + shape_str(a.value()));
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias.value()(0, j);
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape()->record("add_row", std::move(out), {a, bias}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g);
    if (!t.requires_grad(ib)) return;
    Matrix& gb = t.grad_buffer(ib);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
  });
}

Var relu(Var a) {
  return elementwise(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return elementwise(
      "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var a) {
  return elementwise(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return elementwise(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return elementwise(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  for (double v : a.value().data()) {
    if (v < 0.0) throw NumericError("non-finite value produced by primitive 'sqrt' (negative input)");
  }
  return elementwise(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double x, double) { return guarded_half_inv_sqrt(x); });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  const std::size_t ia = a.id();
  return a.tape()->record("sum", Matrix(1, 1, acc), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    if (!t.requires_grad(ia)) return;
    for (double& v : t.grad_buffer(ia).data()) v += g;
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, "mean", "empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var row_softmax(Var a, const Matrix& mask) {
  require(mask.same_shape(a.value()), "row_softmax",
          "mask " + shape_str(mask) + " vs input " + shape_str(a.value()));
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double v = mask(i, j) != 0.0 ? x(i, j) : kMaskedLogit;
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double v = mask(i, j) != 0.0 ? x(i, j) : kMaskedLogit;
      y(i, j) = std::exp(v - mx);
      z += y(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= z;
  }
  const std::size_t ia = a.id();
  return a.tape()->record("row_softmax", std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) {
        if (y(i, j) != 0.0) ga(i, j) += y(i, j) * (g(i, j) - dot);
      }
    }
  });
}

Var row_norms(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (double v : x.row(i)) acc += v * v;
    out(i, 0) = std::sqrt(acc);
  }
  const std::size_t ia = a.id();
  return a.tape()->record("row_norms", std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double s = g(i, 0) * 2.0 * guarded_half_inv_sqrt(y(i, 0) * y(i, 0));
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) += s * x(i, j);
    }
  });
}

Var frobenius_norm(Var a) {
  const std::size_t ia = a.id();
  const double norm = nkgad::frobenius_norm(a.value());
  return a.tape()->record("frobenius_norm", Matrix(1, 1, norm), {a}, [ia](Tape& t, std::size_t self) {
    const double y = t.value(self)[0];
    const double s = t.grad(self)[0] * 2.0 * guarded_half_inv_sqrt(y * y);
    t.accumulate(ia, t.value(ia) * s);
  });
}

Var row_normalize(Var a, double eps) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (double v : x.row(i)) acc += v * v;
    norms[i] = std::sqrt(acc);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) / (norms[i] + eps);
  }
  const std::size_t ia = a.id();
  return a.tape()->record("row_normalize", std::move(out), {a},
                          [ia, eps, norms = std::move(norms)](Tape& t, std::size_t self) {
                            const Matrix& x = t.value(ia);
                            const Matrix& g = t.grad(self);
                            Matrix& ga = t.grad_buffer(ia);
                            for (std::size_t i = 0; i < x.rows(); ++i) {
                              const double r = norms[i];
                              const double q = r + eps;
                              double dot = 0.0;
                              for (std::size_t j = 0; j < x.cols(); ++j) dot += x(i, j) * g(i, j);
                              const double c = r > 0.0 ? dot / (q * q * r) : 0.0;
                              for (std::size_t j = 0; j < x.cols(); ++j) {
                                ga(i, j) += g(i, j) / q - c * x(i, j);
                              }
                            }
                          });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  require(rows * cols == a.value().size(), "reshape",
          "cannot view " + shape_str(a.value()) + " as " + std::to_string(rows) + "x" +
              std::to_string(cols));
  const std::size_t ia = a.id();
  const std::size_t r0 = a.rows(), c0 = a.cols();
  std::vector<double> data(a.value().data().begin(), a.value().data().end());
  return a.tape()->record("reshape", Matrix(rows, cols, std::move(data)), {a},
                          [ia, r0, c0](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            t.accumulate(ia, Matrix(r0, c0, std::vector<double>(g.data().begin(),
                                                                                g.data().end())));
                          });
}

Var concat_cols(Var a, Var b) {
  require(a.rows() == b.rows(), "concat_cols",
          "row counts differ " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  const std::size_t ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b.value()(i, j);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("concat_cols", std::move(out), {a, b},
                          [ia, ib, ca, cb](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(ia)) {
                              Matrix& ga = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < g.rows(); ++i)
                                for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
                            }
                            if (t.requires_grad(ib)) {
                              Matrix& gb = t.grad_buffer(ib);
                              for (std::size_t i = 0; i < g.rows(); ++i)
                                for (std::size_t j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
                            }
                          });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  require(start + count <= a.rows(), "slice_rows", "range exceeds " + shape_str(a.value()));
  Matrix out(count, a.cols());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a.value()(start + i, j);
  const std::size_t ia = a.id();
  return a.tape()->record("slice_rows", std::move(out), {a}, [ia, start](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(start + i, j) += g(i, j);
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  require(start + count <= a.cols(), "slice_cols", "range exceeds " + shape_str(a.value()));
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a.value()(i, start + j);
  const std::size_t ia = a.id();
  return a.tape()->record("slice_cols", std::move(out), {a}, [ia, start](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, start + j) += g(i, j);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  const Matrix& x = a.value();
  Matrix out(index.size(), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < x.rows(), "gather_rows", "index out of range");
    std::copy(x.row(index[k]).begin(), x.row(index[k]).end(), out.row(k).begin());
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.tape()->record("gather_rows", std::move(out), {a},
                          [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            Matrix& ga = t.grad_buffer(ia);
                            for (std::size_t k = 0; k < idx.size(); ++k) {
                              auto dst = ga.row(idx[k]);
                              auto src = g.row(k);
                              for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                            }
                          });
}

Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t rows) {
  const Matrix& x = a.value();
  require(segment.size() == x.rows(), "segment_sum", "one segment id per input row required");
  Matrix out(rows, x.cols());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    require(segment[k] < rows, "segment_sum", "segment id out of range");
    auto dst = out.row(segment[k]);
    auto src = x.row(k);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return a.tape()->record("segment_sum", std::move(out), {a},
                          [ia, seg = std::move(seg)](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            Matrix& ga = t.grad_buffer(ia);
                            for (std::size_t k = 0; k < seg.size(); ++k) {
                              auto dst = ga.row(k);
                              auto src = g.row(seg[k]);
                              for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                            }
                          });
}

Var masked_mean(Var v, std::span<const char> mask) {
  require(v.cols() == 1 && mask.size() == v.rows(), "masked_mean",
          "expects an n x 1 column and n mask flags");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      acc += v.value()(i, 0);
      ++count;
    }
  }
  const double inv = count ? 1.0 / static_cast<double>(count) : 0.0;
  const std::size_t iv = v.id();
  std::vector<char> m(mask.begin(), mask.end());
  return v.tape()->record("masked_mean", Matrix(1, 1, acc * inv), {v},
                          [iv, inv, m = std::move(m)](Tape& t, std::size_t self) {
                            const double g = t.grad(self)[0] * inv;
                            Matrix& gv = t.grad_buffer(iv);
                            for (std::size_t i = 0; i < m.size(); ++i) {
                              if (m[i]) gv(i, 0) += g;
                            }
                          });
}

Var row_scale(Var a, Var s) {
  require(s.cols() == 1 && s.rows() == a.rows(), "row_scale",
          "scale " + shape_str(s.value()) + " does not fit " + shape_str(a.value()));
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v *= s.value()(i, 0);
  const std::size_t ia = a.id(), is = s.id();
  return a.tape()->record("row_scale", std::move(out), {a, s}, [ia, is](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ia);
    const Matrix& sv = t.value(is);
    if (t.requires_grad(ia)) {
      Matrix& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * sv(i, 0);
    }
    if (t.requires_grad(is)) {
      Matrix& gs = t.grad_buffer(is);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) acc += g(i, j) * x(i, j);
        gs(i, 0) += acc;
      }
    }
  });
}

Var row_outer(Var a, Var b) {
  require(a.rows() == b.rows(), "row_outer",
          "row counts differ " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  const std::size_t p = a.cols(), q = b.cols();
  Matrix out(a.rows(), p * q);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < p; ++k)
      for (std::size_t l = 0; l < q; ++l) out(i, k * q + l) = a.value()(i, k) * b.value()(i, l);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("row_outer", std::move(out), {a, b},
                          [ia, ib, p, q](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            const Matrix& x = t.value(ia);
                            const Matrix& y = t.value(ib);
                            const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
                            Matrix* ga = need_a ? &t.grad_buffer(ia) : nullptr;
                            Matrix* gb = need_b ? &t.grad_buffer(ib) : nullptr;
                            for (std::size_t i = 0; i < g.rows(); ++i) {
                              for (std::size_t k = 0; k < p; ++k) {
                                for (std::size_t l = 0; l < q; ++l) {
                                  const double gv = g(i, k * q + l);
                                  if (ga) (*ga)(i, k) += gv * y(i, l);
                                  if (gb) (*gb)(i, l) += gv * x(i, k);
                                }
                              }
                            }
                          });
}

Var row_vecmat(Var u, Var m, std::size_t q) {
  const std::size_t p = u.cols();
  require(u.rows() == m.rows() && m.cols() == p * q, "row_vecmat",
          "vector " + shape_str(u.value()) + " does not fit stacked matrices " +
              shape_str(m.value()) + " with " + std::to_string(q) + " output columns");
  Matrix out(u.rows(), q);
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t k = 0; k < p; ++k) {
      const double s = u.value()(i, k);
      for (std::size_t l = 0; l < q; ++l) out(i, l) += s * m.value()(i, k * q + l);
    }
  const std::size_t iu = u.id(), im = m.id();
  return u.tape()->record("row_vecmat", std::move(out), {u, m},
                          [iu, im, p, q](Tape& t, std::size_t self) {
                            const Matrix& g = t.grad(self);
                            const Matrix& uv = t.value(iu);
                            const Matrix& mv = t.value(im);
                            Matrix* gu = t.requires_grad(iu) ? &t.grad_buffer(iu) : nullptr;
                            Matrix* gm = t.requires_grad(im) ? &t.grad_buffer(im) : nullptr;
                            for (std::size_t i = 0; i < g.rows(); ++i) {
                              for (std::size_t k = 0; k < p; ++k) {
                                double acc = 0.0;
                                for (std::size_t l = 0; l < q; ++l) {
                                  acc += g(i, l) * mv(i, k * q + l);
                                  if (gm) (*gm)(i, k * q + l) += uv(i, k) * g(i, l);
                                }
                                if (gu) (*gu)(i, k) += acc;
                              }
                            }
                          });
}

Var outer_sum(Var s, Var t) {
  require(s.cols() == 1 && t.cols() == 1, "outer_sum", "operands must be columns");
  Matrix out(s.rows(), t.rows());
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < t.rows(); ++j) out(i, j) = s.value()(i, 0) + t.value()(j, 0);
  const std::size_t is = s.id(), it = t.id();
  return s.tape()->record("outer_sum", std::move(out), {s, t}, [is, it](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(is)) {
      Matrix& gs = tp.grad_buffer(is);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gs(i, 0) += g(i, j);
    }
    if (tp.requires_grad(it)) {
      Matrix& gt = tp.grad_buffer(it);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gt(j, 0) += g(i, j);
    }
  });
}

// -- whole-program evaluation ---------------------------------------------

namespace {

std::vector<Var> bind(Tape& tape, const ParamSet& params, bool track) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars.push_back(track && params.trainable(i) ? tape.variable(params.value(i))
                                                : tape.constant(params.value(i)));
  }
  return vars;
}

Var run(const Program& program, Tape& tape, std::span<const Var> vars) {
  Var out = program(tape, vars);
  if (!out.valid() || out.tape() != &tape) {
    throw CapabilityError("program returned a value that is not on its tape");
  }
  if (out.rows() != 1 || out.cols() != 1) {
    throw CapabilityError("program must return a 1x1 scalar, got " + shape_str(out.value()));
  }
  return out;
}

}  // namespace

Evaluation evaluate_with_gradients(const Program& program, const ParamSet& params) {
  Tape tape;
  const std::vector<Var> vars = bind(tape, params, true);
  const Var out = run(program, tape, vars);
  tape.backward(out);
  Evaluation result{out.scalar(), GradSet(params)};
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.trainable(i)) continue;
    const Matrix& g = tape.grad(vars[i].id());
    if (!g.empty()) result.grads[i] = g;
  }
  return result;
}

double evaluate(const Program& program, const ParamSet& params) {
  Tape tape;
  const std::vector<Var> vars = bind(tape, params, false);
  return run(program, tape, vars).scalar();
}

GradCheckReport check_gradients(const Program& program, const ParamSet& params, double step,
                                double tolerance, double min_magnitude) {
  const Evaluation analytic = evaluate_with_gradients(program, params);
  ParamSet probe = params;
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params.trainable(p)) continue;
    for (std::size_t k = 0; k < params.value(p).size(); ++k) {
      const double original = params.value(p)[k];
      probe.mutable_value(p)[k] = original + step;
      const double up = evaluate(program, probe);
      probe.mutable_value(p)[k] = original - step;
      const double down = evaluate(program, probe);
      probe.mutable_value(p)[k] = original;

      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic.grads[p][k];
      const double magnitude = std::max(std::abs(numeric), std::abs(exact));
      if (magnitude <= min_magnitude) continue;
      ++report.checked;
      const double rel = std::abs(numeric - exact) / magnitude;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_param = params.name(p);
        report.worst_index = k;
        report.worst_analytic = exact;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace nkgad::ad
