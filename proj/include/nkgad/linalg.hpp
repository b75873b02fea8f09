#pragma once

#include <vector>

#include "nkgad/matrix.hpp"

namespace nkgad {

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k pairs with values[k]
};

/// Eigendecomposition of a real symmetric matrix via Householder
/// tridiagonalization followed by the implicit QL iteration.
///
/// Throws ShapeError when `m` is not square or some |m_ij - m_ji| > tol, and
/// ConvergenceError when the QL sweep for an eigenvalue exceeds its
/// iteration budget.
SymmetricEigen eigh_symmetric(const Matrix& m, double tol = 1e-10);

}  // namespace nkgad
