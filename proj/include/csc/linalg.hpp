#pragma once

#include <cstddef>
#include <vector>

#include "csc/matrix.hpp"

namespace csc {

// Orthonormal basis for the column span of g (d x r, d >= r >= 1), computed by
// Householder QR. Column signs follow the positive-diagonal-of-R convention,
// so the result is deterministic. Throws RankDeficient when a diagonal entry
// of the triangular factor falls below 1e-12.
Matrix qr_orthonormal(const Matrix& g);

struct SymEig {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column i pairs with values[i]; orthonormal
};

// Full eigendecomposition of a symmetric matrix via Householder
// tridiagonalization followed by implicit QL iteration with shifts.
// Throws NotSymmetric when max |s - s^T| exceeds 1e-9.
SymEig sym_eig(const Matrix& s);

// The k eigenvectors with smallest eigenvalues, as columns, n x k.
Matrix sym_eig_ascending(const Matrix& s, std::size_t k);

// sign(x) * max(|x| - lam, 0)
inline double soft_threshold(double x, double lam) {
    if (x > lam) return x - lam;
    if (x < -lam) return x + lam;
    return 0.0;
}

// Upper bound on the largest eigenvalue of a symmetric PSD matrix: power
// iteration with a 1% safety margin, capped by the trace (which always
// dominates the top eigenvalue of a PSD matrix).
double psd_top_eigenvalue_bound(const Matrix& g);

}  // namespace csc
