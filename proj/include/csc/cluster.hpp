#pragma once

#include <cstdint>
#include <vector>

#include "csc/dataset.hpp"
#include "csc/matrix.hpp"
#include "csc/rng.hpp"

namespace csc {

struct SscConfig {
    double lambda_rel = 0.5;  // per-column lambda as a fraction of lambda_max
    std::size_t max_iter = 1000;
    double tol = 1e-6;     // relative-change stopping threshold
    std::size_t k = 2;     // cluster count
    std::uint64_t seed = 0;
    bool accelerated = false;  // Nesterov-accelerated proximal gradient

    void validate() const;
};

// Sparse self-expression coefficients: column i approximately reconstructs
// column i of the input from the other columns; the diagonal is exactly zero.
struct SelfExpressionMatrix {
    Matrix c;  // n x n
    std::size_t zero_columns = 0;  // inputs with zero norm, left unexpressed
};

// Per-column lasso  min_c 0.5 ||h_i - H c||^2 + lambda_i ||c||_1  s.t. c_i = 0,
// solved by proximal gradient with step 1/L, L an upper bound on ||H||_2^2.
// lambda_i = lambda_rel * max_{j != i} |h_j . h_i|.
SelfExpressionMatrix self_expression(const Matrix& h, const SscConfig& cfg);

// W = |C| + |C|^T
Matrix build_affinity(const SelfExpressionMatrix& c);

struct SpectralInfo {
    std::size_t isolated_vertices = 0;
    bool degenerate = false;  // affinity had no edges at all
};

// Symmetric normalized Laplacian, k smallest eigenvectors, row-normalized,
// then k-means on the rows. Isolated vertices get zero embedding rows.
std::vector<int> spectral_clustering(const Matrix& w, std::size_t k, std::uint64_t seed,
                                     SpectralInfo* info = nullptr);

// Lloyd's k-means over the columns of x with k-means++ seeding, best of
// `restarts` runs by within-cluster sum of squares. Ties break to the lowest
// centroid index.
std::vector<int> kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                        std::size_t restarts = 10);

double kmeans_inertia(const Matrix& x, const std::vector<int>& labels, std::size_t k);

// Full sparse-subspace-clustering pipeline on embedding columns.
std::vector<int> ssc(const Matrix& h, const SscConfig& cfg);

// SSC on the zero-filled observed matrix (no representation learning).
std::vector<int> zf_ssc(const ObservedDataset& ds, const SscConfig& cfg);

namespace detail {

// Single-column solver, exposed for objective-descent checks; appends the
// penalized objective after every iteration when trace is non-null.
std::vector<double> lasso_column(const Matrix& gram, std::size_t column, double lambda,
                                 double lipschitz, std::size_t max_iter, double tol,
                                 bool accelerated, std::vector<double>* trace = nullptr);

// One k-means run; appends the inertia after every Lloyd update when trace is
// non-null (the sequence never increases).
std::vector<int> kmeans_single(const Matrix& x, std::size_t k, Rng& rng,
                               std::vector<double>* inertia_trace = nullptr);

}  // namespace detail

}  // namespace csc
