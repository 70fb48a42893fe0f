#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csc/matrix.hpp"

namespace csc {

// Parameters of the synthetic union-of-subspaces benchmark.
struct SyntheticConfig {
    std::size_t k = 5;        // number of subspaces
    std::size_t r = 10;       // intrinsic dimension per subspace
    std::size_t d = 128;      // ambient dimension
    std::size_t n_total = 5000;
    double sigma = 0.1;       // noise std dev
    double rho = 0.5;         // per-entry observation probability, in (0, 1]
    std::uint64_t seed = 0;

    void validate() const;  // throws InvalidConfig
};

struct SyntheticGroundTruth {
    std::vector<Matrix> bases;  // k orthonormal d x r matrices
    Matrix clean;               // d x n, column i in span(bases[labels[i]])
    Matrix coefficients;        // r x n
    std::vector<int> labels;    // n entries in [0, k)
};

// Partially observed data: values are exactly zero wherever mask is zero.
struct ObservedDataset {
    Matrix values;  // d x n
    Matrix mask;    // d x n, entries in {0, 1}
    std::optional<std::vector<int>> labels;
    std::size_t zero_observation_columns = 0;  // columns with no observed entry

    std::size_t dim() const { return values.rows(); }
    std::size_t count() const { return values.cols(); }
    void validate() const;  // throws on any invariant violation
};

// Draws k orthonormal bases (QR of i.i.d. Gaussian matrices), then n/k columns
// per subspace with standard normal coefficients. Deterministic per config.
SyntheticGroundTruth generate_clean(const SyntheticConfig& cfg);

// Adds N(0, sigma^2) noise to every entry, then keeps each entry independently
// with probability rho. Columns that lose every entry are kept (all-zero) and
// counted in zero_observation_columns.
ObservedDataset observe(const SyntheticGroundTruth& gt, double sigma, double rho,
                        std::uint64_t seed);

// Applies an extra Bernoulli(rho) mask on top of the existing one; rho = 1
// leaves the dataset unchanged. Used to sweep sampling rates on loaded data.
ObservedDataset apply_extra_mask(const ObservedDataset& ds, double rho, std::uint64_t seed);

ObservedDataset select_columns(const ObservedDataset& ds, const std::vector<std::size_t>& idx);

// Scales every nonzero column to unit Euclidean norm.
void normalize_columns(Matrix& m);

// --- file layout: values.csv, mask.csv, optional labels.csv in one directory.
// Each file starts with a header line `# d=<rows> n=<cols>` followed by <rows>
// comma-separated lines. Values are written with 17 significant digits so a
// save/load round trip is exact.

void save_dataset(const ObservedDataset& ds, const std::filesystem::path& dir);
ObservedDataset load_dataset(const std::filesystem::path& dir);

void save_matrix_csv(const Matrix& m, const std::filesystem::path& file);
Matrix load_matrix_csv(const std::filesystem::path& file);

void save_labels_csv(const std::vector<int>& labels, const std::filesystem::path& file);
std::vector<int> load_labels_csv(const std::filesystem::path& file);

}  // namespace csc
