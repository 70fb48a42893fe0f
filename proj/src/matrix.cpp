#include "csc/matrix.hpp"

#include <cmath>
#include <utility>

#include "csc/parallel.hpp"

namespace csc {

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> entries) {
    if (entries.size() != rows * cols) {
        throw DimensionMismatch("matrix data has " + std::to_string(entries.size()) +
                                " entries, expected " + std::to_string(rows * cols));
    }
    for (double v : entries) {
        if (!std::isfinite(v)) throw InvalidInput("matrix entry is not finite");
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(entries);
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::vector<double> Matrix::col(std::size_t j) const {
    std::vector<double> v(rows_);
    for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
    return v;
}

void Matrix::set_col(std::size_t j, const std::vector<double>& v) {
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

// Work is split over output rows, so writes from different threads never overlap
// and the result is independent of the thread count.
constexpr std::size_t kParallelFlops = 1u << 23;

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    parallel_for(0, m, m * n * k >= kParallelFlops, [&](std::size_t i) {
        double* ci = c.row_ptr(i);
        const double* ai = a.row_ptr(i);
        for (std::size_t l = 0; l < k; ++l) {
            const double av = ai[l];
            if (av == 0.0) continue;
            const double* bl = b.row_ptr(l);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    });
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw DimensionMismatch("matmul_tn: inner dimensions differ");
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    Matrix c(m, n);
    parallel_for(0, m, m * n * k >= kParallelFlops, [&](std::size_t i) {
        double* ci = c.row_ptr(i);
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a(l, i);
            if (av == 0.0) continue;
            const double* bl = b.row_ptr(l);
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    });
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw DimensionMismatch("matmul_nt: inner dimensions differ");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix c(m, n);
    parallel_for(0, m, m * n * k >= kParallelFlops, [&](std::size_t i) {
        double* ci = c.row_ptr(i);
        const double* ai = a.row_ptr(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.row_ptr(j);
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += ai[l] * bj[l];
            ci[j] = s;
        }
    });
    return c;
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols() != x.size()) throw DimensionMismatch("matvec: dimensions differ");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += ai[j] * x[j];
        y[i] = s;
    }
    return y;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionMismatch("max_abs_diff: shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace csc
