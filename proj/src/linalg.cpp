#include "csc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csc/errors.hpp"
#include "csc/rng.hpp"

namespace csc {

Matrix qr_orthonormal(const Matrix& g) {
    const std::size_t d = g.rows(), r = g.cols();
    if (r < 1 || d < r) throw InvalidInput("qr_orthonormal: need d >= r >= 1");

    Matrix a = g;
    // One Householder vector per column, stored with its scale.
    std::vector<std::vector<double>> vs(r);
    std::vector<double> betas(r, 0.0);
    std::vector<double> diag(r, 0.0);

    for (std::size_t j = 0; j < r; ++j) {
        double normx = 0.0;
        for (std::size_t i = j; i < d; ++i) normx += a(i, j) * a(i, j);
        normx = std::sqrt(normx);
        if (normx < 1e-12) {
            throw RankDeficient("qr_orthonormal: column " + std::to_string(j) +
                                " is linearly dependent");
        }
        const double alpha = a(j, j) >= 0.0 ? -normx : normx;
        std::vector<double> v(d - j);
        for (std::size_t i = j; i < d; ++i) v[i - j] = a(i, j);
        v[0] -= alpha;
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        const double beta = 2.0 / vnorm2;

        // Apply H = I - beta v v^T to the trailing block.
        for (std::size_t c = j; c < r; ++c) {
            double s = 0.0;
            for (std::size_t i = j; i < d; ++i) s += v[i - j] * a(i, c);
            s *= beta;
            for (std::size_t i = j; i < d; ++i) a(i, c) -= s * v[i - j];
        }
        diag[j] = alpha;
        vs[j] = std::move(v);
        betas[j] = beta;
    }

    // Economy Q: apply the reflectors in reverse to the first r identity columns.
    Matrix q(d, r);
    for (std::size_t j = 0; j < r; ++j) q(j, j) = 1.0;
    for (std::size_t j = r; j-- > 0;) {
        const auto& v = vs[j];
        const double beta = betas[j];
        for (std::size_t c = 0; c < r; ++c) {
            double s = 0.0;
            for (std::size_t i = j; i < d; ++i) s += v[i - j] * q(i, c);
            s *= beta;
            for (std::size_t i = j; i < d; ++i) q(i, c) -= s * v[i - j];
        }
    }

    // Positive-diagonal convention: flip columns whose R diagonal came out negative.
    for (std::size_t j = 0; j < r; ++j) {
        if (diag[j] < 0.0) {
            for (std::size_t i = 0; i < d; ++i) q(i, j) = -q(i, j);
        }
    }
    return q;
}

namespace {

// Householder reduction of a symmetric matrix to tridiagonal form, with the
// orthogonal transform accumulated in place (classic tred2).
void tridiagonalize(Matrix& a, std::vector<double>& d, std::vector<double>& e) {
    const std::size_t n = a.rows();
    for (std::size_t i = n - 1; i >= 1; --i) {
        const std::size_t l = i - 1;
        double h = 0.0;
        if (l > 0) {
            double scale = 0.0;
            for (std::size_t k = 0; k <= l; ++k) scale += std::fabs(a(i, k));
            if (scale == 0.0) {
                e[i] = a(i, l);
            } else {
                for (std::size_t k = 0; k <= l; ++k) {
                    a(i, k) /= scale;
                    h += a(i, k) * a(i, k);
                }
                double f = a(i, l);
                double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                a(i, l) = f - g;
                f = 0.0;
                for (std::size_t j = 0; j <= l; ++j) {
                    a(j, i) = a(i, j) / h;
                    g = 0.0;
                    for (std::size_t k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
                    for (std::size_t k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
                    e[j] = g / h;
                    f += e[j] * a(i, j);
                }
                const double hh = f / (h + h);
                for (std::size_t j = 0; j <= l; ++j) {
                    f = a(i, j);
                    e[j] = g = e[j] - hh * f;
                    for (std::size_t k = 0; k <= j; ++k)
                        a(j, k) -= f * e[k] + g * a(i, k);
                }
            }
        } else {
            e[i] = a(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] != 0.0) {
            for (std::size_t j = 0; j < i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k < i; ++k) g += a(i, k) * a(k, j);
                for (std::size_t k = 0; k < i; ++k) a(k, j) -= g * a(k, i);
            }
        }
        d[i] = a(i, i);
        a(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) a(j, i) = a(i, j) = 0.0;
    }
}

double sign_like(double a, double b) { return b >= 0.0 ? std::fabs(a) : -std::fabs(a); }

// Implicit QL iteration with Wilkinson shifts on a tridiagonal matrix,
// accumulating rotations into the columns of z (classic tqli).
void ql_implicit(std::vector<double>& d, std::vector<double>& e, Matrix& z) {
    const std::size_t n = d.size();
    if (n == 0) return;
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;

    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                const double dd = std::fabs(d[m]) + std::fabs(d[m + 1]);
                if (std::fabs(e[m]) <= 1e-300 || std::fabs(e[m]) <= 2.3e-16 * dd) break;
            }
            if (m != l) {
                if (iter++ == 60)
                    throw Error("sym_eig: QL iteration failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + sign_like(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                bool underflow = false;
                for (std::size_t i = m; i-- > l;) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        underflow = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for (std::size_t k = 0; k < n; ++k) {
                        f = z(k, i + 1);
                        z(k, i + 1) = s * z(k, i) + c * f;
                        z(k, i) = c * z(k, i) - s * f;
                    }
                }
                if (underflow) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

}  // namespace

SymEig sym_eig(const Matrix& s) {
    const std::size_t n = s.rows();
    if (n == 0 || s.cols() != n) throw InvalidInput("sym_eig: matrix must be square");
    if (max_abs_diff(s, s.transposed()) > 1e-9)
        throw NotSymmetric("sym_eig: input is not symmetric within 1e-9");

    // Work on the symmetrized matrix so tiny asymmetries cannot leak through.
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (s(i, j) + s(j, i));

    std::vector<double> d(n, 0.0), e(n, 0.0);
    if (n == 1) {
        SymEig out;
        out.values = {a(0, 0)};
        out.vectors = Matrix::identity(1);
        return out;
    }
    tridiagonalize(a, d, e);
    ql_implicit(d, e, a);

    // Sort eigenpairs ascending.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });
    SymEig out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = d[order[j]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = a(i, order[j]);
    }
    return out;
}

Matrix sym_eig_ascending(const Matrix& s, std::size_t k) {
    if (k < 1 || k > s.rows())
        throw InvalidInput("sym_eig_ascending: need 1 <= k <= n");
    SymEig full = sym_eig(s);
    Matrix v(s.rows(), k);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < s.rows(); ++i) v(i, j) = full.vectors(i, j);
    return v;
}

double psd_top_eigenvalue_bound(const Matrix& g) {
    const std::size_t n = g.rows();
    if (n == 0 || g.cols() != n) throw InvalidInput("psd bound: matrix must be square");
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += g(i, i);
    if (trace <= 0.0) return 0.0;

    Rng rng(0x5EEDBA11);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    double lambda = 0.0;
    for (int it = 0; it < 1000; ++it) {
        std::vector<double> w = matvec(g, v);
        const double nw = norm2(w);
        if (nw == 0.0) break;
        for (std::size_t i = 0; i < n; ++i) w[i] /= nw;
        const double next = dot(w, matvec(g, w));
        v = std::move(w);
        if (it > 4 && std::fabs(next - lambda) <= 1e-12 * std::fabs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::min(lambda * 1.01, trace);
}

}  // namespace csc
