#include "csc/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "csc/errors.hpp"
#include "csc/linalg.hpp"
#include "csc/parallel.hpp"
#include "csc/rng.hpp"

namespace csc {

void SscConfig::validate() const {
    if (!(lambda_rel > 0.0) || !(lambda_rel < 1.0))
        throw InvalidConfig("ssc: lambda_rel must be in (0, 1)");
    if (k < 2) throw InvalidConfig("ssc: k must be >= 2");
    if (max_iter < 1) throw InvalidConfig("ssc: max_iter must be >= 1");
    if (!(tol > 0.0)) throw InvalidConfig("ssc: tol must be > 0");
}

namespace detail {

namespace {

// v = gram * x exploiting sparsity of x; gram is symmetric so its rows double
// as columns and stay cache-friendly.
void gram_times_sparse(const Matrix& gram, const std::vector<double>& x,
                       std::vector<double>& v) {
    const std::size_t n = x.size();
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t l = 0; l < n; ++l) {
        const double xl = x[l];
        if (xl == 0.0) continue;
        const double* row = gram.row_ptr(l);
        for (std::size_t j = 0; j < n; ++j) v[j] += xl * row[j];
    }
}

double l1_norm(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += std::fabs(v);
    return s;
}

}  // namespace

std::vector<double> lasso_column(const Matrix& gram, std::size_t column, double lambda,
                                 double lipschitz, std::size_t max_iter, double tol,
                                 bool accelerated, std::vector<double>* trace) {
    const std::size_t n = gram.rows();
    std::vector<double> c(n, 0.0), c_prev(n, 0.0), point(n, 0.0), grad(n, 0.0);
    if (lipschitz <= 0.0) return c;
    const double step = 1.0 / lipschitz;
    const double thresh = lambda * step;
    const double gii = gram(column, column);

    double t_momentum = 1.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        // grad = gram * point - g  where g is gram's column `column`.
        gram_times_sparse(gram, point, grad);
        for (std::size_t j = 0; j < n; ++j) grad[j] -= gram(j, column);

        c_prev.swap(c);
        double diff2 = 0.0, norm2_prev = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double next =
                j == column ? 0.0 : soft_threshold(point[j] - step * grad[j], thresh);
            const double prev = c_prev[j];
            diff2 += (next - prev) * (next - prev);
            norm2_prev += prev * prev;
            c[j] = next;
        }

        if (accelerated) {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_momentum * t_momentum));
            const double beta = (t_momentum - 1.0) / t_next;
            t_momentum = t_next;
            for (std::size_t j = 0; j < n; ++j) point[j] = c[j] + beta * (c[j] - c_prev[j]);
        } else {
            point = c;
        }

        if (trace) {
            std::vector<double> gc(n, 0.0);
            gram_times_sparse(gram, c, gc);
            double quad = 0.0, lin = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                quad += c[j] * gc[j];
                lin += c[j] * gram(j, column);
            }
            trace->push_back(0.5 * gii - lin + 0.5 * quad + lambda * l1_norm(c));
        }

        if (std::sqrt(diff2) <= tol * std::max(std::sqrt(norm2_prev), 1e-30)) break;
    }
    return c;
}

}  // namespace detail

SelfExpressionMatrix self_expression(const Matrix& h, const SscConfig& cfg) {
    cfg.validate();
    const std::size_t n = h.cols();
    if (n < 2) throw InvalidInput("self_expression: need at least 2 columns");

    const Matrix gram = matmul_tn(h, h);
    const double lipschitz = psd_top_eigenvalue_bound(gram);

    SelfExpressionMatrix se;
    se.c = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        if (gram(i, i) == 0.0) ++se.zero_columns;
    if (lipschitz <= 0.0) return se;  // all-zero input

    parallel_for(0, n, n >= 32, [&](std::size_t i) {
        if (gram(i, i) == 0.0) return;  // zero column stays unexpressed
        double lambda_max = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) lambda_max = std::max(lambda_max, std::fabs(gram(j, i)));
        const double lambda = cfg.lambda_rel * lambda_max;
        const std::vector<double> ci = detail::lasso_column(
            gram, i, lambda, lipschitz, cfg.max_iter, cfg.tol, cfg.accelerated);
        for (std::size_t j = 0; j < n; ++j) se.c(j, i) = ci[j];
    });
    for (std::size_t i = 0; i < n; ++i) se.c(i, i) = 0.0;
    return se;
}

Matrix build_affinity(const SelfExpressionMatrix& se) {
    const std::size_t n = se.c.rows();
    if (se.c.cols() != n) throw InvalidInput("build_affinity: C must be square");
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            w(i, j) = std::fabs(se.c(i, j)) + std::fabs(se.c(j, i));
    for (std::size_t i = 0; i < n; ++i) w(i, i) = 0.0;
    return w;
}

std::vector<int> spectral_clustering(const Matrix& w, std::size_t k, std::uint64_t seed,
                                     SpectralInfo* info) {
    const std::size_t n = w.rows();
    if (w.cols() != n) throw InvalidInput("spectral_clustering: affinity must be square");
    if (k < 2) throw InvalidConfig("spectral_clustering: k must be >= 2");
    if (k > n) throw InvalidConfig("spectral_clustering: k exceeds number of points");
    if (max_abs_diff(w, w.transposed()) > 1e-9)
        throw NotSymmetric("spectral_clustering: affinity is not symmetric");
    for (std::size_t i = 0; i < w.size(); ++i)
        if (w.data()[i] < 0.0) throw InvalidInput("spectral_clustering: negative affinity");

    std::vector<double> degree(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* wi = w.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += wi[j];
        degree[i] = s;
    }
    std::vector<double> dinv_sqrt(n, 0.0);
    std::size_t isolated = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (degree[i] > 0.0)
            dinv_sqrt[i] = 1.0 / std::sqrt(degree[i]);
        else
            ++isolated;
    }
    if (info) {
        info->isolated_vertices = isolated;
        info->degenerate = isolated == n;
    }

    Matrix lap(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            lap(i, j) = (i == j ? 1.0 : 0.0) - dinv_sqrt[i] * w(i, j) * dinv_sqrt[j];

    Matrix v = sym_eig_ascending(lap, k);

    // Isolated vertices carry no spectral information; rows stay zero.
    for (std::size_t i = 0; i < n; ++i) {
        if (degree[i] == 0.0) {
            for (std::size_t j = 0; j < k; ++j) v(i, j) = 0.0;
            continue;
        }
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += v(i, j) * v(i, j);
        s = std::sqrt(s);
        if (s == 0.0) continue;
        for (std::size_t j = 0; j < k; ++j) v(i, j) /= s;
    }
    return kmeans(v.transposed(), k, seed);
}

namespace {

double sq_dist_cols(const Matrix& x, std::size_t a, const Matrix& cents, std::size_t c) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double d = x(i, a) - cents(i, c);
        s += d * d;
    }
    return s;
}

}  // namespace

namespace detail {

std::vector<int> kmeans_single(const Matrix& x, std::size_t k, Rng& rng,
                               std::vector<double>* inertia_trace) {
    const std::size_t m = x.rows(), n = x.cols();

    // k-means++ seeding.
    Matrix cents(m, k);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    {
        const std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
        for (std::size_t i = 0; i < m; ++i) cents(i, 0) = x(i, first);
    }
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = sq_dist_cols(x, j, cents, c - 1);
            if (d < d2[j]) d2[j] = d;
            total += d2[j];
        }
        std::size_t pick;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double run = 0.0;
            pick = n - 1;
            for (std::size_t j = 0; j < n; ++j) {
                run += d2[j];
                if (run > target) {
                    pick = j;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(rng.uniform_index(n));
        }
        for (std::size_t i = 0; i < m; ++i) cents(i, c) = x(i, pick);
    }

    std::vector<int> labels(n, -1);
    std::vector<std::size_t> counts(k, 0);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (std::size_t j = 0; j < n; ++j) {
            int best = 0;
            double best_d = sq_dist_cols(x, j, cents, 0);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sq_dist_cols(x, j, cents, c);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            if (labels[j] != best) {
                labels[j] = best;
                changed = true;
            }
        }
        if (!changed) break;

        Matrix sums(m, k);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t c = static_cast<std::size_t>(labels[j]);
            ++counts[c];
            for (std::size_t i = 0; i < m; ++i) sums(i, c) += x(i, j);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centroid
            for (std::size_t i = 0; i < m; ++i)
                cents(i, c) = sums(i, c) / static_cast<double>(counts[c]);
        }
        if (inertia_trace) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                s += sq_dist_cols(x, j, cents, static_cast<std::size_t>(labels[j]));
            inertia_trace->push_back(s);
        }
    }
    return labels;
}

}  // namespace detail

double kmeans_inertia(const Matrix& x, const std::vector<int>& labels, std::size_t k) {
    const std::size_t m = x.rows(), n = x.cols();
    Matrix cents(m, k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t c = static_cast<std::size_t>(labels[j]);
        ++counts[c];
        for (std::size_t i = 0; i < m; ++i) cents(i, c) += x(i, j);
    }
    for (std::size_t c = 0; c < k; ++c)
        if (counts[c])
            for (std::size_t i = 0; i < m; ++i) cents(i, c) /= static_cast<double>(counts[c]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        s += sq_dist_cols(x, j, cents, static_cast<std::size_t>(labels[j]));
    return s;
}

std::vector<int> kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                        std::size_t restarts) {
    const std::size_t n = x.cols();
    if (k < 1) throw InvalidConfig("kmeans: k must be >= 1");
    if (restarts < 1) throw InvalidConfig("kmeans: restarts must be >= 1");
    if (n < k) throw InvalidInput("kmeans: fewer points than clusters");

    Rng root(seed);
    std::vector<int> best;
    double best_inertia = std::numeric_limits<double>::infinity();
    for (std::uint64_t restart = 0; restart < restarts; ++restart) {
        Rng rng = root.child(restart);
        std::vector<int> labels = detail::kmeans_single(x, k, rng);
        const double inertia = kmeans_inertia(x, labels, k);
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best = std::move(labels);
        }
    }
    return best;
}

std::vector<int> ssc(const Matrix& h, const SscConfig& cfg) {
    const SelfExpressionMatrix se = self_expression(h, cfg);
    const Matrix w = build_affinity(se);
    return spectral_clustering(w, cfg.k, cfg.seed);
}

std::vector<int> zf_ssc(const ObservedDataset& ds, const SscConfig& cfg) {
    Matrix y(ds.dim(), ds.count());
    for (std::size_t i = 0; i < ds.dim(); ++i)
        for (std::size_t j = 0; j < ds.count(); ++j)
            y(i, j) = ds.values(i, j) * ds.mask(i, j);
    return ssc(y, cfg);
}

}  // namespace csc
