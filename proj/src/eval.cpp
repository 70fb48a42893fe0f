#include "csc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "csc/errors.hpp"
#include "csc/matrix.hpp"
#include "csc/rng.hpp"

namespace csc {

namespace {

struct Confusion {
    std::vector<int> pred_labels, truth_labels;  // distinct, ascending
    Matrix counts;                               // |pred| x |truth|
    std::size_t n = 0;
};

Confusion build_confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size())
        throw InvalidInput("align_and_score: label vectors differ in length");
    if (pred.empty()) throw InvalidInput("align_and_score: empty label vectors");

    Confusion c;
    c.n = pred.size();
    c.pred_labels = pred;
    c.truth_labels = truth;
    std::sort(c.pred_labels.begin(), c.pred_labels.end());
    c.pred_labels.erase(std::unique(c.pred_labels.begin(), c.pred_labels.end()),
                        c.pred_labels.end());
    std::sort(c.truth_labels.begin(), c.truth_labels.end());
    c.truth_labels.erase(std::unique(c.truth_labels.begin(), c.truth_labels.end()),
                         c.truth_labels.end());

    std::map<int, std::size_t> pidx, tidx;
    for (std::size_t i = 0; i < c.pred_labels.size(); ++i) pidx[c.pred_labels[i]] = i;
    for (std::size_t i = 0; i < c.truth_labels.size(); ++i) tidx[c.truth_labels[i]] = i;
    c.counts = Matrix(c.pred_labels.size(), c.truth_labels.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        c.counts(pidx[pred[i]], tidx[truth[i]]) += 1.0;
    return c;
}

ClusteringResult finish(const Confusion& c, const std::vector<int>& pred,
                        const std::vector<int>& truth,
                        const std::vector<std::size_t>& pred_to_truth, double matched) {
    ClusteringResult r;
    r.predicted = pred;
    r.truth = truth;
    r.accuracy = matched / static_cast<double>(c.n);
    r.error = 1.0 - r.accuracy;
    for (std::size_t i = 0; i < c.pred_labels.size(); ++i) {
        const std::size_t j = pred_to_truth[i];
        r.alignment.emplace_back(c.pred_labels[i],
                                 j < c.truth_labels.size() ? c.truth_labels[j] : -1);
    }
    return r;
}

// Minimum-cost assignment on a square matrix via shortest augmenting paths
// with potentials; O(s^3). Returns row -> column.
std::vector<std::size_t> assignment_min_cost(const Matrix& cost) {
    const std::size_t n = cost.rows();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= n; ++j)
        if (match[j]) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace

ClusteringResult align_brute_force(const std::vector<int>& pred, const std::vector<int>& truth) {
    const Confusion c = build_confusion(pred, truth);
    const std::size_t kp = c.pred_labels.size(), kt = c.truth_labels.size();
    if (kp > 8 || kt > 8)
        throw InvalidInput("align_brute_force: more than 8 distinct labels");
    const std::size_t s = std::max(kp, kt);

    std::vector<std::size_t> perm(s);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = -1.0;
    std::vector<std::size_t> best_perm = perm;
    do {
        double matched = 0.0;
        for (std::size_t i = 0; i < kp; ++i)
            if (perm[i] < kt) matched += c.counts(i, perm[i]);
        if (matched > best) {
            best = matched;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return finish(c, pred, truth, best_perm, best);
}

ClusteringResult align_hungarian(const std::vector<int>& pred, const std::vector<int>& truth) {
    const Confusion c = build_confusion(pred, truth);
    const std::size_t kp = c.pred_labels.size(), kt = c.truth_labels.size();
    const std::size_t s = std::max(kp, kt);

    // Pad to square and minimize (max - count), i.e. maximize matched counts.
    double maxw = 0.0;
    for (std::size_t i = 0; i < c.counts.size(); ++i)
        maxw = std::max(maxw, c.counts.data()[i]);
    Matrix cost(s, s, 0.0);
    for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j)
            cost(i, j) = maxw - (i < kp && j < kt ? c.counts(i, j) : 0.0);

    const std::vector<std::size_t> row_to_col = assignment_min_cost(cost);
    double matched = 0.0;
    for (std::size_t i = 0; i < kp; ++i)
        if (row_to_col[i] < kt) matched += c.counts(i, row_to_col[i]);
    return finish(c, pred, truth, row_to_col, matched);
}

ClusteringResult align_and_score(const std::vector<int>& pred, const std::vector<int>& truth) {
    const Confusion c = build_confusion(pred, truth);
    if (c.pred_labels.size() <= 8 && c.truth_labels.size() <= 8)
        return align_brute_force(pred, truth);
    return align_hungarian(pred, truth);
}

std::vector<std::size_t> subsample_eval(std::size_t n, std::size_t n_eval, std::uint64_t seed) {
    if (n_eval > n) throw InvalidInput("subsample_eval: n_eval exceeds sample count");
    Rng rng(seed);
    return rng.sample_without_replacement(n, n_eval);
}

SweepSummary aggregate_sweep(const std::vector<SweepRow>& rows) {
    if (rows.empty()) throw InvalidInput("aggregate_sweep: no rows");

    SweepSummary s;
    for (const auto& r : rows) s.grid.push_back(r.rho);
    std::sort(s.grid.begin(), s.grid.end());
    s.grid.erase(std::unique(s.grid.begin(), s.grid.end()), s.grid.end());

    std::vector<std::string> methods;
    for (const auto& r : rows) methods.push_back(r.method);
    std::sort(methods.begin(), methods.end());
    methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& m : methods) {
        MethodSummary ms;
        ms.method = m;
        for (double rho : s.grid) {
            double acc = 0.0, err = 0.0;
            std::size_t cnt = 0;
            for (const auto& r : rows) {
                if (r.method != m || r.rho != rho || std::isnan(r.error)) continue;
                acc += r.accuracy;
                err += r.error;
                ++cnt;
            }
            ms.mean_accuracy.push_back(cnt ? acc / static_cast<double>(cnt) : nan);
            ms.mean_error.push_back(cnt ? err / static_cast<double>(cnt) : nan);
        }
        double acc = 0.0, err = 0.0;
        std::size_t cnt = 0;
        for (std::size_t g = 0; g < s.grid.size(); ++g) {
            if (std::isnan(ms.mean_accuracy[g])) continue;
            acc += ms.mean_accuracy[g];
            err += ms.mean_error[g];
            ++cnt;
        }
        ms.grand_mean_accuracy = cnt ? acc / static_cast<double>(cnt) : nan;
        ms.grand_mean_error = cnt ? err / static_cast<double>(cnt) : nan;
        s.methods.push_back(std::move(ms));
    }

    std::stable_sort(s.methods.begin(), s.methods.end(),
                     [](const MethodSummary& a, const MethodSummary& b) {
                         const bool an = std::isnan(a.grand_mean_accuracy);
                         const bool bn = std::isnan(b.grand_mean_accuracy);
                         if (an != bn) return bn;  // NaN methods sort last
                         if (!an && a.grand_mean_accuracy != b.grand_mean_accuracy)
                             return a.grand_mean_accuracy > b.grand_mean_accuracy;
                         return a.method < b.method;
                     });
    return s;
}

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot open for writing: " + file.string());
    out << "method,rho,seed,error,accuracy,seconds,reason\n";
    for (const auto& r : rows) {
        out << r.method << ',' << fmt(r.rho) << ',' << r.seed << ',' << fmt(r.error) << ','
            << fmt(r.accuracy) << ',' << fmt(r.seconds) << ',' << r.reason << "\n";
    }
    if (!out) throw IoError("write failed: " + file.string());
}

void write_summary_csv(const SweepSummary& summary, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot open for writing: " + file.string());
    out << "# grid=";
    for (std::size_t g = 0; g < summary.grid.size(); ++g) {
        if (g) out << ',';
        out << fmt(summary.grid[g]);
    }
    out << "\n";
    out << "method";
    for (double rho : summary.grid) out << ",rho=" << fmt(rho);
    out << ",mean\n";
    for (const auto& m : summary.methods) {
        out << m.method;
        for (double acc : m.mean_accuracy) out << ',' << fmt(acc);
        out << ',' << fmt(m.grand_mean_accuracy) << "\n";
    }
    if (!out) throw IoError("write failed: " + file.string());
}

}  // namespace csc
