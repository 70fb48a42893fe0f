#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "csc/errors.hpp"
#include "csc/eval.hpp"
#include "csc/rng.hpp"
#include "doctest.h"

using namespace csc;

namespace {

std::vector<int> random_labels(std::size_t n, int k, Rng& rng) {
    std::vector<int> v(n);
    for (auto& x : v) x = static_cast<int>(rng.uniform_index(k));
    return v;
}

}  // namespace

TEST_CASE("identical labelings score zero error") {
    const std::vector<int> l = {0, 1, 2, 1, 0, 2};
    const ClusteringResult r = align_and_score(l, l);
    CHECK(r.error == 0.0);
    CHECK(r.accuracy == 1.0);
}

TEST_CASE("bijective relabelings score zero error") {
    const std::vector<int> truth = {0, 1, 2, 1, 0, 2, 2};
    std::vector<int> renamed = truth;
    for (auto& v : renamed) v = (v * 2 + 5) % 7;  // injective on {0,1,2}
    CHECK(align_and_score(renamed, truth).error == 0.0);
}

TEST_CASE("hand-checked alignment example") {
    const std::vector<int> pred = {0, 0, 1, 1, 2, 2};
    const std::vector<int> truth = {1, 1, 1, 2, 2, 0};
    // Best alignment maps 0->1, 1->2, 2->0 or 2->2; either way 4 of 6 match.
    const ClusteringResult r = align_and_score(pred, truth);
    CHECK(r.error == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("brute force and hungarian agree on random instances") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(49);
        const int kp = 1 + static_cast<int>(rng.uniform_index(6));
        const int kt = 1 + static_cast<int>(rng.uniform_index(6));
        const std::vector<int> pred = random_labels(n, kp, rng);
        const std::vector<int> truth = random_labels(n, kt, rng);
        const ClusteringResult a = align_brute_force(pred, truth);
        const ClusteringResult b = align_hungarian(pred, truth);
        CHECK(a.error == b.error);
    }
}

TEST_CASE("hungarian path engages above 8 clusters") {
    Rng rng(103);
    const std::vector<int> pred = random_labels(300, 12, rng);
    const std::vector<int> truth = random_labels(300, 12, rng);
    const ClusteringResult r = align_and_score(pred, truth);
    CHECK(r.error >= 0.0);
    CHECK(r.error <= 1.0);
    CHECK(r.alignment.size() == 12);
    // One-to-one: no truth label repeats among matched clusters.
    std::map<int, int> seen;
    for (const auto& [p, t] : r.alignment) {
        if (t >= 0) {
            CHECK(seen.count(t) == 0);
            seen[t] = p;
        }
    }
}

TEST_CASE("mismatched lengths are rejected") {
    CHECK_THROWS_AS(align_and_score({0, 1}, {0, 1, 2}), InvalidInput);
    CHECK_THROWS_AS(align_and_score({}, {}), InvalidInput);
}

TEST_CASE("error never exceeds the chance floor for balanced truth") {
    Rng rng(107);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 2 + static_cast<int>(rng.uniform_index(5));
        const std::size_t per = 6;
        std::vector<int> truth;
        for (int c = 0; c < k; ++c)
            for (std::size_t i = 0; i < per; ++i) truth.push_back(c);
        const std::vector<int> pred = random_labels(truth.size(), k, rng);
        const double err = align_and_score(pred, truth).error;
        CHECK(err <= 1.0 - 1.0 / k + 1e-12);
    }
}

TEST_CASE("error is invariant under relabeling either side") {
    Rng rng(109);
    const std::vector<int> pred = random_labels(40, 4, rng);
    const std::vector<int> truth = random_labels(40, 3, rng);
    const double base = align_and_score(pred, truth).error;

    std::vector<int> pred2 = pred;
    for (auto& v : pred2) v = 7 - v;  // bijection on {0..4}
    CHECK(align_and_score(pred2, truth).error == base);

    std::vector<int> truth2 = truth;
    for (auto& v : truth2) v = v * 3 + 11;
    CHECK(align_and_score(pred, truth2).error == base);
}

TEST_CASE("subsample_eval basics") {
    const auto all = subsample_eval(10, 10, 5);
    for (std::size_t i = 0; i < 10; ++i) CHECK(all[i] == i);

    const auto a = subsample_eval(1000, 100, 7);
    const auto b = subsample_eval(1000, 100, 7);
    CHECK(a == b);
    CHECK(a.size() == 100);
    CHECK(std::is_sorted(a.begin(), a.end()));

    CHECK_THROWS_AS(subsample_eval(5, 6, 1), InvalidInput);
}

TEST_CASE("subsample class proportions follow the hypergeometric law") {
    // Balanced 5-class population of 2500; samples of 500.
    const std::size_t n = 2500, n_eval = 500, per = 500;
    const double frac = static_cast<double>(per) / n;
    const double sigma = std::sqrt(n_eval * frac * (1 - frac) *
                                   (static_cast<double>(n - n_eval) / (n - 1)));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto idx = subsample_eval(n, n_eval, seed);
        std::vector<int> counts(5, 0);
        for (std::size_t i : idx) ++counts[i / per];
        for (int c : counts)
            CHECK(std::fabs(c - static_cast<double>(n_eval) / 5.0) <= 3.0 * sigma);
    }
}

TEST_CASE("aggregate of a single row is that row") {
    SweepRow row;
    row.method = "csc";
    row.rho = 0.5;
    row.seed = 0;
    row.error = 0.25;
    row.accuracy = 0.75;
    const SweepSummary s = aggregate_sweep({row});
    REQUIRE(s.grid == std::vector<double>{0.5});
    REQUIRE(s.methods.size() == 1);
    CHECK(s.methods[0].mean_accuracy[0] == 0.75);
    CHECK(s.methods[0].grand_mean_accuracy == 0.75);
    CHECK(s.methods[0].grand_mean_error == 0.25);
}

TEST_CASE("table-style aggregation over the displayed grid") {
    // Accuracy row 46.40, 58.72, 72.16, 71.92, 72.16 over rho {0.1,...,0.9}:
    // the mean over the five displayed points is 64.27, not the 65.95 a wider
    // grid would give; the grid in use is recorded alongside the means.
    const std::vector<double> grid = {0.1, 0.3, 0.5, 0.7, 0.9};
    const std::vector<double> acc = {46.40, 58.72, 72.16, 71.92, 72.16};
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        SweepRow r;
        r.method = "csc-mlp10";
        r.rho = grid[i];
        r.seed = 0;
        r.accuracy = acc[i];
        r.error = 100.0 - acc[i];
        rows.push_back(r);
    }
    const SweepSummary s = aggregate_sweep(rows);
    CHECK(s.grid == grid);
    CHECK(s.methods[0].grand_mean_accuracy == doctest::Approx(64.272).epsilon(1e-12));
    CHECK(std::fabs(s.methods[0].grand_mean_accuracy - 64.27) < 0.01);
    CHECK(std::fabs(s.methods[0].grand_mean_accuracy - 65.95) > 1.0);
}

TEST_CASE("aggregation is invariant to row order and skips failed cells") {
    std::vector<SweepRow> rows;
    for (int i = 0; i < 6; ++i) {
        SweepRow r;
        r.method = i % 2 ? "a" : "b";
        r.rho = i < 4 ? 0.3 : 0.7;
        r.seed = static_cast<std::uint64_t>(i);
        r.accuracy = 0.1 * (i + 1);
        r.error = 1.0 - r.accuracy;
        rows.push_back(r);
    }
    SweepRow failed;
    failed.method = "a";
    failed.rho = 0.3;
    failed.seed = 99;
    failed.error = std::numeric_limits<double>::quiet_NaN();
    failed.accuracy = std::numeric_limits<double>::quiet_NaN();
    failed.reason = "diverged";
    rows.push_back(failed);

    const SweepSummary s1 = aggregate_sweep(rows);
    std::reverse(rows.begin(), rows.end());
    const SweepSummary s2 = aggregate_sweep(rows);
    REQUIRE(s1.methods.size() == s2.methods.size());
    for (std::size_t i = 0; i < s1.methods.size(); ++i) {
        CHECK(s1.methods[i].method == s2.methods[i].method);
        CHECK(s1.methods[i].mean_accuracy == s2.methods[i].mean_accuracy);
        CHECK(s1.methods[i].grand_mean_accuracy == s2.methods[i].grand_mean_accuracy);
    }
    for (const auto& m : s1.methods)
        for (double v : m.mean_accuracy) CHECK(std::isfinite(v));
}

TEST_CASE("methods are ordered by descending grand mean accuracy") {
    std::vector<SweepRow> rows;
    const auto add = [&](const std::string& m, double acc) {
        SweepRow r;
        r.method = m;
        r.rho = 0.5;
        r.accuracy = acc;
        r.error = 1.0 - acc;
        rows.push_back(r);
    };
    add("weak", 0.3);
    add("strong", 0.9);
    add("middle", 0.6);
    const SweepSummary s = aggregate_sweep(rows);
    CHECK(s.methods[0].method == "strong");
    CHECK(s.methods[1].method == "middle");
    CHECK(s.methods[2].method == "weak");
}

TEST_CASE("csv writers emit the documented headers") {
    const auto dir = std::filesystem::temp_directory_path() / "csc_test" / "csv";
    std::filesystem::create_directories(dir);

    SweepRow row;
    row.method = "zf-ssc";
    row.rho = 0.5;
    row.seed = 1;
    row.error = 0.125;
    row.accuracy = 0.875;
    write_sweep_csv({row}, dir / "sweep.csv");
    std::ifstream in(dir / "sweep.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "method,rho,seed,error,accuracy,seconds,reason");
    std::getline(in, line);
    CHECK(line == "zf-ssc,0.5,1,0.125,0.875,0,");

    const SweepSummary s = aggregate_sweep({row});
    write_summary_csv(s, dir / "summary.csv");
    std::ifstream ins(dir / "summary.csv");
    std::getline(ins, line);
    CHECK(line == "# grid=0.5");
    std::getline(ins, line);
    CHECK(line == "method,rho=0.5,mean");
    std::getline(ins, line);
    CHECK(line == "zf-ssc,0.875,0.875");
}
