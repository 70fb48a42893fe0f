#include <cmath>

#include "csc/augment.hpp"
#include "csc/errors.hpp"
#include "doctest.h"

using namespace csc;

TEST_CASE("fully unobserved samples give empty views") {
    std::vector<double> y(5, 0.0), m(5, 0.0);
    Rng rng(1);
    const ViewPair vp = sample_disjoint_views(y, m, rng);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(vp.view_a[i] == 0.0);
        CHECK(vp.view_b[i] == 0.0);
        CHECK(vp.mask_a[i] == 0.0);
        CHECK(vp.mask_b[i] == 0.0);
    }
}

TEST_CASE("fully observed samples split roughly in half") {
    const std::size_t d = 10000;
    std::vector<double> y(d, 1.0), m(d, 1.0);
    Rng rng(2);
    const ViewPair vp = sample_disjoint_views(y, m, rng);
    double in_a = 0.0;
    for (double v : vp.mask_a) in_a += v;
    const double sigma = std::sqrt(d * 0.25);
    CHECK(std::fabs(in_a - d / 2.0) < 3.0 * sigma);
}

TEST_CASE("views partition the observed entries") {
    Rng data_rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + data_rng.uniform_index(60);
        std::vector<double> y(d, 0.0), m(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            if (data_rng.bernoulli(0.6)) {
                m[i] = 1.0;
                y[i] = data_rng.normal();
            }
        }
        Rng rng(trial);
        const ViewPair vp = sample_disjoint_views(y, m, rng);

        double overlap = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            overlap += vp.mask_a[i] * vp.mask_b[i];
            // Containment: the union never exceeds the sample's own mask.
            CHECK(vp.mask_a[i] + vp.mask_b[i] <= m[i]);
            // Reconstruction: on the union the two views recover y exactly.
            const double u = vp.mask_a[i] + vp.mask_b[i];
            if (u != 0.0) CHECK(vp.view_a[i] + vp.view_b[i] == y[i]);
            if (vp.mask_a[i] == 0.0) CHECK(vp.view_a[i] == 0.0);
            if (vp.mask_b[i] == 0.0) CHECK(vp.view_b[i] == 0.0);
            // Full bipartition: every observed entry lands in exactly one view.
            CHECK(u == m[i]);
        }
        CHECK(overlap == 0.0);
    }
}

TEST_CASE("keep_prob below one drops entries from both views") {
    const std::size_t d = 20000;
    std::vector<double> y(d, 1.0), m(d, 1.0);
    Rng rng(5);
    const ViewPair vp = sample_disjoint_views(y, m, rng, 0.5);
    double covered = 0.0, overlap = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        covered += vp.mask_a[i] + vp.mask_b[i];
        overlap += vp.mask_a[i] * vp.mask_b[i];
        CHECK(vp.mask_a[i] + vp.mask_b[i] <= m[i]);
    }
    CHECK(overlap == 0.0);
    const double sigma = std::sqrt(d * 0.25);
    CHECK(std::fabs(covered - d / 2.0) < 3.0 * sigma);
}

TEST_CASE("view sampling is deterministic per generator state") {
    std::vector<double> y = {1.0, 2.0, 0.0, 4.0, 5.0};
    std::vector<double> m = {1.0, 1.0, 0.0, 1.0, 1.0};
    Rng a(9), b(9);
    const ViewPair va = sample_disjoint_views(y, m, a);
    const ViewPair vb = sample_disjoint_views(y, m, b);
    CHECK(va.view_a == vb.view_a);
    CHECK(va.view_b == vb.view_b);
    CHECK(va.mask_a == vb.mask_a);
    CHECK(va.mask_b == vb.mask_b);
}

TEST_CASE("mismatched lengths and bad keep_prob are rejected") {
    std::vector<double> y(3, 0.0), m(4, 0.0);
    Rng rng(1);
    CHECK_THROWS_AS(sample_disjoint_views(y, m, rng), DimensionMismatch);
    std::vector<double> m3(3, 0.0);
    CHECK_THROWS_AS(sample_disjoint_views(y, m3, rng, 0.0), InvalidConfig);
}
