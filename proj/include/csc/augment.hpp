#pragma once

#include <vector>

#include "csc/rng.hpp"

namespace csc {

// Two disjointly masked views of one partially observed sample: the positive
// pair for contrastive training. mask_a and mask_b never overlap, and their
// union never exceeds the sample's own observation mask.
struct ViewPair {
    std::vector<double> view_a, view_b;
    std::vector<double> mask_a, mask_b;
};

// Assigns every observed entry (m = 1) independently and uniformly to exactly
// one of the two views. With keep_prob < 1 each assigned entry is additionally
// kept only with that probability, so the union becomes a strict subset of m.
ViewPair sample_disjoint_views(const std::vector<double>& y, const std::vector<double>& m,
                               Rng& rng, double keep_prob = 1.0);

}  // namespace csc
