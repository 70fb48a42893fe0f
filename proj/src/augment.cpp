#include "csc/augment.hpp"

#include "csc/errors.hpp"

namespace csc {

ViewPair sample_disjoint_views(const std::vector<double>& y, const std::vector<double>& m,
                               Rng& rng, double keep_prob) {
    if (y.size() != m.size())
        throw DimensionMismatch("sample_disjoint_views: y and m lengths differ");
    if (!(keep_prob > 0.0) || keep_prob > 1.0)
        throw InvalidConfig("sample_disjoint_views: keep_prob must be in (0, 1]");

    const std::size_t d = y.size();
    ViewPair vp;
    vp.view_a.assign(d, 0.0);
    vp.view_b.assign(d, 0.0);
    vp.mask_a.assign(d, 0.0);
    vp.mask_b.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        if (m[i] == 0.0) continue;
        const bool to_a = rng.bernoulli(0.5);
        if (keep_prob < 1.0 && !rng.bernoulli(keep_prob)) continue;
        if (to_a) {
            vp.mask_a[i] = 1.0;
            vp.view_a[i] = y[i];
        } else {
            vp.mask_b[i] = 1.0;
            vp.view_b[i] = y[i];
        }
    }
    return vp;
}

}  // namespace csc
