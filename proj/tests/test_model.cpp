#include <cmath>
#include <filesystem>

#include "csc/dataset.hpp"
#include "csc/errors.hpp"
#include "csc/model.hpp"
#include "csc/rng.hpp"
#include "doctest.h"

using namespace csc;

namespace {

bool layers_equal(const std::vector<Layer>& a, const std::vector<Layer>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i].w == b[i].w) || a[i].b != b[i].b) return false;
    return true;
}

bool params_equal(const ModelParams& a, const ModelParams& b) {
    return layers_equal(a.backbone, b.backbone) && layers_equal(a.head, b.head);
}

void zero_params(ModelParams& p) {
    for (auto* group : {&p.backbone, &p.head})
        for (auto& l : *group) {
            l.w = Matrix(l.w.rows(), l.w.cols());
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
}

Matrix random_rows(std::size_t n, std::size_t q, std::uint64_t seed) {
    Rng rng(seed);
    Matrix z(n, q);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) z(i, j) = rng.normal();
    return z;
}

// Direct-summation NT-Xent oracle: evaluates the loss by enumerating every
// anchor/candidate pair, sharing no code with the library implementation.
double nt_xent_oracle(const Matrix& za, const Matrix& zb, double tau) {
    const std::size_t n = za.rows(), q = za.cols();
    const auto at = [&](std::size_t u) {
        std::vector<double> v(q);
        for (std::size_t j = 0; j < q; ++j) v[j] = u < n ? za(u, j) : zb(u - n, j);
        return v;
    };
    const auto sim = [&](const std::vector<double>& x, const std::vector<double>& y) {
        double xy = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            xy += x[j] * y[j];
            xx += x[j] * x[j];
            yy += y[j] * y[j];
        }
        return xy / (std::sqrt(xx) * std::sqrt(yy));
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (int view = 0; view < 2; ++view) {
            const std::size_t anchor = view == 0 ? i : i + n;
            const std::size_t pos = view == 0 ? i + n : i;
            const auto a = at(anchor);
            double denom = 0.0;
            for (std::size_t other = 0; other < 2 * n; ++other) {
                if (other == anchor) continue;
                denom += std::exp(sim(a, at(other)) / tau);
            }
            total += -std::log(std::exp(sim(a, at(pos)) / tau) / denom);
        }
    }
    return total / (2.0 * static_cast<double>(n));
}

double rel_grad_error(const Matrix& analytic, const Matrix& numeric) {
    double scale = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        scale = std::max(scale, std::fabs(analytic.data()[i]));
    scale = std::max(scale, 1e-8);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, std::fabs(analytic.data()[i] - numeric.data()[i]));
    return worst / scale;
}

}  // namespace

TEST_CASE("init_model produces the expected shapes") {
    BackboneConfig cfg;
    cfg.depth = 1;
    cfg.width = 4;
    cfg.residual = ResidualMode::None;
    cfg.head_out = 3;
    const ModelParams p = init_model(cfg, 1);
    REQUIRE(p.backbone.size() == 1);
    CHECK(p.backbone[0].w.rows() == 4);
    CHECK(p.backbone[0].w.cols() == 4);
    CHECK(p.backbone[0].b.size() == 4);
    REQUIRE(p.head.size() == 2);
    CHECK(p.head[0].w.rows() == 4);
    CHECK(p.head[1].w.rows() == 3);
    for (double b : p.backbone[0].b) CHECK(b == 0.0);
}

TEST_CASE("init_model is deterministic per seed") {
    BackboneConfig cfg;
    cfg.depth = 3;
    cfg.width = 6;
    CHECK(params_equal(init_model(cfg, 42), init_model(cfg, 42)));
    CHECK(!params_equal(init_model(cfg, 42), init_model(cfg, 43)));
}

TEST_CASE("incompatible residual widths are rejected") {
    BackboneConfig cfg;
    cfg.depth = 2;
    cfg.width = 8;
    cfg.embed_dim = 4;
    cfg.residual = ResidualMode::Full;
    CHECK_THROWS_AS(init_model(cfg, 1), InvalidConfig);
    cfg.residual = ResidualMode::Block;  // depth 2 ends on a skip
    CHECK_THROWS_AS(init_model(cfg, 1), InvalidConfig);
    cfg.residual = ResidualMode::None;
    CHECK_NOTHROW(init_model(cfg, 1));
    cfg.residual = ResidualMode::Block;
    cfg.depth = 3;  // trailing unpaired layer may change width
    CHECK_NOTHROW(init_model(cfg, 1));
}

TEST_CASE("deep forward pass stays finite") {
    BackboneConfig cfg;
    cfg.depth = 8;
    cfg.width = 16;
    const ModelParams p = init_model(cfg, 7);
    const ForwardResult r = forward(p, cfg, std::vector<double>(16, 0.0));
    for (double v : r.h) CHECK(std::isfinite(v));
    for (double v : r.z) CHECK(std::isfinite(v));
}

TEST_CASE("zero input with zero biases maps to zero") {
    BackboneConfig cfg;
    cfg.depth = 3;
    cfg.width = 5;
    for (ResidualMode mode : {ResidualMode::Full, ResidualMode::Block, ResidualMode::None}) {
        cfg.residual = mode;
        const ModelParams p = init_model(cfg, 11);  // biases are zero at init
        const ForwardResult r = forward(p, cfg, std::vector<double>(5, 0.0));
        for (double v : r.h) CHECK(v == 0.0);
        for (double v : r.z) CHECK(v == 0.0);
    }
}

TEST_CASE("single skip-free layer with identity weights is a ReLU") {
    BackboneConfig cfg;
    cfg.depth = 1;
    cfg.width = 4;
    cfg.residual = ResidualMode::None;
    ModelParams p = init_model(cfg, 3);
    p.backbone[0].w = Matrix::identity(4);
    std::fill(p.backbone[0].b.begin(), p.backbone[0].b.end(), 0.0);
    const std::vector<double> x = {1.5, -2.0, 0.0, 3.0};
    const ForwardResult r = forward(p, cfg, x);
    CHECK(r.h == std::vector<double>{1.5, 0.0, 0.0, 3.0});
}

TEST_CASE("zero weights: full residual passes the input, no residual kills it") {
    BackboneConfig cfg;
    cfg.depth = 3;
    cfg.width = 4;
    const std::vector<double> x = {0.5, 1.25, 0.0, 2.0};  // nonnegative input

    cfg.residual = ResidualMode::Full;
    ModelParams p = init_model(cfg, 5);
    zero_params(p);
    ForwardResult r = forward(p, cfg, x);
    CHECK(r.h == x);  // each layer contributes relu(0) = 0 on top of the skip
    for (double v : r.z) CHECK(v == 0.0);

    cfg.residual = ResidualMode::None;
    ModelParams p2 = init_model(cfg, 5);
    zero_params(p2);
    r = forward(p2, cfg, x);
    for (double v : r.h) CHECK(v == 0.0);
}

TEST_CASE("full residual with zero weights passes nonnegative inputs unchanged") {
    BackboneConfig cfg;
    cfg.depth = 5;
    cfg.width = 6;
    cfg.residual = ResidualMode::Full;
    ModelParams p = init_model(cfg, 13);
    zero_params(p);
    Rng rng(17);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> x(6);
        for (auto& v : x) v = std::fabs(rng.normal());
        const ForwardResult r = forward(p, cfg, x);
        CHECK(r.h == x);
    }
}

TEST_CASE("block residual skips across pairs of layers") {
    BackboneConfig cfg;
    cfg.depth = 2;
    cfg.width = 3;
    cfg.residual = ResidualMode::Block;
    ModelParams p = init_model(cfg, 19);
    zero_params(p);
    const std::vector<double> x = {1.0, -2.0, 3.0};
    // Both layers output relu(0) = 0; the pair skip adds the raw input back.
    const ForwardResult r = forward(p, cfg, x);
    CHECK(r.h == x);

    cfg.depth = 3;  // trailing unpaired layer has no skip: everything dies
    ModelParams p3 = init_model(cfg, 19);
    zero_params(p3);
    const ForwardResult r3 = forward(p3, cfg, x);
    for (double v : r3.h) CHECK(v == 0.0);
}

TEST_CASE("nt_xent with a single pair is exactly zero") {
    Matrix za(1, 3), zb(1, 3);
    za(0, 0) = 1.0;
    za(0, 1) = -0.5;
    za(0, 2) = 2.0;
    zb(0, 0) = 0.3;
    zb(0, 1) = 0.9;
    zb(0, 2) = -1.0;
    const NtXent r = nt_xent_loss(za, zb, 0.5);
    CHECK(std::fabs(r.loss) <= 1e-12);
    CHECK(max_abs(r.grad_a) <= 1e-12);
    CHECK(max_abs(r.grad_b) <= 1e-12);
}

TEST_CASE("nt_xent on identical projections hits log(2N-1)") {
    for (std::size_t n : {2u, 4u, 8u}) {
        Matrix za(n, 4), zb(n, 4);
        for (std::size_t i = 0; i < n; ++i) {
            za(i, 0) = zb(i, 0) = 1.0;
            za(i, 2) = zb(i, 2) = -2.0;
        }
        const NtXent r = nt_xent_loss(za, zb, 0.5);
        CHECK(std::fabs(r.loss - std::log(2.0 * n - 1.0)) < 1e-9);
    }
}

TEST_CASE("nt_xent matches the direct-summation oracle") {
    const Matrix za = random_rows(2, 2, 31);
    const Matrix zb = random_rows(2, 2, 37);
    const double tau = 0.5;
    const NtXent r = nt_xent_loss(za, zb, tau);
    CHECK(r.loss == doctest::Approx(nt_xent_oracle(za, zb, tau)).epsilon(1e-12));

    // Gradients against central differences of the oracle.
    const double h = 1e-5;
    Matrix fd_a(2, 2), fd_b(2, 2);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            Matrix zp = za, zm = za;
            zp(i, j) += h;
            zm(i, j) -= h;
            fd_a(i, j) = (nt_xent_oracle(zp, zb, tau) - nt_xent_oracle(zm, zb, tau)) / (2 * h);
            Matrix wp = zb, wm = zb;
            wp(i, j) += h;
            wm(i, j) -= h;
            fd_b(i, j) = (nt_xent_oracle(za, wp, tau) - nt_xent_oracle(za, wm, tau)) / (2 * h);
        }
    }
    CHECK(rel_grad_error(r.grad_a, fd_a) < 1e-6);
    CHECK(rel_grad_error(r.grad_b, fd_b) < 1e-6);
}

TEST_CASE("nt_xent gradients match finite differences across sizes") {
    int instance = 0;
    for (std::size_t n : {2u, 3u, 4u}) {
        for (std::size_t q : {2u, 4u, 8u}) {
            for (double tau : {0.1, 0.5, 1.0}) {
                const Matrix za = random_rows(n, q, 100 + instance);
                const Matrix zb = random_rows(n, q, 200 + instance);
                ++instance;
                const NtXent r = nt_xent_loss(za, zb, tau);
                const double h = 1e-5;
                Matrix fd(n, q);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < q; ++j) {
                        Matrix zp = za, zm = za;
                        zp(i, j) += h;
                        zm(i, j) -= h;
                        fd(i, j) = (nt_xent_loss(zp, zb, tau).loss -
                                    nt_xent_loss(zm, zb, tau).loss) /
                                   (2 * h);
                    }
                CHECK(rel_grad_error(r.grad_a, fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("nt_xent is invariant to positive row rescaling") {
    const Matrix za = random_rows(3, 5, 41);
    const Matrix zb = random_rows(3, 5, 43);
    const double base = nt_xent_loss(za, zb, 0.5).loss;
    Matrix scaled = za;
    for (std::size_t j = 0; j < 5; ++j) scaled(1, j) *= 7.3;
    CHECK(std::fabs(nt_xent_loss(scaled, zb, 0.5).loss - base) < 1e-9);
}

TEST_CASE("dominant positives push the loss below log(2N-1)") {
    const std::size_t n = 3, q = 4;
    Matrix za(n, q), zb(n, q);
    for (std::size_t i = 0; i < n; ++i) {
        za(i, i) = 1.0;
        zb(i, i) = 1.0;
        za(i, 3) = 0.05;
        zb(i, 3) = -0.04;  // near-aligned positives, near-orthogonal negatives
    }
    const NtXent r = nt_xent_loss(za, zb, 0.5);
    CHECK(r.loss < std::log(2.0 * n - 1.0));
}

TEST_CASE("zero-norm projections are rejected") {
    Matrix za(2, 3), zb(2, 3);
    za(0, 0) = 1.0;
    // za row 1 left all-zero
    zb(0, 1) = 1.0;
    zb(1, 2) = 1.0;
    CHECK_THROWS_AS(nt_xent_loss(za, zb, 0.5), DegenerateProjection);
}

TEST_CASE("train with zero epochs returns initialized params and empty trace") {
    SyntheticConfig scfg;
    scfg.k = 2;
    scfg.r = 2;
    scfg.d = 8;
    scfg.n_total = 20;
    scfg.seed = 1;
    const ObservedDataset ds = observe(generate_clean(scfg), 0.0, 0.8, 2);
    BackboneConfig bcfg;
    bcfg.depth = 2;
    bcfg.width = 8;
    TrainConfig tcfg;
    tcfg.epochs = 0;
    tcfg.batch_size = 4;
    const TrainResult a = train(ds, bcfg, tcfg);
    const TrainResult b = train(ds, bcfg, tcfg);
    CHECK(a.loss_trace.empty());
    CHECK(params_equal(a.params, b.params));
}

TEST_CASE("batch_size larger than the dataset is rejected") {
    SyntheticConfig scfg;
    scfg.k = 2;
    scfg.r = 2;
    scfg.d = 8;
    scfg.n_total = 6;
    scfg.seed = 1;
    const ObservedDataset ds = observe(generate_clean(scfg), 0.0, 0.8, 2);
    BackboneConfig bcfg;
    bcfg.depth = 1;
    bcfg.width = 8;
    TrainConfig tcfg;
    tcfg.batch_size = 7;
    CHECK_THROWS_AS(train(ds, bcfg, tcfg), InvalidConfig);
}

TEST_CASE("undersized trailing minibatches are dropped without error") {
    SyntheticConfig scfg;
    scfg.k = 1;
    scfg.r = 2;
    scfg.d = 8;
    scfg.n_total = 3;
    scfg.seed = 4;
    const ObservedDataset ds = observe(generate_clean(scfg), 0.0, 1.0, 5);
    BackboneConfig bcfg;
    bcfg.depth = 1;
    bcfg.width = 8;
    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.epochs = 2;
    const TrainResult r = train(ds, bcfg, tcfg);
    CHECK(r.loss_trace.size() == 2);
}

TEST_CASE("training reduces the contrastive loss on the synthetic benchmark") {
    SyntheticConfig scfg;
    scfg.k = 5;
    scfg.r = 8;
    scfg.d = 64;
    scfg.n_total = 2000;
    scfg.sigma = 0.1;
    scfg.rho = 0.7;
    scfg.seed = 1010;
    const ObservedDataset ds = observe(generate_clean(scfg), scfg.sigma, scfg.rho, 1011);
    BackboneConfig bcfg;
    bcfg.depth = 4;
    bcfg.width = 64;
    TrainConfig tcfg;
    tcfg.epochs = 50;
    tcfg.batch_size = 128;
    tcfg.seed = 7;
    const TrainResult r = train(ds, bcfg, tcfg);
    REQUIRE(r.loss_trace.size() == 50);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
}

TEST_CASE("full train-step gradient matches central finite differences") {
    const std::size_t d = 6, batch = 2;
    BackboneConfig cfg;
    cfg.depth = 2;
    cfg.width = d;
    cfg.residual = ResidualMode::Full;
    cfg.head_out = 4;
    ModelParams params = init_model(cfg, 55);

    Rng rng(56);
    // Biases off zero: preactivations exactly on the ReLU kink make finite
    // differences disagree with the subgradient.
    for (auto* group : {&params.backbone, &params.head})
        for (auto& l : *group)
            for (auto& bias : l.b) bias = 0.05 * rng.normal();

    Matrix va(d, batch), vb(d, batch);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < batch; ++j) {
            va(i, j) = rng.bernoulli(0.5) ? rng.normal() : 0.0;
            vb(i, j) = rng.bernoulli(0.5) ? rng.normal() : 0.0;
        }
    for (std::size_t j = 0; j < batch; ++j) {  // no empty views
        va(0, j) = rng.normal();
        vb(1, j) = rng.normal();
    }
    const double tau = 0.5;
    const BatchGrad bg = batch_loss_and_grad(params, cfg, va, vb, tau);

    const double h = 1e-5;
    const auto loss_at = [&](ModelParams& p) {
        return batch_loss_and_grad(p, cfg, va, vb, tau).loss;
    };
    double worst = 0.0, scale = 1e-8;
    const auto check_block = [&](Matrix& w, const Matrix& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double keep = w.data()[i];
            w.data()[i] = keep + h;
            const double up = loss_at(params);
            w.data()[i] = keep - h;
            const double down = loss_at(params);
            w.data()[i] = keep;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::fabs(fd - g.data()[i]));
            scale = std::max(scale, std::fabs(g.data()[i]));
        }
    };
    const auto check_bias = [&](std::vector<double>& b, const std::vector<double>& g) {
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double keep = b[i];
            b[i] = keep + h;
            const double up = loss_at(params);
            b[i] = keep - h;
            const double down = loss_at(params);
            b[i] = keep;
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::fabs(fd - g[i]));
            scale = std::max(scale, std::fabs(g[i]));
        }
    };
    for (std::size_t l = 0; l < params.backbone.size(); ++l) {
        check_block(params.backbone[l].w, bg.grads.backbone[l].w);
        check_bias(params.backbone[l].b, bg.grads.backbone[l].b);
    }
    for (std::size_t l = 0; l < params.head.size(); ++l) {
        check_block(params.head[l].w, bg.grads.head[l].w);
        check_bias(params.head[l].b, bg.grads.head[l].b);
    }
    CHECK(worst / scale < 1e-4);
}

TEST_CASE("training is deterministic per seed") {
    SyntheticConfig scfg;
    scfg.k = 2;
    scfg.r = 3;
    scfg.d = 16;
    scfg.n_total = 60;
    scfg.seed = 21;
    // High sampling rate keeps both masked views nonempty for every sample;
    // an empty view at zero-bias initialization is a degenerate projection.
    const ObservedDataset ds = observe(generate_clean(scfg), 0.1, 0.95, 22);
    BackboneConfig bcfg;
    bcfg.depth = 2;
    bcfg.width = 16;
    TrainConfig tcfg;
    tcfg.epochs = 5;
    tcfg.batch_size = 16;
    tcfg.seed = 77;
    const TrainResult a = train(ds, bcfg, tcfg);
    const TrainResult b = train(ds, bcfg, tcfg);
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(params_equal(a.params, b.params));

    tcfg.seed = 78;
    const TrainResult c = train(ds, bcfg, tcfg);
    CHECK(a.loss_trace != c.loss_trace);
}

TEST_CASE("frozen views also train deterministically") {
    SyntheticConfig scfg;
    scfg.k = 2;
    scfg.r = 2;
    scfg.d = 10;
    scfg.n_total = 40;
    scfg.seed = 31;
    const ObservedDataset ds = observe(generate_clean(scfg), 0.0, 0.7, 32);
    BackboneConfig bcfg;
    bcfg.depth = 1;
    bcfg.width = 10;
    TrainConfig tcfg;
    tcfg.epochs = 3;
    tcfg.batch_size = 8;
    tcfg.freeze_views = true;
    const TrainResult a = train(ds, bcfg, tcfg);
    const TrainResult b = train(ds, bcfg, tcfg);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("embedding with zero weights is zero and acts column-wise") {
    SyntheticConfig scfg;
    scfg.k = 2;
    scfg.r = 2;
    scfg.d = 9;
    scfg.n_total = 12;
    scfg.seed = 61;
    const ObservedDataset ds = observe(generate_clean(scfg), 0.1, 0.5, 62);
    BackboneConfig bcfg;
    bcfg.depth = 2;
    bcfg.width = 9;
    bcfg.residual = ResidualMode::None;
    ModelParams zp = init_model(bcfg, 1);
    zero_params(zp);
    const Matrix e0 = embed(zp, bcfg, ds);
    CHECK(max_abs(e0) == 0.0);

    const ModelParams p = init_model(bcfg, 2);
    const Matrix full = embed(p, bcfg, ds);
    const ObservedDataset one = select_columns(ds, {5});
    const Matrix single = embed(p, bcfg, one);
    for (std::size_t i = 0; i < full.rows(); ++i)
        CHECK(single(i, 0) == full(i, 5));
}

TEST_CASE("checkpoints round-trip exactly") {
    BackboneConfig cfg;
    cfg.depth = 3;
    cfg.width = 7;
    cfg.head_out = 5;
    const ModelParams p = init_model(cfg, 90);
    const std::vector<double> trace = {1.5, 0.75, 0.5001234567890123};
    const auto file = std::filesystem::temp_directory_path() / "csc_test" / "ck.json";
    std::filesystem::create_directories(file.parent_path());
    save_checkpoint_csc(p, cfg, trace, file);
    CHECK(checkpoint_kind(file) == "csc");
    const CscCheckpoint ck = load_checkpoint_csc(file);
    CHECK(params_equal(ck.params, p));
    CHECK(ck.loss_trace == trace);
    CHECK(ck.config.depth == 3);
    CHECK(ck.config.width == 7);
    CHECK(ck.config.head_out == 5);
}
