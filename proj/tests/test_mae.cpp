#include <cmath>
#include <filesystem>

#include "csc/dataset.hpp"
#include "csc/errors.hpp"
#include "csc/mae.hpp"
#include "csc/rng.hpp"
#include "doctest.h"

using namespace csc;

namespace {

ObservedDataset small_dataset(std::uint64_t seed, double rho = 0.7) {
    SyntheticConfig cfg;
    cfg.k = 2;
    cfg.r = 3;
    cfg.d = 16;
    cfg.n_total = 80;
    cfg.seed = seed;
    return observe(generate_clean(cfg), 0.1, rho, seed + 1);
}

}  // namespace

TEST_CASE("mae config validation") {
    MaeConfig cfg;
    cfg.mask_ratio = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg.mask_ratio = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg.mask_ratio = 0.5;
    cfg.encoder_depth = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
}

TEST_CASE("mae with zero epochs returns the initial params and no trace") {
    const ObservedDataset ds = small_dataset(7);
    MaeConfig cfg;
    cfg.width = 16;
    cfg.epochs = 0;
    cfg.batch_size = 16;
    const TrainResult r = train_mae(ds, cfg);
    CHECK(r.loss_trace.empty());
    CHECK(r.params.backbone.size() == cfg.encoder_depth);
    CHECK(r.params.head.size() == cfg.encoder_depth);
}

TEST_CASE("loss ignores values at unobserved positions") {
    ObservedDataset ds = small_dataset(11);
    MaeConfig cfg;
    cfg.width = 16;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 5;
    const TrainResult clean_run = train_mae(ds, cfg);

    // Corrupt every unobserved entry; training must be bit-identical.
    Rng junk(999);
    for (std::size_t i = 0; i < ds.dim(); ++i)
        for (std::size_t j = 0; j < ds.count(); ++j)
            if (ds.mask(i, j) == 0.0) ds.values(i, j) = 100.0 * junk.normal();
    const TrainResult corrupted_run = train_mae(ds, cfg);
    CHECK(clean_run.loss_trace == corrupted_run.loss_trace);
}

TEST_CASE("mae training reduces reconstruction loss") {
    SyntheticConfig scfg;
    scfg.k = 3;
    scfg.r = 4;
    scfg.d = 32;
    scfg.n_total = 399;
    scfg.seed = 13;
    const ObservedDataset ds = observe(generate_clean(scfg), 0.1, 0.6, 14);
    MaeConfig cfg;
    cfg.width = 32;
    cfg.epochs = 30;
    cfg.batch_size = 64;
    cfg.seed = 3;
    const TrainResult r = train_mae(ds, cfg);
    REQUIRE(r.loss_trace.size() == 30);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
}

TEST_CASE("mae gradients match finite differences") {
    MaeConfig cfg;
    cfg.encoder_depth = 2;
    cfg.width = 5;
    cfg.bottleneck = 3;
    ModelParams params = init_mae(cfg, 21);

    Rng rng(22);
    // Nudge biases off zero so no preactivation sits exactly on the ReLU kink,
    // where the subgradient and finite differences legitimately disagree.
    for (auto* group : {&params.backbone, &params.head})
        for (auto& l : *group)
            for (auto& bias : l.b) bias = 0.05 * rng.normal();

    const std::size_t b = 3;
    Matrix x(5, b), target(5, b), mask(5, b);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < b; ++j) {
            mask(i, j) = rng.bernoulli(0.8) ? 1.0 : 0.0;
            target(i, j) = mask(i, j) * rng.normal();
            x(i, j) = rng.bernoulli(0.5) ? target(i, j) : 0.0;
        }
    for (std::size_t j = 0; j < b; ++j) {  // keep a visible entry per sample
        mask(0, j) = 1.0;
        target(0, j) = rng.normal();
        x(0, j) = target(0, j);
    }
    const BatchGrad bg = mae_batch_loss_and_grad(params, cfg, x, target, mask);

    const double h = 1e-6;
    double worst = 0.0, scale = 1e-8;
    const auto probe = [&](double* slot, double g) {
        const double keep = *slot;
        *slot = keep + h;
        const double up = mae_batch_loss_and_grad(params, cfg, x, target, mask).loss;
        *slot = keep - h;
        const double down = mae_batch_loss_and_grad(params, cfg, x, target, mask).loss;
        *slot = keep;
        worst = std::max(worst, std::fabs((up - down) / (2 * h) - g));
        scale = std::max(scale, std::fabs(g));
    };
    for (std::size_t l = 0; l < params.backbone.size(); ++l) {
        for (std::size_t i = 0; i < params.backbone[l].w.size(); ++i)
            probe(params.backbone[l].w.data() + i, bg.grads.backbone[l].w.data()[i]);
        for (std::size_t i = 0; i < params.backbone[l].b.size(); ++i)
            probe(&params.backbone[l].b[i], bg.grads.backbone[l].b[i]);
    }
    for (std::size_t l = 0; l < params.head.size(); ++l) {
        for (std::size_t i = 0; i < params.head[l].w.size(); ++i)
            probe(params.head[l].w.data() + i, bg.grads.head[l].w.data()[i]);
        for (std::size_t i = 0; i < params.head[l].b.size(); ++i)
            probe(&params.head[l].b[i], bg.grads.head[l].b[i]);
    }
    CHECK(worst / scale < 1e-4);
}

TEST_CASE("encoder with zero weights embeds to zero and acts column-wise") {
    const ObservedDataset ds = small_dataset(31);
    MaeConfig cfg;
    cfg.width = 16;
    ModelParams p = init_mae(cfg, 32);
    for (auto* group : {&p.backbone, &p.head})
        for (auto& l : *group) {
            l.w = Matrix(l.w.rows(), l.w.cols());
            std::fill(l.b.begin(), l.b.end(), 0.0);
        }
    CHECK(max_abs(mae_encode(p, cfg, ds)) == 0.0);

    const ModelParams q = init_mae(cfg, 33);
    const Matrix full = mae_encode(q, cfg, ds);
    const Matrix single = mae_encode(q, cfg, select_columns(ds, {3}));
    for (std::size_t i = 0; i < full.rows(); ++i) CHECK(single(i, 0) == full(i, 3));
}

TEST_CASE("mae capacity stays within twice the contrastive backbone") {
    MaeConfig mcfg;
    mcfg.encoder_depth = 4;
    mcfg.width = 32;
    const ModelParams mae = init_mae(mcfg, 1);

    BackboneConfig bcfg;
    bcfg.depth = 4;
    bcfg.width = 32;
    const ModelParams csc_params = init_model(bcfg, 1);
    std::size_t backbone_count = 0;
    for (const auto& l : csc_params.backbone) backbone_count += l.w.size() + l.b.size();

    CHECK(param_count(mae) <= 2 * backbone_count);
}

TEST_CASE("mae training is deterministic per seed") {
    const ObservedDataset ds = small_dataset(41);
    MaeConfig cfg;
    cfg.width = 16;
    cfg.epochs = 4;
    cfg.batch_size = 20;
    cfg.seed = 9;
    const TrainResult a = train_mae(ds, cfg);
    const TrainResult b = train_mae(ds, cfg);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("mae checkpoints round-trip and carry their kind") {
    MaeConfig cfg;
    cfg.encoder_depth = 2;
    cfg.width = 6;
    cfg.bottleneck = 4;
    const ModelParams p = init_mae(cfg, 77);
    const auto file = std::filesystem::temp_directory_path() / "csc_test" / "mae.json";
    std::filesystem::create_directories(file.parent_path());
    save_checkpoint_mae(p, cfg, {0.5, 0.25}, file);
    CHECK(checkpoint_kind(file) == "mae");
    const MaeCheckpoint ck = load_checkpoint_mae(file);
    CHECK(ck.config.bottleneck == 4);
    CHECK(ck.params.backbone.size() == 2);
    CHECK(ck.params.head.size() == 2);
    CHECK(ck.params.backbone[0].w == p.backbone[0].w);
    CHECK(ck.loss_trace == std::vector<double>{0.5, 0.25});
}
