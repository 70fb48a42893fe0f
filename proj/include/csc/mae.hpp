#pragma once

#include <cstdint>
#include <filesystem>

#include "csc/dataset.hpp"
#include "csc/model.hpp"

namespace csc {

// Masked autoencoder of capacity comparable to the contrastive backbone:
// symmetric MLP encoder/decoder with the encoder stored as ModelParams
// backbone layers and the decoder as the head layers.
struct MaeConfig {
    std::size_t encoder_depth = 4;
    std::size_t width = 128;     // input/hidden dimension, mirrors BackboneConfig
    std::size_t bottleneck = 0;  // latent p; 0 means width
    double mask_ratio = 0.5;     // fraction of observed entries hidden per step

    std::size_t batch_size = 128;
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double sgd_momentum = 0.0;
    std::uint64_t seed = 0;

    std::size_t bottleneck_or_default() const { return bottleneck ? bottleneck : width; }
    void validate() const;
};

ModelParams init_mae(const MaeConfig& cfg, std::uint64_t seed);

// Per step: hide a mask_ratio fraction of each sample's observed entries,
// reconstruct from the rest, and minimize squared error over the observed
// entries only (hidden and visible alike; never the missing ones).
TrainResult train_mae(const ObservedDataset& ds, const MaeConfig& cfg);

// Encoder latents of the zero-filled observed columns (nothing hidden).
Matrix mae_encode(const ModelParams& params, const MaeConfig& cfg, const ObservedDataset& ds);

// Loss and exact gradients for one fixed batch, for gradient checking: x is
// the masked input (d x B), target the zero-filled sample, loss_mask in {0,1}.
BatchGrad mae_batch_loss_and_grad(const ModelParams& params, const MaeConfig& cfg,
                                  const Matrix& x, const Matrix& target,
                                  const Matrix& loss_mask);

void save_checkpoint_mae(const ModelParams& params, const MaeConfig& cfg,
                         const std::vector<double>& loss_trace,
                         const std::filesystem::path& file);

struct MaeCheckpoint {
    ModelParams params;
    MaeConfig config;
    std::vector<double> loss_trace;
};
MaeCheckpoint load_checkpoint_mae(const std::filesystem::path& file);

}  // namespace csc
