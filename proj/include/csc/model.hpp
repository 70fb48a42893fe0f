#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csc/dataset.hpp"
#include "csc/matrix.hpp"

namespace csc {

enum class ResidualMode { Full, Block, None };
enum class OptimizerKind { Adam, Sgd };

std::string to_string(ResidualMode m);
ResidualMode residual_mode_from_string(const std::string& s);

// MLP backbone plus projection head. `width` is both the input dimension and
// the hidden width (the paper's d-wide layers); layer `depth` maps to
// embed_dim. Residual semantics:
//   Full  - out = relu(W u + b) + u at every layer
//   Block - identity skip across each consecutive pair of layers; a trailing
//           unpaired layer is skip-free
//   None  - plain feedforward
struct BackboneConfig {
    std::size_t depth = 4;
    std::size_t width = 128;
    ResidualMode residual = ResidualMode::Full;
    std::size_t embed_dim = 0;    // p; 0 means width
    std::size_t head_hidden = 0;  // 0 means width
    std::size_t head_out = 64;    // q

    std::size_t embed_dim_or_default() const { return embed_dim ? embed_dim : width; }
    std::size_t head_hidden_or_default() const { return head_hidden ? head_hidden : width; }
    void validate() const;  // throws InvalidConfig, incl. residual/width clashes
};

struct TrainConfig {
    std::size_t batch_size = 128;
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    double temperature = 0.5;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double sgd_momentum = 0.0;
    std::uint64_t seed = 0;
    double view_keep_prob = 1.0;
    bool freeze_views = false;  // draw each sample's views once instead of per epoch

    void validate() const;
};

struct Layer {
    Matrix w;               // out x in
    std::vector<double> b;  // out
};

struct ModelParams {
    std::vector<Layer> backbone;
    std::vector<Layer> head;
};

// Gradient buffers with the same shapes as ModelParams.
struct ParamGrads {
    std::vector<Layer> backbone;
    std::vector<Layer> head;
};

std::size_t param_count(const ModelParams& p);

// Weights drawn from N(0, 2/fan_in), biases zero. Deterministic per seed.
ModelParams init_model(const BackboneConfig& cfg, std::uint64_t seed);

// Single-sample forward pass: backbone output h and head projection z.
struct ForwardResult {
    std::vector<double> h;
    std::vector<double> z;
};
ForwardResult forward(const ModelParams& params, const BackboneConfig& cfg,
                      const std::vector<double>& x);

// Column-batched passes used by training and inference.
struct ForwardCache {
    std::vector<Matrix> pre;  // backbone preactivations
    std::vector<Matrix> out;  // out[0] = input, out[l+1] = layer l output
    Matrix head_pre1, head_act1;
};
Matrix backbone_forward_batch(const ModelParams& params, const BackboneConfig& cfg,
                              const Matrix& x, ForwardCache* cache);
Matrix head_forward_batch(const ModelParams& params, const Matrix& h, ForwardCache* cache);

// Accumulates exact gradients for one batched view into `grads`; dz is q x B.
void backward_batch(const ModelParams& params, const BackboneConfig& cfg,
                    const ForwardCache& cache, const Matrix& dz, ParamGrads& grads);

// NT-Xent loss over N positive pairs (2N projections) with cosine similarity
// and temperature tau, plus exact analytic gradients w.r.t. every projection
// row. Throws DegenerateProjection on a zero-norm row.
struct NtXent {
    double loss;
    Matrix grad_a;  // N x q
    Matrix grad_b;  // N x q
};
NtXent nt_xent_loss(const Matrix& z_a, const Matrix& z_b, double tau);

// Loss and full parameter gradient for one fixed pair of view batches (d x B).
struct BatchGrad {
    double loss;
    ParamGrads grads;
};
BatchGrad batch_loss_and_grad(const ModelParams& params, const BackboneConfig& cfg,
                              const Matrix& views_a, const Matrix& views_b, double tau);

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_trace;  // mean loss per epoch
};

// SimCLR-style training on disjoint masked views: per step, draw a minibatch,
// split every sample's observed entries into two views, and minimize NT-Xent.
TrainResult train(const ObservedDataset& ds, const BackboneConfig& bcfg,
                  const TrainConfig& tcfg);

// Backbone embeddings of the zero-filled observed columns; the head is never
// applied at inference.
Matrix embed(const ModelParams& params, const BackboneConfig& cfg, const ObservedDataset& ds);

// --- optimizer shared by the contrastive and autoencoder trainers

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.0;
};

struct OptimizerState {
    std::vector<Layer> m1, m2;  // Adam moments / SGD velocity, zero-initialized
    std::size_t t = 0;
};

OptimizerState make_optimizer_state(const ModelParams& params);
void optimizer_step(ModelParams& params, const ParamGrads& grads, const OptimizerConfig& cfg,
                    OptimizerState& state);

// --- checkpoints: JSON with the config and all layer matrices; exact
// round trip (doubles serialized with shortest round-trip formatting).

struct MaeConfig;  // defined in mae.hpp

void save_checkpoint_csc(const ModelParams& params, const BackboneConfig& cfg,
                         const std::vector<double>& loss_trace,
                         const std::filesystem::path& file);

struct CscCheckpoint {
    ModelParams params;
    BackboneConfig config;
    std::vector<double> loss_trace;
};
CscCheckpoint load_checkpoint_csc(const std::filesystem::path& file);

// Kind tag of a checkpoint file: "csc" or "mae".
std::string checkpoint_kind(const std::filesystem::path& file);

}  // namespace csc
