#include "csc/mae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "csc/errors.hpp"
#include "csc/rng.hpp"
#include "json.hpp"

namespace csc {

void MaeConfig::validate() const {
    if (encoder_depth < 1) throw InvalidConfig("mae: encoder_depth must be >= 1");
    if (width < 1) throw InvalidConfig("mae: width must be >= 1");
    if (!(mask_ratio > 0.0) || !(mask_ratio < 1.0))
        throw InvalidConfig("mae: mask_ratio must be in (0, 1)");
    if (batch_size < 1) throw InvalidConfig("mae: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidConfig("mae: learning_rate must be > 0");
}

namespace {

std::vector<std::size_t> encoder_dims(const MaeConfig& cfg) {
    std::vector<std::size_t> dims(cfg.encoder_depth + 1, cfg.width);
    dims.back() = cfg.bottleneck_or_default();
    return dims;
}

Layer init_layer(std::size_t out, std::size_t in, Rng& rng) {
    Layer l;
    l.w = Matrix(out, in);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j) l.w(i, j) = scale * rng.normal();
    l.b.assign(out, 0.0);
    return l;
}

Matrix linear_batch(const Layer& l, const Matrix& x) {
    Matrix z = matmul(l.w, x);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double* zi = z.row_ptr(i);
        const double bi = l.b[i];
        for (std::size_t j = 0; j < z.cols(); ++j) zi[j] += bi;
    }
    return z;
}

struct MaeCache {
    // Preactivations per layer; pre[i] for encoder layers then decoder layers.
    std::vector<Matrix> pre;
    // inputs[i] is the input of layer i (after the previous ReLU).
    std::vector<Matrix> inputs;
};

// Encoder: ReLU after every layer. Decoder: ReLU after all but the last.
Matrix mae_forward(const ModelParams& p, const Matrix& x, MaeCache* cache) {
    const std::size_t enc = p.backbone.size(), dec = p.head.size();
    Matrix cur = x;
    if (cache) cache->inputs.clear(), cache->pre.clear();
    for (std::size_t l = 0; l < enc + dec; ++l) {
        const Layer& layer = l < enc ? p.backbone[l] : p.head[l - enc];
        if (cache) cache->inputs.push_back(cur);
        Matrix z = linear_batch(layer, cur);
        if (cache) cache->pre.push_back(z);
        const bool last = l + 1 == enc + dec;
        if (!last) {
            for (std::size_t i = 0; i < z.size(); ++i)
                if (z.data()[i] < 0.0) z.data()[i] = 0.0;
        }
        cur = std::move(z);
    }
    return cur;
}

Matrix encoder_forward(const ModelParams& p, const Matrix& x) {
    Matrix cur = x;
    for (const Layer& layer : p.backbone) {
        Matrix z = linear_batch(layer, cur);
        for (std::size_t i = 0; i < z.size(); ++i)
            if (z.data()[i] < 0.0) z.data()[i] = 0.0;
        cur = std::move(z);
    }
    return cur;
}

void mae_backward(const ModelParams& p, const MaeCache& cache, const Matrix& dout,
                  ParamGrads& grads) {
    const std::size_t enc = p.backbone.size(), dec = p.head.size();
    Matrix d = dout;
    for (std::size_t l = enc + dec; l-- > 0;) {
        const bool last = l + 1 == enc + dec;
        if (!last) {
            const Matrix& pre = cache.pre[l];
            for (std::size_t i = 0; i < d.size(); ++i)
                if (pre.data()[i] <= 0.0) d.data()[i] = 0.0;
        }
        Layer& g = l < enc ? grads.backbone[l] : grads.head[l - enc];
        const Layer& layer = l < enc ? p.backbone[l] : p.head[l - enc];
        Matrix dw = matmul_nt(d, cache.inputs[l]);
        for (std::size_t i = 0; i < g.w.size(); ++i) g.w.data()[i] += dw.data()[i];
        for (std::size_t i = 0; i < d.rows(); ++i) {
            double s = 0.0;
            const double* di = d.row_ptr(i);
            for (std::size_t j = 0; j < d.cols(); ++j) s += di[j];
            g.b[i] += s;
        }
        if (l > 0) d = matmul_tn(layer.w, d);
    }
}

ParamGrads make_grads(const ModelParams& params) {
    ParamGrads g;
    for (const auto& l : params.backbone)
        g.backbone.push_back({Matrix(l.w.rows(), l.w.cols()), std::vector<double>(l.b.size(), 0.0)});
    for (const auto& l : params.head)
        g.head.push_back({Matrix(l.w.rows(), l.w.cols()), std::vector<double>(l.b.size(), 0.0)});
    return g;
}

}  // namespace

ModelParams init_mae(const MaeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const auto dims = encoder_dims(cfg);
    ModelParams p;
    for (std::size_t l = 0; l < cfg.encoder_depth; ++l)
        p.backbone.push_back(init_layer(dims[l + 1], dims[l], rng));
    for (std::size_t l = cfg.encoder_depth; l-- > 0;)
        p.head.push_back(init_layer(dims[l], dims[l + 1], rng));
    return p;
}

BatchGrad mae_batch_loss_and_grad(const ModelParams& params, const MaeConfig& cfg,
                                  const Matrix& x, const Matrix& target,
                                  const Matrix& loss_mask) {
    (void)cfg;
    MaeCache cache;
    const Matrix recon = mae_forward(params, x, &cache);
    const std::size_t d = recon.rows(), b = recon.cols();

    // Mean over observed entries per sample, then mean over the batch.
    std::vector<double> obs(b, 0.0);
    for (std::size_t j = 0; j < b; ++j)
        for (std::size_t i = 0; i < d; ++i) obs[j] += loss_mask(i, j);

    double loss = 0.0;
    Matrix dout(d, b);
    for (std::size_t j = 0; j < b; ++j) {
        if (obs[j] == 0.0) continue;  // fully unobserved column, nothing to reconstruct
        double col = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (loss_mask(i, j) == 0.0) continue;
            const double e = recon(i, j) - target(i, j);
            col += e * e;
            dout(i, j) = 2.0 * e / (obs[j] * static_cast<double>(b));
        }
        loss += col / obs[j];
    }
    loss /= static_cast<double>(b);

    BatchGrad out;
    out.loss = loss;
    out.grads = make_grads(params);
    mae_backward(params, cache, dout, out.grads);
    return out;
}

TrainResult train_mae(const ObservedDataset& ds, const MaeConfig& cfg) {
    cfg.validate();
    const std::size_t n = ds.count();
    if (n == 0) throw InvalidInput("train_mae: empty dataset");
    if (ds.dim() != cfg.width) throw InvalidConfig("train_mae: dataset dimension != width");
    if (cfg.batch_size > n) throw InvalidConfig("train_mae: batch_size exceeds sample count");

    TrainResult result;
    result.params = init_mae(cfg, subseed(cfg.seed, 0));
    if (cfg.epochs == 0) return result;

    Rng shuffle_rng(subseed(cfg.seed, 1));
    Rng hide_rng(subseed(cfg.seed, 2));

    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.learning_rate = cfg.learning_rate;
    ocfg.beta1 = cfg.adam_beta1;
    ocfg.beta2 = cfg.adam_beta2;
    ocfg.eps = cfg.adam_eps;
    ocfg.momentum = cfg.sgd_momentum;
    OptimizerState ostate = make_optimizer_state(result.params);

    const std::size_t d = ds.dim();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> observed;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, n);
            const std::size_t b = stop - start;

            Matrix x(d, b), target(d, b), loss_mask(d, b);
            for (std::size_t c = 0; c < b; ++c) {
                const std::size_t j = order[start + c];
                observed.clear();
                for (std::size_t i = 0; i < d; ++i) {
                    const double m = ds.mask(i, j);
                    loss_mask(i, c) = m;
                    const double y = ds.values(i, j) * m;
                    target(i, c) = y;
                    x(i, c) = y;
                    if (m != 0.0) observed.push_back(i);
                }
                // Hide an exact mask_ratio fraction of this sample's observed entries.
                const std::size_t hide =
                    static_cast<std::size_t>(std::llround(cfg.mask_ratio *
                                                          static_cast<double>(observed.size())));
                for (std::size_t t = 0; t < hide; ++t) {
                    const std::size_t pick =
                        t + static_cast<std::size_t>(hide_rng.uniform_index(observed.size() - t));
                    std::swap(observed[t], observed[pick]);
                    x(observed[t], c) = 0.0;
                }
            }

            BatchGrad bg = mae_batch_loss_and_grad(result.params, cfg, x, target, loss_mask);
            optimizer_step(result.params, bg.grads, ocfg, ostate);
            epoch_loss += bg.loss;
            ++steps;
        }
        result.loss_trace.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
    }
    return result;
}

Matrix mae_encode(const ModelParams& params, const MaeConfig& cfg, const ObservedDataset& ds) {
    if (ds.dim() != cfg.width) throw InvalidConfig("mae_encode: dataset dimension != width");
    Matrix x(ds.dim(), ds.count());
    for (std::size_t i = 0; i < ds.dim(); ++i)
        for (std::size_t j = 0; j < ds.count(); ++j)
            x(i, j) = ds.values(i, j) * ds.mask(i, j);
    return encoder_forward(params, x);
}

// --- checkpoints share the csc layer schema under kind "mae"

namespace {

using nlohmann::json;

json layer_to_json(const Layer& l) {
    json j;
    j["rows"] = l.w.rows();
    j["cols"] = l.w.cols();
    j["w"] = std::vector<double>(l.w.data(), l.w.data() + l.w.size());
    j["b"] = l.b;
    return j;
}

Layer layer_from_json(const json& j) {
    Layer l;
    const std::size_t rows = j.at("rows").get<std::size_t>();
    const std::size_t cols = j.at("cols").get<std::size_t>();
    auto w = j.at("w").get<std::vector<double>>();
    l.w = Matrix::from_data(rows, cols, std::move(w));
    l.b = j.at("b").get<std::vector<double>>();
    if (l.b.size() != rows) throw ParseError("checkpoint: bias length != rows");
    return l;
}

}  // namespace

void save_checkpoint_mae(const ModelParams& params, const MaeConfig& cfg,
                         const std::vector<double>& loss_trace,
                         const std::filesystem::path& file) {
    json j;
    j["kind"] = "mae";
    j["config"] = {{"encoder_depth", cfg.encoder_depth},
                   {"width", cfg.width},
                   {"bottleneck", cfg.bottleneck_or_default()},
                   {"mask_ratio", cfg.mask_ratio}};
    j["backbone"] = json::array();
    for (const auto& l : params.backbone) j["backbone"].push_back(layer_to_json(l));
    j["head"] = json::array();
    for (const auto& l : params.head) j["head"].push_back(layer_to_json(l));
    j["loss_trace"] = loss_trace;
    std::ofstream out(file);
    if (!out) throw IoError("cannot open for writing: " + file.string());
    out << j.dump(1) << "\n";
    if (!out) throw IoError("write failed: " + file.string());
}

MaeCheckpoint load_checkpoint_mae(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open: " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(file.string() + ": " + e.what());
    }
    if (j.value("kind", "") != "mae")
        throw ParseError(file.string() + ": not a mae checkpoint");
    MaeCheckpoint ck;
    const json& c = j.at("config");
    ck.config.encoder_depth = c.at("encoder_depth").get<std::size_t>();
    ck.config.width = c.at("width").get<std::size_t>();
    ck.config.bottleneck = c.at("bottleneck").get<std::size_t>();
    ck.config.mask_ratio = c.at("mask_ratio").get<double>();
    ck.config.validate();
    for (const auto& lj : j.at("backbone")) ck.params.backbone.push_back(layer_from_json(lj));
    for (const auto& lj : j.at("head")) ck.params.head.push_back(layer_from_json(lj));
    if (j.contains("loss_trace")) ck.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    if (ck.params.backbone.size() != ck.config.encoder_depth)
        throw ParseError(file.string() + ": encoder layer count != encoder_depth");
    return ck;
}

}  // namespace csc
