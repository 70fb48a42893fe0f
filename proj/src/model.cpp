#include "csc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "csc/augment.hpp"
#include "csc/errors.hpp"
#include "csc/rng.hpp"
#include "json.hpp"

namespace csc {

std::string to_string(ResidualMode m) {
    switch (m) {
        case ResidualMode::Full: return "full";
        case ResidualMode::Block: return "block";
        case ResidualMode::None: return "none";
    }
    return "none";
}

ResidualMode residual_mode_from_string(const std::string& s) {
    if (s == "full") return ResidualMode::Full;
    if (s == "block") return ResidualMode::Block;
    if (s == "none") return ResidualMode::None;
    throw InvalidConfig("unknown residual mode: " + s);
}

void BackboneConfig::validate() const {
    if (depth < 1) throw InvalidConfig("backbone: depth must be >= 1");
    if (width < 1) throw InvalidConfig("backbone: width must be >= 1");
    if (head_out < 1) throw InvalidConfig("backbone: head_out must be >= 1");
    const std::size_t p = embed_dim_or_default();
    if (p < 1) throw InvalidConfig("backbone: embed_dim must be >= 1");
    const bool last_has_skip =
        residual == ResidualMode::Full ||
        (residual == ResidualMode::Block && depth % 2 == 0);
    if (last_has_skip && p != width)
        throw InvalidConfig("backbone: residual skip needs embed_dim == width");
}

void TrainConfig::validate() const {
    if (batch_size < 2) throw InvalidConfig("train: batch_size must be >= 2");
    if (!(learning_rate > 0.0)) throw InvalidConfig("train: learning_rate must be > 0");
    if (!(temperature > 0.0)) throw InvalidConfig("train: temperature must be > 0");
    if (!(view_keep_prob > 0.0) || view_keep_prob > 1.0)
        throw InvalidConfig("train: view_keep_prob must be in (0, 1]");
}

std::size_t param_count(const ModelParams& p) {
    std::size_t n = 0;
    for (const auto* group : {&p.backbone, &p.head})
        for (const auto& layer : *group) n += layer.w.size() + layer.b.size();
    return n;
}

namespace {

Layer init_layer(std::size_t out, std::size_t in, Rng& rng) {
    Layer l;
    l.w = Matrix(out, in);
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < in; ++j) l.w(i, j) = scale * rng.normal();
    l.b.assign(out, 0.0);
    return l;
}

// b broadcast over columns, in place on z = W*x.
Matrix linear_batch(const Layer& l, const Matrix& x) {
    Matrix z = matmul(l.w, x);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double* zi = z.row_ptr(i);
        const double bi = l.b[i];
        for (std::size_t j = 0; j < z.cols(); ++j) zi[j] += bi;
    }
    return z;
}

Matrix relu(const Matrix& z) {
    Matrix a = z;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] < 0.0) a.data()[i] = 0.0;
    return a;
}

void add_in_place(Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

// dpre = dout masked by the ReLU activation pattern of pre.
Matrix relu_backward(const Matrix& dout, const Matrix& pre) {
    Matrix d = dout;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (pre.data()[i] <= 0.0) d.data()[i] = 0.0;
    return d;
}

std::vector<double> row_sums(const Matrix& m) {
    std::vector<double> s(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* mi = m.row_ptr(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += mi[j];
        s[i] = acc;
    }
    return s;
}

void accumulate_layer_grads(Layer& g, const Matrix& dpre, const Matrix& input) {
    add_in_place(g.w, matmul_nt(dpre, input));
    const auto db = row_sums(dpre);
    for (std::size_t i = 0; i < db.size(); ++i) g.b[i] += db[i];
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

ModelParams init_model(const BackboneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ModelParams p;
    const std::size_t pdim = cfg.embed_dim_or_default();
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::size_t out = l + 1 == cfg.depth ? pdim : cfg.width;
        p.backbone.push_back(init_layer(out, cfg.width, rng));
    }
    const std::size_t hh = cfg.head_hidden_or_default();
    p.head.push_back(init_layer(hh, pdim, rng));
    p.head.push_back(init_layer(cfg.head_out, hh, rng));
    return p;
}

Matrix backbone_forward_batch(const ModelParams& params, const BackboneConfig& cfg,
                              const Matrix& x, ForwardCache* cache) {
    if (x.rows() != cfg.width)
        throw DimensionMismatch("backbone: input dimension " + std::to_string(x.rows()) +
                                " != width " + std::to_string(cfg.width));
    if (params.backbone.size() != cfg.depth)
        throw InvalidConfig("backbone: params do not match config depth");

    std::vector<Matrix> pre(cfg.depth);
    std::vector<Matrix> out(cfg.depth + 1);
    out[0] = x;
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        pre[l] = linear_batch(params.backbone[l], out[l]);
        Matrix u = relu(pre[l]);
        if (cfg.residual == ResidualMode::Full && u.rows() == out[l].rows()) {
            add_in_place(u, out[l]);
        } else if (cfg.residual == ResidualMode::Block && l % 2 == 1) {
            add_in_place(u, out[l - 1]);
        }
        out[l + 1] = std::move(u);
    }
    Matrix h = out[cfg.depth];
    if (cache) {
        cache->pre = std::move(pre);
        cache->out = std::move(out);
    }
    return h;
}

Matrix head_forward_batch(const ModelParams& params, const Matrix& h, ForwardCache* cache) {
    Matrix pre1 = linear_batch(params.head[0], h);
    Matrix act1 = relu(pre1);
    Matrix z = linear_batch(params.head[1], act1);
    if (cache) {
        cache->head_pre1 = std::move(pre1);
        cache->head_act1 = std::move(act1);
    }
    return z;
}

ForwardResult forward(const ModelParams& params, const BackboneConfig& cfg,
                      const std::vector<double>& x) {
    Matrix xb(x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i) xb(i, 0) = x[i];
    ForwardCache cache;
    const Matrix hb = backbone_forward_batch(params, cfg, xb, &cache);
    const Matrix zb = head_forward_batch(params, hb, &cache);
    ForwardResult r;
    r.h = hb.col(0);
    r.z = zb.col(0);
    return r;
}

void backward_batch(const ModelParams& params, const BackboneConfig& cfg,
                    const ForwardCache& cache, const Matrix& dz, ParamGrads& grads) {
    // Head: linear -> relu -> linear.
    accumulate_layer_grads(grads.head[1], dz, cache.head_act1);
    Matrix dact1 = matmul_tn(params.head[1].w, dz);
    Matrix dpre1 = relu_backward(dact1, cache.head_pre1);
    accumulate_layer_grads(grads.head[0], dpre1, cache.out[cfg.depth]);
    Matrix dh = matmul_tn(params.head[0].w, dpre1);

    std::vector<Matrix> dout(cfg.depth + 1);
    dout[cfg.depth] = std::move(dh);
    for (std::size_t l = cfg.depth; l-- > 0;) {
        const Matrix& du = dout[l + 1];
        Matrix dpre = relu_backward(du, cache.pre[l]);
        accumulate_layer_grads(grads.backbone[l], dpre, cache.out[l]);
        Matrix dprev = matmul_tn(params.backbone[l].w, dpre);
        if (dout[l].empty())
            dout[l] = std::move(dprev);
        else
            add_in_place(dout[l], dprev);
        if (cfg.residual == ResidualMode::Full && du.rows() == dout[l].rows()) {
            add_in_place(dout[l], du);
        } else if (cfg.residual == ResidualMode::Block && l % 2 == 1) {
            if (dout[l - 1].empty()) dout[l - 1] = Matrix(du.rows(), du.cols());
            add_in_place(dout[l - 1], du);
        }
    }
}

NtXent nt_xent_loss(const Matrix& z_a, const Matrix& z_b, double tau) {
    if (!(tau > 0.0)) throw InvalidConfig("nt_xent: tau must be > 0");
    if (z_a.rows() != z_b.rows() || z_a.cols() != z_b.cols())
        throw DimensionMismatch("nt_xent: view shapes differ");
    const std::size_t n = z_a.rows(), q = z_a.cols();
    if (n < 1) throw InvalidInput("nt_xent: empty batch");
    const std::size_t m = 2 * n;

    // Stacked, row-normalized projections; row u < n is view a of pair u.
    Matrix zhat(m, q);
    std::vector<double> norms(m);
    for (std::size_t u = 0; u < m; ++u) {
        const Matrix& src = u < n ? z_a : z_b;
        const std::size_t row = u < n ? u : u - n;
        double s = 0.0;
        for (std::size_t j = 0; j < q; ++j) s += src(row, j) * src(row, j);
        s = std::sqrt(s);
        if (s == 0.0) throw DegenerateProjection("nt_xent: zero-norm projection row");
        norms[u] = s;
        for (std::size_t j = 0; j < q; ++j) zhat(u, j) = src(row, j) / s;
    }

    Matrix s = matmul_nt(zhat, zhat);
    for (std::size_t i = 0; i < s.size(); ++i) s.data()[i] /= tau;

    const auto positive = [n, m](std::size_t u) { return (u + n) % m; };

    // Softmax over the 2N-1 non-anchor entries of each row; A = P - onehot(pos).
    Matrix a(m, m);
    double loss = 0.0;
    for (std::size_t u = 0; u < m; ++u) {
        double mx = -1e300;
        for (std::size_t v = 0; v < m; ++v)
            if (v != u) mx = std::max(mx, s(u, v));
        double denom = 0.0;
        for (std::size_t v = 0; v < m; ++v)
            if (v != u) denom += std::exp(s(u, v) - mx);
        const double lse = std::log(denom) + mx;
        loss += lse - s(u, positive(u));
        for (std::size_t v = 0; v < m; ++v)
            if (v != u) a(u, v) = std::exp(s(u, v) - mx) / denom;
        a(u, positive(u)) -= 1.0;
    }
    loss /= static_cast<double>(m);

    // d loss / d zhat = (A + A^T) zhat / (2N tau)
    Matrix asym(m, m);
    for (std::size_t u = 0; u < m; ++u)
        for (std::size_t v = 0; v < m; ++v) asym(u, v) = a(u, v) + a(v, u);
    Matrix ghat = matmul(asym, zhat);
    const double inv = 1.0 / (static_cast<double>(m) * tau);
    for (std::size_t i = 0; i < ghat.size(); ++i) ghat.data()[i] *= inv;

    // Through the row normalization: g = (ghat - (ghat . zhat) zhat) / norm.
    NtXent result;
    result.loss = loss;
    result.grad_a = Matrix(n, q);
    result.grad_b = Matrix(n, q);
    for (std::size_t u = 0; u < m; ++u) {
        double proj = 0.0;
        for (std::size_t j = 0; j < q; ++j) proj += ghat(u, j) * zhat(u, j);
        Matrix& dst = u < n ? result.grad_a : result.grad_b;
        const std::size_t row = u < n ? u : u - n;
        for (std::size_t j = 0; j < q; ++j)
            dst(row, j) = (ghat(u, j) - proj * zhat(u, j)) / norms[u];
    }
    return result;
}

BatchGrad batch_loss_and_grad(const ModelParams& params, const BackboneConfig& cfg,
                              const Matrix& views_a, const Matrix& views_b, double tau) {
    ForwardCache cache_a, cache_b;
    const Matrix ha = backbone_forward_batch(params, cfg, views_a, &cache_a);
    const Matrix za = head_forward_batch(params, ha, &cache_a);
    const Matrix hb = backbone_forward_batch(params, cfg, views_b, &cache_b);
    const Matrix zb = head_forward_batch(params, hb, &cache_b);

    const NtXent nt = nt_xent_loss(za.transposed(), zb.transposed(), tau);

    BatchGrad out;
    out.loss = nt.loss;
    out.grads = make_grads(params);
    backward_batch(params, cfg, cache_a, nt.grad_a.transposed(), out.grads);
    backward_batch(params, cfg, cache_b, nt.grad_b.transposed(), out.grads);
    return out;
}

OptimizerState make_optimizer_state(const ModelParams& params) {
    OptimizerState s;
    for (const auto* group : {&params.backbone, &params.head}) {
        for (const auto& l : *group) {
            s.m1.push_back({Matrix(l.w.rows(), l.w.cols()), std::vector<double>(l.b.size(), 0.0)});
            s.m2.push_back({Matrix(l.w.rows(), l.w.cols()), std::vector<double>(l.b.size(), 0.0)});
        }
    }
    return s;
}

namespace {

void adam_update(double* p, const double* g, double* m1, double* m2, std::size_t n,
                 const OptimizerConfig& c, double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * g[i];
        m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * g[i] * g[i];
        const double mhat = m1[i] / bc1;
        const double vhat = m2[i] / bc2;
        p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
    }
}

void sgd_update(double* p, const double* g, double* vel, std::size_t n,
                const OptimizerConfig& c) {
    for (std::size_t i = 0; i < n; ++i) {
        vel[i] = c.momentum * vel[i] + g[i];
        p[i] -= c.learning_rate * vel[i];
    }
}

}  // namespace

void optimizer_step(ModelParams& params, const ParamGrads& grads, const OptimizerConfig& cfg,
                    OptimizerState& state) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    std::size_t slot = 0;
    const auto visit = [&](Layer& p, const Layer& g) {
        Layer& m1 = state.m1[slot];
        Layer& m2 = state.m2[slot];
        ++slot;
        if (cfg.kind == OptimizerKind::Adam) {
            adam_update(p.w.data(), g.w.data(), m1.w.data(), m2.w.data(), p.w.size(), cfg, bc1,
                        bc2);
            adam_update(p.b.data(), g.b.data(), m1.b.data(), m2.b.data(), p.b.size(), cfg, bc1,
                        bc2);
        } else {
            sgd_update(p.w.data(), g.w.data(), m1.w.data(), p.w.size(), cfg);
            sgd_update(p.b.data(), g.b.data(), m1.b.data(), p.b.size(), cfg);
        }
    };
    for (std::size_t i = 0; i < params.backbone.size(); ++i)
        visit(params.backbone[i], grads.backbone[i]);
    for (std::size_t i = 0; i < params.head.size(); ++i) visit(params.head[i], grads.head[i]);
}

namespace {

// Column j of the zero-filled observed matrix; multiplies by the mask so the
// model never sees values at unobserved positions.
void masked_column(const ObservedDataset& ds, std::size_t j, std::vector<double>& y,
                   std::vector<double>& m) {
    const std::size_t d = ds.dim();
    y.resize(d);
    m.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
        m[i] = ds.mask(i, j);
        y[i] = ds.values(i, j) * m[i];
    }
}

}  // namespace

TrainResult train(const ObservedDataset& ds, const BackboneConfig& bcfg,
                  const TrainConfig& tcfg) {
    bcfg.validate();
    tcfg.validate();
    const std::size_t n = ds.count();
    if (n == 0) throw InvalidInput("train: empty dataset");
    if (ds.dim() != bcfg.width)
        throw InvalidConfig("train: dataset dimension != backbone width");
    if (tcfg.batch_size > n) throw InvalidConfig("train: batch_size exceeds sample count");

    TrainResult result;
    result.params = init_model(bcfg, subseed(tcfg.seed, 0));
    if (tcfg.epochs == 0) return result;

    Rng shuffle_rng(subseed(tcfg.seed, 1));
    Rng view_rng(subseed(tcfg.seed, 2));

    // Optional frozen augmentation: one view pair per sample for all epochs.
    std::vector<ViewPair> frozen;
    if (tcfg.freeze_views) {
        frozen.reserve(n);
        std::vector<double> y, m;
        for (std::size_t j = 0; j < n; ++j) {
            masked_column(ds, j, y, m);
            frozen.push_back(sample_disjoint_views(y, m, view_rng, tcfg.view_keep_prob));
        }
    }

    OptimizerConfig ocfg;
    ocfg.kind = tcfg.optimizer;
    ocfg.learning_rate = tcfg.learning_rate;
    ocfg.beta1 = tcfg.adam_beta1;
    ocfg.beta2 = tcfg.adam_beta2;
    ocfg.eps = tcfg.adam_eps;
    ocfg.momentum = tcfg.sgd_momentum;
    OptimizerState ostate = make_optimizer_state(result.params);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> y, m;

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n; start += tcfg.batch_size) {
            const std::size_t stop = std::min(start + tcfg.batch_size, n);
            const std::size_t b = stop - start;
            if (b < 2) break;  // NT-Xent needs at least one negative

            Matrix va(ds.dim(), b), vb(ds.dim(), b);
            for (std::size_t c = 0; c < b; ++c) {
                const std::size_t j = order[start + c];
                if (tcfg.freeze_views) {
                    const ViewPair& vp = frozen[j];
                    for (std::size_t i = 0; i < ds.dim(); ++i) {
                        va(i, c) = vp.view_a[i];
                        vb(i, c) = vp.view_b[i];
                    }
                } else {
                    masked_column(ds, j, y, m);
                    const ViewPair vp =
                        sample_disjoint_views(y, m, view_rng, tcfg.view_keep_prob);
                    for (std::size_t i = 0; i < ds.dim(); ++i) {
                        va(i, c) = vp.view_a[i];
                        vb(i, c) = vp.view_b[i];
                    }
                }
            }

            BatchGrad bg = batch_loss_and_grad(result.params, bcfg, va, vb, tcfg.temperature);
            optimizer_step(result.params, bg.grads, ocfg, ostate);
            epoch_loss += bg.loss;
            ++steps;
        }
        result.loss_trace.push_back(steps ? epoch_loss / static_cast<double>(steps) : 0.0);
    }
    return result;
}

Matrix embed(const ModelParams& params, const BackboneConfig& cfg, const ObservedDataset& ds) {
    if (ds.dim() != cfg.width)
        throw InvalidConfig("embed: dataset dimension != backbone width");
    Matrix x(ds.dim(), ds.count());
    for (std::size_t i = 0; i < ds.dim(); ++i)
        for (std::size_t j = 0; j < ds.count(); ++j)
            x(i, j) = ds.values(i, j) * ds.mask(i, j);
    return backbone_forward_batch(params, cfg, x, nullptr);
}

// --- checkpoint serialization

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
    for (double v : l.b)
        if (!std::isfinite(v)) throw InvalidInput("checkpoint: non-finite bias");
    return l;
}

json read_json_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open: " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(file.string() + ": " + e.what());
    }
    return j;
}

}  // namespace

void save_checkpoint_csc(const ModelParams& params, const BackboneConfig& cfg,
                         const std::vector<double>& loss_trace,
                         const std::filesystem::path& file) {
    json j;
    j["kind"] = "csc";
    j["config"] = {{"depth", cfg.depth},
                   {"width", cfg.width},
                   {"residual", to_string(cfg.residual)},
                   {"embed_dim", cfg.embed_dim_or_default()},
                   {"head_hidden", cfg.head_hidden_or_default()},
                   {"head_out", cfg.head_out}};
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

CscCheckpoint load_checkpoint_csc(const std::filesystem::path& file) {
    const json j = read_json_file(file);
    if (j.value("kind", "") != "csc")
        throw ParseError(file.string() + ": not a csc checkpoint");
    CscCheckpoint ck;
    const json& c = j.at("config");
    ck.config.depth = c.at("depth").get<std::size_t>();
    ck.config.width = c.at("width").get<std::size_t>();
    ck.config.residual = residual_mode_from_string(c.at("residual").get<std::string>());
    ck.config.embed_dim = c.at("embed_dim").get<std::size_t>();
    ck.config.head_hidden = c.at("head_hidden").get<std::size_t>();
    ck.config.head_out = c.at("head_out").get<std::size_t>();
    ck.config.validate();
    for (const auto& lj : j.at("backbone")) ck.params.backbone.push_back(layer_from_json(lj));
    for (const auto& lj : j.at("head")) ck.params.head.push_back(layer_from_json(lj));
    if (j.contains("loss_trace")) ck.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    if (ck.params.backbone.size() != ck.config.depth)
        throw ParseError(file.string() + ": backbone layer count != depth");
    return ck;
}

std::string checkpoint_kind(const std::filesystem::path& file) {
    const json j = read_json_file(file);
    const std::string kind = j.value("kind", "");
    if (kind != "csc" && kind != "mae")
        throw ParseError(file.string() + ": unknown checkpoint kind");
    return kind;
}

}  // namespace csc
