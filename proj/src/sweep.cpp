#include "csc/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "csc/errors.hpp"
#include "csc/parallel.hpp"
#include "csc/rng.hpp"
#include "json.hpp"

namespace csc {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (dataset.is_synthetic) dataset.synthetic.validate();
    if (eval.rho_grid.empty()) throw InvalidConfig("eval: rho_grid must be nonempty");
    for (double rho : eval.rho_grid)
        if (!(rho > 0.0) || rho > 1.0) throw InvalidConfig("eval: rho values must be in (0, 1]");
    if (eval.seeds.empty()) throw InvalidConfig("eval: seeds must be nonempty");
    if (eval.methods.empty()) throw InvalidConfig("eval: methods must be nonempty");
    for (const auto& m : eval.methods)
        if (m != "csc" && m != "mae" && m != "zf-ssc")
            throw InvalidConfig("eval: unknown method `" + m + "`");
    if (eval.n_eval == 0) throw InvalidConfig("eval: n_eval must be >= 1");
}

namespace {

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw InvalidConfig("unknown optimizer: " + s);
}

std::string optimizer_to_string(OptimizerKind k) {
    return k == OptimizerKind::Adam ? "adam" : "sgd";
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

BackboneConfig parse_backbone(const json& j) {
    BackboneConfig b;
    b.depth = get_or<std::size_t>(j, "depth", 4);
    b.width = get_or<std::size_t>(j, "width", 0);
    b.residual = residual_mode_from_string(get_or<std::string>(j, "residual", "full"));
    b.embed_dim = get_or<std::size_t>(j, "embed_dim", 0);
    b.head_hidden = get_or<std::size_t>(j, "head_hidden", 0);
    b.head_out = get_or<std::size_t>(j, "head_out", 64);
    return b;
}

TrainConfig parse_train(const json& j) {
    TrainConfig t;
    t.batch_size = get_or<std::size_t>(j, "batch_size", 128);
    t.epochs = get_or<std::size_t>(j, "epochs", 50);
    t.learning_rate = get_or<double>(j, "learning_rate", 1e-3);
    t.temperature = get_or<double>(j, "temperature", 0.5);
    t.optimizer = optimizer_from_string(get_or<std::string>(j, "optimizer", "adam"));
    t.adam_beta1 = get_or<double>(j, "adam_beta1", 0.9);
    t.adam_beta2 = get_or<double>(j, "adam_beta2", 0.999);
    t.adam_eps = get_or<double>(j, "adam_eps", 1e-8);
    t.sgd_momentum = get_or<double>(j, "sgd_momentum", 0.0);
    t.seed = get_or<std::uint64_t>(j, "seed", 0);
    t.view_keep_prob = get_or<double>(j, "view_keep_prob", 1.0);
    t.freeze_views = get_or<bool>(j, "freeze_views", false);
    return t;
}

MaeConfig parse_mae(const json& j) {
    MaeConfig m;
    m.encoder_depth = get_or<std::size_t>(j, "encoder_depth", 4);
    m.width = get_or<std::size_t>(j, "width", 0);
    m.bottleneck = get_or<std::size_t>(j, "bottleneck", 0);
    m.mask_ratio = get_or<double>(j, "mask_ratio", 0.5);
    m.batch_size = get_or<std::size_t>(j, "batch_size", 128);
    m.epochs = get_or<std::size_t>(j, "epochs", 50);
    m.learning_rate = get_or<double>(j, "learning_rate", 1e-3);
    m.optimizer = optimizer_from_string(get_or<std::string>(j, "optimizer", "adam"));
    m.adam_beta1 = get_or<double>(j, "adam_beta1", 0.9);
    m.adam_beta2 = get_or<double>(j, "adam_beta2", 0.999);
    m.adam_eps = get_or<double>(j, "adam_eps", 1e-8);
    m.sgd_momentum = get_or<double>(j, "sgd_momentum", 0.0);
    m.seed = get_or<std::uint64_t>(j, "seed", 0);
    return m;
}

SscConfig parse_cluster(const json& j) {
    SscConfig c;
    c.lambda_rel = get_or<double>(j, "lambda_rel", 0.5);
    c.max_iter = get_or<std::size_t>(j, "max_iter", 1000);
    c.tol = get_or<double>(j, "tol", 1e-6);
    c.k = get_or<std::size_t>(j, "k", 0);
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.accelerated = get_or<bool>(j, "accelerated", false);
    return c;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }

    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (d.contains("path")) {
            cfg.dataset.is_synthetic = false;
            cfg.dataset.path = d.at("path").get<std::string>();
        }
        if (d.contains("synthetic")) {
            const json& s = d.at("synthetic");
            cfg.dataset.is_synthetic = !d.contains("path");
            cfg.dataset.synthetic.k = get_or<std::size_t>(s, "k", 5);
            cfg.dataset.synthetic.r = get_or<std::size_t>(s, "r", 10);
            cfg.dataset.synthetic.d = get_or<std::size_t>(s, "d", 128);
            cfg.dataset.synthetic.n_total = get_or<std::size_t>(s, "n_total", 5000);
            cfg.dataset.synthetic.sigma = get_or<double>(s, "sigma", 0.1);
            cfg.dataset.synthetic.rho = get_or<double>(s, "rho", 0.5);
            cfg.dataset.synthetic.seed = get_or<std::uint64_t>(s, "seed", 0);
        }
        cfg.dataset.normalize_columns = get_or<bool>(d, "normalize_columns", false);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        if (m.contains("backbone")) cfg.backbone = parse_backbone(m.at("backbone"));
        else cfg.backbone.width = 0;
        if (m.contains("train")) cfg.train_cfg = parse_train(m.at("train"));
        if (m.contains("mae")) cfg.mae_cfg = parse_mae(m.at("mae"));
        else cfg.mae_cfg.width = 0;
    } else {
        cfg.backbone.width = 0;
        cfg.mae_cfg.width = 0;
    }
    if (j.contains("cluster")) cfg.cluster_cfg = parse_cluster(j.at("cluster"));
    else cfg.cluster_cfg.k = 0;
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        cfg.eval.n_eval = get_or<std::size_t>(e, "n_eval", 500);
        if (e.contains("rho_grid")) cfg.eval.rho_grid = e.at("rho_grid").get<std::vector<double>>();
        if (e.contains("seeds")) cfg.eval.seeds = e.at("seeds").get<std::vector<std::uint64_t>>();
        if (e.contains("methods"))
            cfg.eval.methods = e.at("methods").get<std::vector<std::string>>();
    }
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open config: " + file.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_experiment_config(text);
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
    json j;
    if (cfg.dataset.is_synthetic) {
        j["dataset"]["synthetic"] = {{"k", cfg.dataset.synthetic.k},
                                     {"r", cfg.dataset.synthetic.r},
                                     {"d", cfg.dataset.synthetic.d},
                                     {"n_total", cfg.dataset.synthetic.n_total},
                                     {"sigma", cfg.dataset.synthetic.sigma},
                                     {"rho", cfg.dataset.synthetic.rho},
                                     {"seed", cfg.dataset.synthetic.seed}};
    } else {
        j["dataset"]["path"] = cfg.dataset.path.string();
    }
    j["dataset"]["normalize_columns"] = cfg.dataset.normalize_columns;
    j["model"]["backbone"] = {{"depth", cfg.backbone.depth},
                              {"width", cfg.backbone.width},
                              {"residual", to_string(cfg.backbone.residual)},
                              {"embed_dim", cfg.backbone.embed_dim},
                              {"head_hidden", cfg.backbone.head_hidden},
                              {"head_out", cfg.backbone.head_out}};
    j["model"]["train"] = {{"batch_size", cfg.train_cfg.batch_size},
                           {"epochs", cfg.train_cfg.epochs},
                           {"learning_rate", cfg.train_cfg.learning_rate},
                           {"temperature", cfg.train_cfg.temperature},
                           {"optimizer", optimizer_to_string(cfg.train_cfg.optimizer)},
                           {"seed", cfg.train_cfg.seed},
                           {"view_keep_prob", cfg.train_cfg.view_keep_prob},
                           {"freeze_views", cfg.train_cfg.freeze_views}};
    j["model"]["mae"] = {{"encoder_depth", cfg.mae_cfg.encoder_depth},
                         {"width", cfg.mae_cfg.width},
                         {"bottleneck", cfg.mae_cfg.bottleneck},
                         {"mask_ratio", cfg.mae_cfg.mask_ratio},
                         {"batch_size", cfg.mae_cfg.batch_size},
                         {"epochs", cfg.mae_cfg.epochs},
                         {"learning_rate", cfg.mae_cfg.learning_rate},
                         {"optimizer", optimizer_to_string(cfg.mae_cfg.optimizer)}};
    j["cluster"] = {{"lambda_rel", cfg.cluster_cfg.lambda_rel},
                    {"max_iter", cfg.cluster_cfg.max_iter},
                    {"tol", cfg.cluster_cfg.tol},
                    {"k", cfg.cluster_cfg.k},
                    {"accelerated", cfg.cluster_cfg.accelerated}};
    j["eval"] = {{"n_eval", cfg.eval.n_eval},
                 {"rho_grid", cfg.eval.rho_grid},
                 {"seeds", cfg.eval.seeds},
                 {"methods", cfg.eval.methods}};
    j["seed"] = cfg.seed;
    return j.dump(1);
}

std::uint64_t cell_seed(std::uint64_t root, const std::string& tag, std::size_t rho_index,
                        std::size_t seed_index) {
    std::uint64_t h = splitmix64(root ^ fnv1a64(tag.c_str()));
    h = splitmix64(h + rho_index);
    h = splitmix64(h + seed_index);
    return h;
}

namespace {

struct CellTask {
    std::string method;
    std::size_t rho_index;
    std::size_t seed_index;
};

ObservedDataset build_cell_dataset(const ExperimentConfig& cfg, const ObservedDataset* external,
                                   double rho, std::uint64_t dataset_seed) {
    if (cfg.dataset.is_synthetic) {
        SyntheticConfig scfg = cfg.dataset.synthetic;
        scfg.rho = rho;
        scfg.seed = subseed(dataset_seed, 0);
        SyntheticGroundTruth gt = generate_clean(scfg);
        if (cfg.dataset.normalize_columns) {
            normalize_columns(gt.clean);
        }
        return observe(gt, scfg.sigma, rho, subseed(dataset_seed, 1));
    }
    ObservedDataset ds = apply_extra_mask(*external, rho, subseed(dataset_seed, 1));
    return ds;
}

std::size_t distinct_label_count(const std::vector<int>& labels) {
    std::set<int> s(labels.begin(), labels.end());
    return s.size();
}

}  // namespace

SweepOutput run_sweep(const ExperimentConfig& cfg, bool timing, std::size_t jobs) {
    cfg.validate();

    ObservedDataset external;
    if (!cfg.dataset.is_synthetic) {
        external = load_dataset(cfg.dataset.path);
        if (cfg.dataset.normalize_columns) normalize_columns(external.values);
        if (!external.labels)
            throw InvalidInput("run: external dataset has no labels.csv, cannot score");
    }

    std::vector<CellTask> tasks;
    for (const auto& method : cfg.eval.methods)
        for (std::size_t ri = 0; ri < cfg.eval.rho_grid.size(); ++ri)
            for (std::size_t si = 0; si < cfg.eval.seeds.size(); ++si)
                tasks.push_back({method, ri, si});

    SweepOutput out;
    out.rows.resize(tasks.size());
    out.cells.resize(tasks.size());

    parallel_for(0, tasks.size(), jobs > 1, [&](std::size_t t) {
        const CellTask& task = tasks[t];
        const double rho = cfg.eval.rho_grid[task.rho_index];
        const std::uint64_t seed_value = cfg.eval.seeds[task.seed_index];

        CellRecord rec;
        rec.method = task.method;
        rec.rho = rho;
        rec.seed = seed_value;
        rec.cell_seed = cell_seed(cfg.seed, task.method, task.rho_index, task.seed_index);
        rec.dataset_seed = cell_seed(cfg.seed, "dataset", task.rho_index, task.seed_index);
        rec.eval_seed = cell_seed(cfg.seed, "eval", task.rho_index, task.seed_index);

        SweepRow row;
        row.method = task.method;
        row.rho = rho;
        row.seed = seed_value;

        const auto t0 = std::chrono::steady_clock::now();
        try {
            ObservedDataset ds = build_cell_dataset(
                cfg, cfg.dataset.is_synthetic ? nullptr : &external, rho, rec.dataset_seed);
            if (!ds.labels) throw InvalidInput("run: dataset has no labels, cannot score");

            const std::size_t n = ds.count();
            const std::size_t n_eval = std::min(cfg.eval.n_eval, n);
            const std::vector<std::size_t> eval_idx = subsample_eval(n, n_eval, rec.eval_seed);
            const ObservedDataset ds_eval = select_columns(ds, eval_idx);

            SscConfig ccfg = cfg.cluster_cfg;
            if (ccfg.k == 0)
                ccfg.k = cfg.dataset.is_synthetic ? cfg.dataset.synthetic.k
                                                  : distinct_label_count(*ds.labels);
            ccfg.seed = subseed(rec.cell_seed, 1);

            std::vector<int> pred;
            if (task.method == "zf-ssc") {
                pred = zf_ssc(ds_eval, ccfg);
            } else {
                // Train on the complement of the evaluation subsample.
                std::vector<std::size_t> train_idx;
                train_idx.reserve(n - n_eval);
                std::size_t cursor = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (cursor < eval_idx.size() && eval_idx[cursor] == j) {
                        ++cursor;
                        continue;
                    }
                    train_idx.push_back(j);
                }
                if (train_idx.empty())
                    throw InvalidInput("run: no training samples left after holdout");
                const ObservedDataset ds_train = select_columns(ds, train_idx);

                Matrix h;
                if (task.method == "csc") {
                    BackboneConfig bcfg = cfg.backbone;
                    if (bcfg.width == 0) bcfg.width = ds.dim();
                    TrainConfig tcfg = cfg.train_cfg;
                    tcfg.seed = subseed(rec.cell_seed, 0);
                    tcfg.batch_size = std::min(tcfg.batch_size, ds_train.count());
                    const TrainResult tr = train(ds_train, bcfg, tcfg);
                    h = embed(tr.params, bcfg, ds_eval);
                } else {
                    MaeConfig mcfg = cfg.mae_cfg;
                    if (mcfg.width == 0) mcfg.width = ds.dim();
                    mcfg.seed = subseed(rec.cell_seed, 0);
                    mcfg.batch_size = std::min(mcfg.batch_size, ds_train.count());
                    const TrainResult tr = train_mae(ds_train, mcfg);
                    h = mae_encode(tr.params, mcfg, ds_eval);
                }
                pred = ssc(h, ccfg);
            }

            const ClusteringResult score = align_and_score(pred, *ds_eval.labels);
            row.error = score.error;
            row.accuracy = score.accuracy;
            rec.status = "ok";
        } catch (const std::exception& e) {
            row.error = std::numeric_limits<double>::quiet_NaN();
            row.accuracy = std::numeric_limits<double>::quiet_NaN();
            row.reason = e.what();
            rec.status = "failed";
            rec.reason = e.what();
        }
        const auto t1 = std::chrono::steady_clock::now();
        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
        row.seconds = timing ? rec.seconds : 0.0;

        out.rows[t] = std::move(row);
        out.cells[t] = std::move(rec);
    });

    out.summary = aggregate_sweep(out.rows);
    return out;
}

AblateAxis ablate_axis_from_string(const std::string& s) {
    if (s == "depth") return AblateAxis::Depth;
    if (s == "residual") return AblateAxis::Residual;
    if (s == "batch_size") return AblateAxis::BatchSize;
    throw InvalidConfig("unknown ablation axis: " + s);
}

std::string to_string(AblateAxis a) {
    switch (a) {
        case AblateAxis::Depth: return "depth";
        case AblateAxis::Residual: return "residual";
        case AblateAxis::BatchSize: return "batch_size";
    }
    return "depth";
}

AblateOutput run_ablate(const ExperimentConfig& cfg, AblateAxis axis,
                        const std::vector<std::string>& values, bool timing, std::size_t jobs) {
    if (values.empty()) throw InvalidConfig("ablate: no axis values given");
    AblateOutput out;
    out.axis = axis;
    for (const auto& value : values) {
        ExperimentConfig c = cfg;
        switch (axis) {
            case AblateAxis::Depth:
                c.backbone.depth = static_cast<std::size_t>(std::stoul(value));
                break;
            case AblateAxis::Residual:
                c.backbone.residual = residual_mode_from_string(value);
                break;
            case AblateAxis::BatchSize:
                c.train_cfg.batch_size = static_cast<std::size_t>(std::stoul(value));
                c.mae_cfg.batch_size = c.train_cfg.batch_size;
                break;
        }
        AblateRun run;
        run.value = value;
        run.output = run_sweep(c, timing, jobs);
        out.runs.push_back(std::move(run));
    }
    return out;
}

void write_ablate_csv(const AblateOutput& out, const std::filesystem::path& file) {
    std::ofstream f(file);
    if (!f) throw IoError("cannot open for writing: " + file.string());
    f << "axis,value,method,rho,seed,error,accuracy,seconds,reason\n";
    const auto fmt = [](double v) {
        if (std::isnan(v)) return std::string("nan");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    for (const auto& run : out.runs) {
        for (const auto& r : run.output.rows) {
            f << to_string(out.axis) << ',' << run.value << ',' << r.method << ','
              << fmt(r.rho) << ',' << r.seed << ',' << fmt(r.error) << ',' << fmt(r.accuracy)
              << ',' << fmt(r.seconds) << ',' << r.reason << "\n";
        }
    }
    if (!f) throw IoError("write failed: " + file.string());
}

}  // namespace csc
