#include "csc/dataset.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csc/errors.hpp"
#include "csc/linalg.hpp"
#include "csc/rng.hpp"

namespace csc {

void SyntheticConfig::validate() const {
    if (k < 1) throw InvalidConfig("synthetic: k must be >= 1");
    if (r < 1 || r > d) throw InvalidConfig("synthetic: need 1 <= r <= d");
    if (n_total == 0 || n_total % k != 0)
        throw InvalidConfig("synthetic: n_total must be a positive multiple of k");
    if (!(rho > 0.0) || rho > 1.0) throw InvalidConfig("synthetic: rho must be in (0, 1]");
    if (sigma < 0.0) throw InvalidConfig("synthetic: sigma must be >= 0");
}

void ObservedDataset::validate() const {
    if (mask.rows() != values.rows() || mask.cols() != values.cols())
        throw DimensionMismatch("dataset: mask shape differs from values shape");
    for (std::size_t i = 0; i < mask.rows(); ++i) {
        for (std::size_t j = 0; j < mask.cols(); ++j) {
            const double m = mask(i, j);
            if (m != 0.0 && m != 1.0) throw InvalidInput("dataset: mask entry not in {0,1}");
            if (m == 0.0 && values(i, j) != 0.0)
                throw InvalidInput("dataset: nonzero value at unobserved entry");
        }
    }
    if (!values.all_finite()) throw InvalidInput("dataset: non-finite value");
    if (labels && labels->size() != values.cols())
        throw DimensionMismatch("dataset: label count differs from column count");
}

SyntheticGroundTruth generate_clean(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng root(cfg.seed);
    Rng basis_rng = root.child(0);
    Rng coeff_rng = root.child(1);

    SyntheticGroundTruth gt;
    gt.bases.reserve(cfg.k);
    for (std::size_t j = 0; j < cfg.k; ++j) {
        Matrix g(cfg.d, cfg.r);
        for (std::size_t a = 0; a < cfg.d; ++a)
            for (std::size_t b = 0; b < cfg.r; ++b) g(a, b) = basis_rng.normal();
        gt.bases.push_back(qr_orthonormal(g));
    }

    const std::size_t per = cfg.n_total / cfg.k;
    gt.clean = Matrix(cfg.d, cfg.n_total);
    gt.coefficients = Matrix(cfg.r, cfg.n_total);
    gt.labels.resize(cfg.n_total);
    for (std::size_t i = 0; i < cfg.n_total; ++i) {
        const std::size_t c = i / per;
        gt.labels[i] = static_cast<int>(c);
        const Matrix& u = gt.bases[c];
        std::vector<double> a(cfg.r);
        for (auto& x : a) x = coeff_rng.normal();
        gt.coefficients.set_col(i, a);
        for (std::size_t row = 0; row < cfg.d; ++row) {
            double s = 0.0;
            for (std::size_t l = 0; l < cfg.r; ++l) s += u(row, l) * a[l];
            gt.clean(row, i) = s;
        }
    }
    return gt;
}

ObservedDataset observe(const SyntheticGroundTruth& gt, double sigma, double rho,
                        std::uint64_t seed) {
    if (sigma < 0.0) throw InvalidConfig("observe: sigma must be >= 0");
    if (!(rho > 0.0) || rho > 1.0) throw InvalidConfig("observe: rho must be in (0, 1]");
    Rng root(seed);
    Rng noise_rng = root.child(0);
    Rng mask_rng = root.child(1);

    const std::size_t d = gt.clean.rows(), n = gt.clean.cols();
    ObservedDataset ds;
    ds.values = gt.clean;
    if (sigma > 0.0) {
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < n; ++j) ds.values(i, j) += sigma * noise_rng.normal();
    }
    ds.mask = Matrix(d, n);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < n; ++j) ds.mask(i, j) = mask_rng.bernoulli(rho) ? 1.0 : 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (ds.mask(i, j) == 0.0) ds.values(i, j) = 0.0;

    for (std::size_t j = 0; j < n; ++j) {
        bool any = false;
        for (std::size_t i = 0; i < d; ++i)
            if (ds.mask(i, j) != 0.0) {
                any = true;
                break;
            }
        if (!any) ++ds.zero_observation_columns;
    }
    ds.labels = gt.labels;
    return ds;
}

ObservedDataset apply_extra_mask(const ObservedDataset& ds, double rho, std::uint64_t seed) {
    if (!(rho > 0.0) || rho > 1.0) throw InvalidConfig("extra mask: rho must be in (0, 1]");
    ObservedDataset out = ds;
    if (rho == 1.0) return out;
    Rng rng(seed);
    const std::size_t d = out.dim(), n = out.count();
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const bool keep = rng.bernoulli(rho);
            if (!keep && out.mask(i, j) != 0.0) {
                out.mask(i, j) = 0.0;
                out.values(i, j) = 0.0;
            }
        }
    }
    out.zero_observation_columns = 0;
    for (std::size_t j = 0; j < n; ++j) {
        bool any = false;
        for (std::size_t i = 0; i < d; ++i)
            if (out.mask(i, j) != 0.0) {
                any = true;
                break;
            }
        if (!any) ++out.zero_observation_columns;
    }
    return out;
}

ObservedDataset select_columns(const ObservedDataset& ds, const std::vector<std::size_t>& idx) {
    ObservedDataset out;
    const std::size_t d = ds.dim();
    out.values = Matrix(d, idx.size());
    out.mask = Matrix(d, idx.size());
    if (ds.labels) out.labels.emplace(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const std::size_t src = idx[j];
        if (src >= ds.count()) throw InvalidInput("select_columns: index out of range");
        bool any = false;
        for (std::size_t i = 0; i < d; ++i) {
            out.values(i, j) = ds.values(i, src);
            out.mask(i, j) = ds.mask(i, src);
            any = any || out.mask(i, j) != 0.0;
        }
        if (!any) ++out.zero_observation_columns;
        if (ds.labels) (*out.labels)[j] = (*ds.labels)[src];
    }
    return out;
}

void normalize_columns(Matrix& m) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j) * m(i, j);
        s = std::sqrt(s);
        if (s == 0.0) continue;
        for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) /= s;
    }
}

namespace {

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_matrix(const Matrix& m, const std::filesystem::path& file, bool as_int) {
    std::ofstream out(file);
    if (!out) throw IoError("cannot open for writing: " + file.string());
    out << "# d=" << m.rows() << " n=" << m.cols() << "\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            if (as_int)
                out << static_cast<long long>(m(i, j));
            else
                out << format_value(m(i, j));
        }
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + file.string());
}

struct Header {
    std::size_t d, n;
};

Header parse_header(const std::string& line, const std::filesystem::path& file) {
    std::size_t d = 0, n = 0;
    if (std::sscanf(line.c_str(), "# d=%zu n=%zu", &d, &n) != 2 || d == 0 || n == 0)
        throw ParseError(file.string() + ": bad header, expected `# d=<d> n=<n>`", 1);
    return {d, n};
}

Matrix read_matrix(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open: " + file.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(file.string() + ": empty file", 1);
    const Header h = parse_header(line, file);

    Matrix m(h.d, h.n);
    for (std::size_t i = 0; i < h.d; ++i) {
        const std::size_t lineno = i + 2;
        if (!std::getline(in, line))
            throw ParseError(file.string() + ": expected " + std::to_string(h.d) + " rows",
                             lineno);
        std::size_t pos = 0, j = 0;
        while (j < h.n) {
            std::size_t next = line.find(',', pos);
            const std::string tok =
                line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0')
                throw ParseError(file.string() + ": bad number `" + tok + "`", lineno);
            if (!std::isfinite(v))
                throw ParseError(file.string() + ": non-finite value", lineno);
            m(i, j++) = v;
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        if (j != h.n)
            throw ParseError(
                file.string() + ": expected " + std::to_string(h.n) + " columns, got " +
                    std::to_string(j),
                lineno);
        if (line.find(',', pos) != std::string::npos)
            throw ParseError(file.string() + ": too many columns", lineno);
    }
    while (std::getline(in, line)) {
        if (!line.empty())
            throw ParseError(file.string() + ": trailing content", h.d + 2);
    }
    return m;
}

}  // namespace

void save_dataset(const ObservedDataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_matrix(ds.values, dir / "values.csv", false);
    write_matrix(ds.mask, dir / "mask.csv", true);
    if (ds.labels) save_labels_csv(*ds.labels, dir / "labels.csv");
}

ObservedDataset load_dataset(const std::filesystem::path& dir) {
    ObservedDataset ds;
    ds.values = read_matrix(dir / "values.csv");
    ds.mask = read_matrix(dir / "mask.csv");
    if (ds.mask.rows() != ds.values.rows() || ds.mask.cols() != ds.values.cols())
        throw DimensionMismatch("load_dataset: values is " + std::to_string(ds.values.rows()) +
                                "x" + std::to_string(ds.values.cols()) + " but mask is " +
                                std::to_string(ds.mask.rows()) + "x" +
                                std::to_string(ds.mask.cols()));
    for (std::size_t i = 0; i < ds.mask.rows(); ++i) {
        for (std::size_t j = 0; j < ds.mask.cols(); ++j) {
            const double m = ds.mask(i, j);
            if (m != 0.0 && m != 1.0)
                throw ParseError((dir / "mask.csv").string() + ": mask entry not in {0,1}",
                                 i + 2);
            // Observed data is the masked matrix by definition; zero-fill on load.
            if (m == 0.0) ds.values(i, j) = 0.0;
        }
    }
    const auto labels_file = dir / "labels.csv";
    if (std::filesystem::exists(labels_file)) {
        auto labels = load_labels_csv(labels_file);
        if (labels.size() != ds.values.cols())
            throw DimensionMismatch("load_dataset: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(ds.values.cols()) +
                                    " columns");
        ds.labels = std::move(labels);
    }
    for (std::size_t j = 0; j < ds.count(); ++j) {
        bool any = false;
        for (std::size_t i = 0; i < ds.dim(); ++i)
            if (ds.mask(i, j) != 0.0) {
                any = true;
                break;
            }
        if (!any) ++ds.zero_observation_columns;
    }
    return ds;
}

void save_matrix_csv(const Matrix& m, const std::filesystem::path& file) {
    write_matrix(m, file, false);
}

Matrix load_matrix_csv(const std::filesystem::path& file) { return read_matrix(file); }

void save_labels_csv(const std::vector<int>& labels, const std::filesystem::path& file) {
    Matrix row(1, labels.size());
    for (std::size_t j = 0; j < labels.size(); ++j) row(0, j) = labels[j];
    write_matrix(row, file, true);
}

std::vector<int> load_labels_csv(const std::filesystem::path& file) {
    const Matrix row = read_matrix(file);
    if (row.rows() != 1) throw ParseError(file.string() + ": labels must be a single row", 1);
    std::vector<int> labels(row.cols());
    for (std::size_t j = 0; j < row.cols(); ++j) {
        const double v = row(0, j);
        if (v != std::floor(v)) throw ParseError(file.string() + ": label is not an integer", 2);
        labels[j] = static_cast<int>(v);
    }
    return labels;
}

}  // namespace csc
