#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csc/cluster.hpp"
#include "csc/dataset.hpp"
#include "csc/eval.hpp"
#include "csc/mae.hpp"
#include "csc/model.hpp"

namespace csc {

struct DatasetSection {
    bool is_synthetic = true;
    SyntheticConfig synthetic;
    std::filesystem::path path;  // external dataset directory when !is_synthetic
    bool normalize_columns = false;
};

struct EvalSection {
    std::size_t n_eval = 500;
    std::vector<double> rho_grid = {0.3, 0.5, 0.7, 0.9};
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::vector<std::string> methods = {"csc", "mae", "zf-ssc"};
};

struct ExperimentConfig {
    DatasetSection dataset;
    BackboneConfig backbone;   // width 0 means "use the dataset dimension"
    TrainConfig train_cfg;
    MaeConfig mae_cfg;         // width 0 means "use the dataset dimension"
    SscConfig cluster_cfg;     // k 0 means "use the dataset's cluster count"
    EvalSection eval;
    std::uint64_t seed = 0;

    void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& file);
ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_json(const ExperimentConfig& cfg);  // config echo

// Documented per-cell seed derivation: mixing the root seed with the method
// tag and the grid indices keeps every cell's randomness independent of which
// other methods or grid points are configured.
std::uint64_t cell_seed(std::uint64_t root, const std::string& tag, std::size_t rho_index,
                        std::size_t seed_index);

struct CellRecord {
    std::string method;
    double rho = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t cell_seed = 0;
    std::uint64_t dataset_seed = 0;
    std::uint64_t eval_seed = 0;
    std::string status;  // "ok" or "failed"
    std::string reason;
    double seconds = 0.0;  // wall time, recorded in meta regardless of `timing`
};

struct SweepOutput {
    std::vector<SweepRow> rows;
    std::vector<CellRecord> cells;
    SweepSummary summary;
};

// Runs every (method, rho, seed) cell: build the dataset at rho, train when
// the method needs it, embed, cluster, and score on the held-out subsample.
// Cell failures are recorded (error = NaN, reason set) and the sweep continues.
// `timing` controls whether wall times appear in the CSV rows; they are always
// recorded in the cell metadata.
SweepOutput run_sweep(const ExperimentConfig& cfg, bool timing = false, std::size_t jobs = 1);

enum class AblateAxis { Depth, Residual, BatchSize };

AblateAxis ablate_axis_from_string(const std::string& s);
std::string to_string(AblateAxis a);

struct AblateRun {
    std::string value;
    SweepOutput output;
};

struct AblateOutput {
    AblateAxis axis;
    std::vector<AblateRun> runs;
};

// One sweep per axis value, everything else held fixed.
AblateOutput run_ablate(const ExperimentConfig& cfg, AblateAxis axis,
                        const std::vector<std::string>& values, bool timing = false,
                        std::size_t jobs = 1);

// Long-format CSV combining all ablation runs.
void write_ablate_csv(const AblateOutput& out, const std::filesystem::path& file);

}  // namespace csc
