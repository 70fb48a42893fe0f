#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace csc {

// Clustering error after the best one-to-one alignment of predicted clusters
// to ground-truth clusters.
struct ClusteringResult {
    std::vector<int> predicted;
    std::vector<int> truth;
    double error = 0.0;     // fraction misclassified under the stored alignment
    double accuracy = 0.0;  // 1 - error
    // (predicted label, truth label) pairs; truth -1 for unmatched clusters.
    std::vector<std::pair<int, int>> alignment;
};

// Exhaustive search over label permutations; both label sets must have at
// most 8 distinct values.
ClusteringResult align_brute_force(const std::vector<int>& pred, const std::vector<int>& truth);

// Maximum-weight assignment on the confusion matrix (Hungarian method).
ClusteringResult align_hungarian(const std::vector<int>& pred, const std::vector<int>& truth);

// Dispatches to the exhaustive search when both label sets have <= 8 distinct
// values and to the Hungarian method otherwise; the two agree exactly.
ClusteringResult align_and_score(const std::vector<int>& pred, const std::vector<int>& truth);

// Uniform without-replacement sample of n_eval indices from [0, n), sorted.
std::vector<std::size_t> subsample_eval(std::size_t n, std::size_t n_eval, std::uint64_t seed);

struct SweepRow {
    std::string method;
    double rho = 0.0;
    std::uint64_t seed = 0;
    double error = 0.0;
    double accuracy = 0.0;
    double seconds = 0.0;
    std::string reason;  // non-empty when the cell failed (error/accuracy are NaN)
};

struct MethodSummary {
    std::string method;
    std::vector<double> mean_accuracy;  // aligned with SweepSummary::grid
    std::vector<double> mean_error;
    double grand_mean_accuracy = 0.0;
    double grand_mean_error = 0.0;
};

struct SweepSummary {
    std::vector<double> grid;  // ascending distinct sampling rates
    std::vector<MethodSummary> methods;  // descending by grand mean accuracy
};

// Per-(method, rho) means over seeds, then per-method means over the rho grid
// that was actually run. Failed cells (NaN) are excluded from the means.
SweepSummary aggregate_sweep(const std::vector<SweepRow>& rows);

// sweep.csv: header method,rho,seed,error,accuracy,seconds,reason
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& file);

// summary.csv: `# grid=...` line, then per-method mean accuracy per rho plus
// a final `mean` column, in summary order.
void write_summary_csv(const SweepSummary& summary, const std::filesystem::path& file);

}  // namespace csc
