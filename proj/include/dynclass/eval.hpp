#pragma once

#include <string>
#include <vector>

#include "dynclass/em.hpp"
#include "dynclass/simulate.hpp"
#include "dynclass/types.hpp"

namespace dynclass {

// Percentage of matching labels.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// One-vs-rest Mann-Whitney AUC per class; ties count 1/2. Classes absent from
// the truth get NaN.
Vector one_vs_rest_auc(const Matrix& scores, const std::vector<int>& truth);

struct SelectionMetrics {
    double c = 0.0;    // correctly selected signal groups
    double ic = 0.0;   // selected noise groups
    double mcc = 0.0;  // on the p-length selection indicator; 0/0 -> 0
};

SelectionMetrics selection_metrics(const Matrix& beta_hat, const std::vector<bool>& true_support);

// Mean integrated squared difference between intercept curves, trapezoid rule
// on an equally spaced grid.
Vector misd(const DiscriminativeParams& fitted, const DiscriminativeParams& reference,
            double t_max, int grid = 1000);

struct BlockErrors {
    double tran = 0.0;  // free transition rates
    double emis = 0.0;  // feasible emission entries
    double init = 0.0;
    double beta = 0.0;
};

// Mean squared error per parameter block, mask-respecting.
BlockErrors squared_error_blocks(const ModelParams& fitted, const ModelParams& truth);

struct ReplicationRow {
    int replication = 0;
    std::string method;
    double accuracy_posterior = 0.0;
    double accuracy_viterbi = 0.0;  // NaN when the method has no sequence rule
    Vector auc;
    SelectionMetrics selection;
    BlockErrors mse;
    bool failed = false;
    std::string error;
};

struct MethodSummary {
    std::string method;
    double accuracy_posterior = 0.0;
    double accuracy_viterbi = 0.0;
    Vector auc;
    SelectionMetrics selection;
    BlockErrors mse;
    int replications = 0;
    int failures = 0;
};

struct BenchmarkConfig {
    SimulationConfig sim;
    FitConfig fit;
    int replications = 1;
    std::vector<std::string> methods{"proposed", "dknown", "hmm", "obs"};
};

struct BenchmarkResult {
    std::vector<ReplicationRow> rows;
    std::vector<MethodSummary> summary;
};

// One replication on a prepared study; exposed for reuse by the acceptance
// harness.
std::vector<ReplicationRow> evaluate_study(const Study& study, const FitConfig& fit_cfg,
                                           const std::vector<std::string>& methods,
                                           int replication);

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg);

}  // namespace dynclass
