#pragma once

#include <string>
#include <vector>

#include "dynclass/eval.hpp"
#include "dynclass/types.hpp"

namespace dynclass {

// Cohort CSV: subject_id,time,z,d_last_known,x1..xp. Rows for one subject must
// be contiguous and time-ordered.
void write_cohort_csv(const Dataset& data, const std::string& path);
Dataset read_cohort_csv(const std::string& path);

// Truth CSV: subject_id,time,d_true; written separately, never read by fit.
void write_truth_csv(const Dataset& data, const std::vector<std::vector<int>>& truth,
                     const std::string& path);
std::vector<std::vector<int>> read_truth_csv(const std::string& path, const Dataset& data);

struct PredictionRow {
    std::string subject_id;
    double time = 0.0;
    int predicted_state = 0;
    Vector probs;  // empty for sequence rules
};

void write_predictions_csv(const std::vector<PredictionRow>& rows, int num_states,
                           const std::string& path);
std::vector<PredictionRow> read_predictions_csv(const std::string& path);

// Long format: metric,class,value.
struct MetricRow {
    std::string metric;
    std::string cls;
    double value = 0.0;
};

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::string& path);

void write_benchmark_csv(const BenchmarkResult& result, const std::string& rows_path,
                         const std::string& summary_path);

}  // namespace dynclass
