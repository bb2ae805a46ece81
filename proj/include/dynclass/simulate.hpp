#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dynclass/types.hpp"

namespace dynclass {

enum class Scenario { I, II, III };  // continuous, mixed, AR(1)-correlated

struct SimulationConfig {
    int num_states = 4;  // healthy + 3 disease states
    int num_markers = 4;
    Scenario scenario = Scenario::I;
    int n = 200;             // training subjects; test gets 2n
    double t_max = 10.0;     // training horizon
    double test_horizon = 7.0;
    double visit_mean_train = 6.0;  // m = 2 + Poisson(mean)
    double visit_mean_test = 3.0;
    int pool_size = 100000;
    std::uint64_t seed = 0;
};

// Fixed progressive 4-state truth (healthy, two single diseases, combined
// absorbing state); marker classes use the first four markers, the rest are
// noise. Requires num_states = 4 and p >= 4.
ModelParams canonical_truth(int num_markers, double t_max = 10.0);

// m_i = 2 + Poisson(mean); first time 0, the rest uniform on (0, horizon),
// sorted, with near-collisions resampled.
std::vector<double> sample_visit_schedule(double mean, double horizon, std::mt19937_64& rng);

// Candidate markers grouped by the label drawn from the intercept-free
// logistic model; every group is nonempty.
struct MarkerPool {
    std::vector<std::vector<Vector>> groups;  // one bucket per state
};

MarkerPool build_marker_pool(const SimulationConfig& cfg, const ModelParams& truth,
                             std::mt19937_64& rng);

Vector sample_marker(const SimulationConfig& cfg, std::mt19937_64& rng);

struct GeneratedCohort {
    Dataset data;
    std::vector<std::vector<int>> truth;  // latent D at each visit, per subject
};

GeneratedCohort generate_cohort(const ModelParams& truth, const MarkerPool& pool, int n,
                                double horizon, double visit_mean, bool final_state_known,
                                const std::string& id_prefix, std::mt19937_64& rng);

struct Study {
    GeneratedCohort train;
    GeneratedCohort test;
    ModelParams truth;
};

// Train: n subjects on [0, t_max), visits 2 + Poisson(visit_mean_train),
// final state recorded. Test: 2n subjects on [0, test_horizon), visits
// 2 + Poisson(visit_mean_test), final state withheld.
Study make_study(const SimulationConfig& cfg);

}  // namespace dynclass
