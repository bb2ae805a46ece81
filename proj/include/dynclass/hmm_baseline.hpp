#pragma once

#include <vector>

#include "dynclass/em.hpp"
#include "dynclass/types.hpp"

namespace dynclass {

struct HmmParams {
    InitialDistribution init;
    TransitionIntensityMatrix intensity;
    EmissionMatrix emission;
};

struct HmmFitResult {
    HmmParams params;
    std::vector<double> loglik_trace;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> diagnostics;
};

// Baum-Welch on surrogate labels only, with interval transition kernels.
HmmFitResult fit_hmm(const Dataset& data, const FitConfig& cfg);

struct HmmDecodeResult {
    Matrix posteriors;  // m x (K+1) smoothed state probabilities
    std::vector<int> viterbi_path;
    double log_prob = 0.0;
};

// Classical forward-backward and Viterbi using the surrogate labels.
HmmDecodeResult hmm_decode(const HmmParams& params, const SubjectRecord& subject);

}  // namespace dynclass
