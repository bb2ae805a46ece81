#pragma once

#include <vector>

#include "dynclass/types.hpp"

namespace dynclass {

struct ViterbiResult {
    std::vector<int> path;
    double log_prob = 0.0;  // max_d delta_m(d), adaptive scale
    Matrix delta;           // m x (K+1), log scale
    Eigen::MatrixXi psi;    // backpointers, sentinel -1 at the first visit
};

struct PosteriorPrediction {
    Vector probs;
    int predicted = 0;  // argmax, lowest index on ties
};

// Eq.-2 class probabilities at the fitted parameters; t must lie in [0, t_star].
PosteriorPrediction posterior_predict(const ModelParams& params, const Vector& x, double t);

// delta_1(d) = P(d | X_1, t_1); delta_{j+1}(d) = [P(d|X_{j+1}) / Phat(d)] max_k q_kd delta_j(k),
// Phat the HMM-dual marginal pi' exp(tR). Surrogate labels are never consumed.
ViterbiResult adaptive_viterbi(const ModelParams& params, const std::vector<double>& times,
                               const Matrix& markers);

// Extends the adaptive Viterbi recursion past the history with the marker
// ratio set to 1 (no X observed); returns the path over history + future.
ViterbiResult forecast(const ModelParams& params, const std::vector<double>& history_times,
                       const Matrix& history_markers, const std::vector<double>& future_times);

}  // namespace dynclass
