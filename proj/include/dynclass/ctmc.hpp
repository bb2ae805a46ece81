#pragma once

#include <random>
#include <string>
#include <vector>

#include "dynclass/types.hpp"

namespace dynclass {

struct TransitionProbabilityMatrix {
    Matrix q;
    double dt = 0.0;
};

// Scaling-and-squaring with a 13th-order Pade approximant.
Matrix matrix_exponential(const Matrix& m);

// exp(dt * R), rows clamped to [0,1]; entries structurally unreachable under the
// transitive closure of the mask are zeroed. Clamping beyond 1e-12 appends a
// warning when a report channel is given.
TransitionProbabilityMatrix transition_probability(const TransitionIntensityMatrix& r, double dt,
                                                   std::vector<std::string>* warnings = nullptr);

// Latent states at the requested visit times only: D_1 ~ pi, then interval
// transition kernels between consecutive times.
std::vector<int> sample_ctmc_states(const InitialDistribution& init,
                                    const TransitionIntensityMatrix& r,
                                    const std::vector<double>& times, std::mt19937_64& rng);

}  // namespace dynclass
