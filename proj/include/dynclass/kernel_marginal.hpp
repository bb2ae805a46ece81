#pragma once

#include <string>
#include <vector>

#include "dynclass/types.hpp"

namespace dynclass {

struct KernelConfig {
    double bandwidth = 0.0;  // a_n > 0
};

// kappa(u) = 3/4 (1 - u^2) on [-1, 1].
double epanechnikov(double u);

// a_n = t_star * n^{-1/5}
double default_bandwidth(int n, double t_star);

// P(D(t) = k) under the fitted chain: pi' exp(tR).
Vector hmm_state_marginal(const InitialDistribution& init, const TransitionIntensityMatrix& r,
                          double t);

// Pools every observation of the dataset; the class probability inside the
// average uses the intercept at the query time and the pooled observation's
// markers. Rebuilding is required whenever the discriminative parameters move.
class NwMarginalEvaluator {
  public:
    NwMarginalEvaluator(const Dataset& data, const DiscriminativeParams& discrim,
                        const KernelConfig& cfg);

    // Falls back to the HMM-dual marginal on an empty kernel window.
    Vector evaluate(double t, const InitialDistribution& init,
                    const TransitionIntensityMatrix& r,
                    std::vector<std::string>* warnings = nullptr) const;

  private:
    const DiscriminativeParams* discrim_;
    double bandwidth_;
    std::vector<double> times_;   // sorted
    Matrix exp_marker_score_;     // (K+1) x N, exp(beta_k' x - rowmax), sorted like times_
};

Vector nw_state_marginal(const Dataset& data, const DiscriminativeParams& discrim,
                         const KernelConfig& cfg, double t, const InitialDistribution& init,
                         const TransitionIntensityMatrix& r,
                         std::vector<std::string>* warnings = nullptr);

}  // namespace dynclass
