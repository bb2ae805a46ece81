#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynclass/discriminative.hpp"
#include "dynclass/types.hpp"

namespace dynclass {

struct EStepQuantities {
    Matrix log_forward;      // m x (K+1), adaptive A in log scale
    Matrix log_backward;     // m x (K+1), adaptive B in log scale
    Matrix gamma;            // m x (K+1)
    std::vector<Matrix> xi;  // m-1 matrices; xi[j-1](k,l) pairs visits j-1 and j (0-based)
    double log_norm = 0.0;   // log sum_d A_m(d)
};

enum class MarginalMode { Nw, HmmDual };

struct FitConfig {
    int max_iter = 100;
    double tol = 1e-4;
    int num_starts = 5;  // transition optimization restarts
    PenaltyConfig penalty;
    bool cv = false;
    int cv_folds = 5;
    std::uint64_t seed = 0;
    MarginalMode e_step_marginal = MarginalMode::Nw;
    bool refresh_marginal_every_iter = true;
    double bandwidth = 0.0;  // 0 = t_star * n^{-1/5}
    int spline_order = 4;
    int nm_max_iter = 500;
    double nm_tol = 1e-8;
    BoolMatrix structure_mask;  // empty = all off-diagonal transitions feasible
    BoolMatrix feasible_mask;   // empty = all emissions feasible
};

struct IterationTraceRow {
    int iteration = 0;
    double delta_pi = 0.0, delta_rho = 0.0, delta_emission = 0.0, delta_eta = 0.0,
           delta_beta = 0.0;
    double adaptive_loglik = 0.0;         // at the incoming parameters, this iteration's marginals
    double adaptive_loglik_after = 0.0;   // at the updated parameters, same frozen marginals
};

struct FitResult {
    ModelParams params;
    std::vector<IterationTraceRow> trace;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> diagnostics;
    double chosen_lambda = 0.0;  // when CV selected one
};

// log g_j(d): surrogate emission times the P(d|X_j)/marginal ratio; indicator
// emission at the final visit when the final state is known. When
// classical_ratio is true the marker ratio is dropped (plain HMM recursion).
Matrix compute_log_g(const SubjectRecord& subject, const ModelParams& params,
                     const Matrix& marginals, bool classical_ratio = false,
                     double marker_marginal_constant = 1.0);

Matrix adaptive_forward(const SubjectRecord& subject, const ModelParams& params,
                        const Matrix& marginals);
Matrix adaptive_backward(const SubjectRecord& subject, const ModelParams& params,
                         const Matrix& marginals);

Matrix posterior_marginals(const Matrix& log_forward, const Matrix& log_backward);

EStepQuantities e_step_subject(const SubjectRecord& subject, const ModelParams& params,
                               const Matrix& marginals, bool classical_ratio = false,
                               double marker_marginal_constant = 1.0);

InitialDistribution mstep_initial(const std::vector<EStepQuantities>& estep);

EmissionMatrix mstep_emission(const std::vector<EStepQuantities>& estep,
                              const std::vector<SubjectRecord>& subjects,
                              const EmissionMatrix& previous,
                              std::vector<std::string>* warnings = nullptr);

TransitionIntensityMatrix mstep_transition(const std::vector<EStepQuantities>& estep,
                                           const std::vector<SubjectRecord>& subjects,
                                           const TransitionIntensityMatrix& r_init,
                                           const FitConfig& cfg, std::mt19937_64& rng,
                                           std::vector<std::string>* warnings = nullptr);

WeightedClassificationProblem build_weighted_problem(const std::vector<EStepQuantities>& estep,
                                                     const std::vector<SubjectRecord>& subjects,
                                                     const SplineBasis& basis);

// The Lambda part of the M-step: a weighted multinomial logistic fit with the
// posterior weights. The substituted HMM-dual marginal does not depend on
// Lambda, so it drops out of the objective.
DiscriminativeParams mstep_discriminative(const std::vector<EStepQuantities>& estep,
                                          const std::vector<SubjectRecord>& subjects,
                                          const SplineBasis& basis, const PenaltyConfig& penalty,
                                          const DiscriminativeParams& current,
                                          FitDiagnostics* diag = nullptr,
                                          int inner_max_iter = 2000, double inner_tol = 1e-6);

ModelParams initialize(const Dataset& data, const FitConfig& cfg);

FitResult fit(const Dataset& data, const FitConfig& cfg);

// Observed adaptive log-likelihood sum_i log sum_d A_{i m_i}(d) for the given
// per-subject marginal tables.
double adaptive_loglik(const Dataset& data, const ModelParams& params,
                       const std::vector<Matrix>& marginals, bool classical_ratio = false);

// Per-subject m x (K+1) marginal tables under the requested mode.
std::vector<Matrix> marginal_tables(const Dataset& data, const ModelParams& params,
                                    MarginalMode mode, double bandwidth,
                                    std::vector<std::string>* warnings = nullptr);

std::uint64_t fit_config_hash(const FitConfig& cfg);

}  // namespace dynclass
