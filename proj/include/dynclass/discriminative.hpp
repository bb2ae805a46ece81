#pragma once

#include <random>
#include <vector>

#include "dynclass/types.hpp"

namespace dynclass {

// Softmax of Eq.-style linear predictors with class 0 as reference.
Vector class_probabilities(const DiscriminativeParams& discrim, const Vector& x, double t);

struct WeightedRow {
    double t = 0.0;
    Vector x;        // p markers
    Vector weights;  // K+1 nonnegative posterior weights, summing to 1
};

struct WeightedClassificationProblem {
    std::vector<WeightedRow> rows;
    SplineBasis basis;
};

struct PenaltyConfig {
    enum class Kind { None, GroupAdaptiveLasso };
    Kind kind = Kind::None;
    double lambda = 0.0;
    Vector adaptive_weights;  // p entries; 1/||beta_check_(u)||_2
};

struct FitDiagnostics {
    int iterations = 0;
    double objective = 0.0;      // penalized weighted log-likelihood per row (maximized)
    double grad_sup_norm = 0.0;  // smooth part only
    bool converged = false;
    bool separation = false;
};

// Proximal gradient (FISTA, monotone variant) with backtracking; eta is never
// penalized, beta groups get the group soft-threshold.
DiscriminativeParams fit_weighted_multinomial(const WeightedClassificationProblem& problem,
                                              const PenaltyConfig& penalty,
                                              const DiscriminativeParams& init,
                                              FitDiagnostics* diag = nullptr,
                                              int inner_max_iter = 2000,
                                              double inner_tol = 1e-6);

// Smallest lambda for which every beta group is zeroed at the intercept-only fit.
double lambda_max(const WeightedClassificationProblem& problem, const Vector& adaptive_weights);

// 50 log-spaced points from lambda_max down to 1e-3 * lambda_max.
std::vector<double> default_lambda_grid(double lmax);

struct CvResult {
    double lambda = 0.0;
    std::vector<double> grid;
    std::vector<double> mean_deviance;
    std::vector<double> se_deviance;
};

// 5-fold style CV with the one standard error rule; folds stratified by each
// row's argmax weight class.
CvResult cross_validate_lambda(const WeightedClassificationProblem& problem,
                               const std::vector<double>& lambda_grid,
                               const Vector& adaptive_weights, int folds, std::mt19937_64& rng);

}  // namespace dynclass
