#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace dynclass {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

constexpr double kProbSumTol = 1e-12;
constexpr double kRowIdentityTol = 1e-9;

struct ModelDims {
    int num_states = 0;   // K + 1, states coded 0..K with 0 the healthy/reference state
    int num_markers = 0;  // p
    double t_star = 0.0;  // upper bound of observation times
};

struct InitialDistribution {
    Vector pi;
};

// Intensity matrix R with a feasibility mask over off-diagonal transitions.
struct TransitionIntensityMatrix {
    Matrix rho;
    BoolMatrix structure_mask;  // true where a direct k->l transition is allowed (off-diagonal)

    // Sets each diagonal entry to minus the row sum of off-diagonals.
    void fix_diagonal();
    int num_free() const;                       // number of masked-in off-diagonal rates
    Vector free_rates() const;                  // row-major order over masked entries
    void set_free_rates(const Vector& rates);   // inverse of free_rates()
};

BoolMatrix all_feasible_mask(int num_states);
// Healthy -> any disease, any disease -> the last (absorbing) state; no recovery.
BoolMatrix progressive_mask(int num_states);
// Pairs (k,l) reachable through any chain of masked-in transitions (reflexive).
BoolMatrix transitive_closure(const BoolMatrix& mask);

struct EmissionMatrix {
    Matrix e;  // e(d,k) = P(Z=k | D=d)
    BoolMatrix feasible_mask;
};

struct SplineBasis {
    int order = 4;            // r; 4 = cubic
    int interior_knots = 0;   // J_n
    double t_star = 0.0;
    std::vector<double> knot_vector;  // clamped: order-fold boundary knots

    int dim() const { return interior_knots + order; }
};

struct DiscriminativeParams {
    Matrix eta;   // K x basis.dim(); row k-1 holds spline coefficients for class k
    Matrix beta;  // K x p; row k-1 holds marker coefficients for class k
    SplineBasis basis;
};

struct ModelParams {
    ModelDims dims;
    InitialDistribution init;
    TransitionIntensityMatrix intensity;
    EmissionMatrix emission;
    DiscriminativeParams discrim;
};

struct SubjectRecord {
    std::string subject_id;
    std::vector<double> times;  // strictly increasing, first = 0
    Matrix markers;             // m x p
    std::vector<int> surrogate;
    bool final_state_known = false;
    int final_state = -1;  // D at last visit; valid when final_state_known

    int visits() const { return static_cast<int>(times.size()); }
};

struct Dataset {
    std::vector<SubjectRecord> subjects;
    ModelDims dims;

    int total_visits() const;
};

struct Violation {
    std::string code;
    std::string message;
};
using ValidationReport = std::vector<Violation>;

ValidationReport validate_model(const ModelParams& params);
ValidationReport validate_subject(const SubjectRecord& subject, const ModelDims& dims);
ValidationReport validate_dataset(const Dataset& data);

bool has_violation(const ValidationReport& report, const std::string& code);
void require_valid(const ValidationReport& report, const std::string& context);

}  // namespace dynclass
