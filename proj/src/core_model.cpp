#include "dynclass/types.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dynclass {

void TransitionIntensityMatrix::fix_diagonal() {
    const int n = static_cast<int>(rho.rows());
    for (int k = 0; k < n; ++k) {
        double off = 0.0;
        for (int l = 0; l < n; ++l)
            if (l != k) off += rho(k, l);
        rho(k, k) = -off;
    }
}

int TransitionIntensityMatrix::num_free() const {
    int c = 0;
    for (int k = 0; k < structure_mask.rows(); ++k)
        for (int l = 0; l < structure_mask.cols(); ++l)
            if (k != l && structure_mask(k, l)) ++c;
    return c;
}

Vector TransitionIntensityMatrix::free_rates() const {
    Vector out(num_free());
    int idx = 0;
    for (int k = 0; k < rho.rows(); ++k)
        for (int l = 0; l < rho.cols(); ++l)
            if (k != l && structure_mask(k, l)) out[idx++] = rho(k, l);
    return out;
}

void TransitionIntensityMatrix::set_free_rates(const Vector& rates) {
    int idx = 0;
    for (int k = 0; k < rho.rows(); ++k)
        for (int l = 0; l < rho.cols(); ++l)
            if (k != l) rho(k, l) = structure_mask(k, l) ? rates[idx++] : 0.0;
    fix_diagonal();
}

BoolMatrix all_feasible_mask(int num_states) {
    BoolMatrix m(num_states, num_states);
    m.setConstant(true);
    for (int k = 0; k < num_states; ++k) m(k, k) = false;
    return m;
}

BoolMatrix progressive_mask(int num_states) {
    BoolMatrix m(num_states, num_states);
    m.setConstant(false);
    const int last = num_states - 1;
    for (int d = 1; d < num_states; ++d) m(0, d) = true;
    for (int d = 1; d < last; ++d) m(d, last) = true;
    return m;
}

BoolMatrix transitive_closure(const BoolMatrix& mask) {
    const int n = static_cast<int>(mask.rows());
    BoolMatrix reach = mask;
    for (int k = 0; k < n; ++k) reach(k, k) = true;
    for (int mid = 0; mid < n; ++mid)
        for (int a = 0; a < n; ++a)
            if (reach(a, mid))
                for (int b = 0; b < n; ++b)
                    if (reach(mid, b)) reach(a, b) = true;
    return reach;
}

int Dataset::total_visits() const {
    int t = 0;
    for (const auto& s : subjects) t += s.visits();
    return t;
}

namespace {

void add(ValidationReport& r, const std::string& code, const std::string& msg) {
    r.push_back({code, msg});
}

void check_probability_vector(ValidationReport& r, const Vector& v, const std::string& what) {
    for (int i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            add(r, "non_finite", what + " has a non-finite entry");
            return;
        }
        if (v[i] < 0.0) add(r, "negative_probability", what + " has a negative entry");
    }
    if (std::abs(v.sum() - 1.0) > kProbSumTol) add(r, "sum_not_one", what + " does not sum to 1");
}

}  // namespace

ValidationReport validate_model(const ModelParams& params) {
    ValidationReport r;
    const int S = params.dims.num_states;
    const int p = params.dims.num_markers;
    if (S < 2) add(r, "bad_dims", "num_states must be at least 2");
    if (p < 1) add(r, "bad_dims", "num_markers must be at least 1");
    if (!(params.dims.t_star > 0.0)) add(r, "bad_dims", "t_star must be positive");
    if (!r.empty()) return r;

    if (params.init.pi.size() != S) {
        add(r, "dim_mismatch", "pi length does not match num_states");
    } else {
        check_probability_vector(r, params.init.pi, "pi");
    }

    const auto& R = params.intensity;
    if (R.rho.rows() != S || R.rho.cols() != S || R.structure_mask.rows() != S ||
        R.structure_mask.cols() != S) {
        add(r, "dim_mismatch", "intensity matrix dimensions do not match num_states");
    } else {
        for (int k = 0; k < S; ++k) {
            double off = 0.0;
            for (int l = 0; l < S; ++l) {
                if (l == k) continue;
                if (R.rho(k, l) < 0.0) add(r, "negative_rate", "off-diagonal intensity < 0");
                if (!R.structure_mask(k, l) && R.rho(k, l) != 0.0)
                    add(r, "masked_rate_nonzero", "rate outside structure_mask is nonzero");
                off += R.rho(k, l);
            }
            if (std::abs(R.rho(k, k) + off) > kProbSumTol)
                add(r, "diagonal_mismatch", "diagonal is not minus the off-diagonal row sum");
        }
    }

    const auto& E = params.emission;
    if (E.e.rows() != S || E.e.cols() != S) {
        add(r, "dim_mismatch", "emission matrix dimensions do not match num_states");
    } else {
        for (int d = 0; d < S; ++d) check_probability_vector(r, E.e.row(d).transpose(), "emission row");
        for (int a = 0; a < S && !has_violation(r, "identifiability_rows_equal"); ++a)
            for (int b = a + 1; b < S; ++b) {
                if ((E.e.row(a) - E.e.row(b)).cwiseAbs().maxCoeff() < kRowIdentityTol) {
                    add(r, "identifiability_rows_equal", "two emission rows are identical");
                    break;
                }
            }
        if (E.feasible_mask.rows() == S && E.feasible_mask.cols() == S) {
            for (int d = 0; d < S; ++d)
                for (int k = 0; k < S; ++k)
                    if (!E.feasible_mask(d, k) && E.e(d, k) != 0.0)
                        add(r, "masked_emission_nonzero", "emission outside feasible_mask is nonzero");
        } else {
            add(r, "dim_mismatch", "feasible_mask dimensions do not match num_states");
        }
    }

    const auto& D = params.discrim;
    const int K = S - 1;
    if (D.basis.t_star != params.dims.t_star)
        add(r, "dim_mismatch", "spline basis t_star differs from model t_star");
    if (D.eta.rows() != K || D.eta.cols() != D.basis.dim())
        add(r, "dim_mismatch", "eta dimensions do not match K x basis dim");
    if (D.beta.rows() != K || D.beta.cols() != p)
        add(r, "dim_mismatch", "beta dimensions do not match K x p");

    return r;
}

ValidationReport validate_subject(const SubjectRecord& subject, const ModelDims& dims) {
    ValidationReport r;
    const int m = subject.visits();
    if (m < 2) add(r, "too_few_visits", "subject " + subject.subject_id + " has fewer than 2 visits");
    if (m >= 1 && subject.times.front() != 0.0)
        add(r, "first_time_nonzero", "first visit time must be 0");
    for (int j = 1; j < m; ++j)
        if (!(subject.times[j] > subject.times[j - 1])) {
            add(r, "times_not_increasing", "visit times not strictly increasing");
            break;
        }
    if (m >= 1 && subject.times.back() > dims.t_star)
        add(r, "time_exceeds_t_star", "last visit time exceeds t_star");
    if (subject.markers.rows() != m || subject.markers.cols() != dims.num_markers)
        add(r, "dim_mismatch", "marker matrix shape does not match visits x markers");
    if (static_cast<int>(subject.surrogate.size()) != m)
        add(r, "dim_mismatch", "surrogate length does not match number of visits");
    for (int z : subject.surrogate)
        if (z < 0 || z >= dims.num_states) {
            add(r, "state_out_of_range", "surrogate code out of range");
            break;
        }
    if (subject.final_state_known) {
        if (subject.final_state < 0 || subject.final_state >= dims.num_states)
            add(r, "state_out_of_range", "final state code out of range");
        else if (!subject.surrogate.empty() && subject.surrogate.back() != subject.final_state)
            add(r, "final_surrogate_mismatch", "Z at the last visit must equal the known final state");
    }
    return r;
}

ValidationReport validate_dataset(const Dataset& data) {
    ValidationReport r;
    for (const auto& s : data.subjects) {
        auto sub = validate_subject(s, data.dims);
        r.insert(r.end(), sub.begin(), sub.end());
    }
    return r;
}

bool has_violation(const ValidationReport& report, const std::string& code) {
    for (const auto& v : report)
        if (v.code == code) return true;
    return false;
}

void require_valid(const ValidationReport& report, const std::string& context) {
    if (report.empty()) return;
    std::ostringstream os;
    os << context << ": ";
    for (size_t i = 0; i < report.size(); ++i) {
        if (i) os << "; ";
        os << report[i].code;
    }
    throw std::invalid_argument(os.str());
}

}  // namespace dynclass
