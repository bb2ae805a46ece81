#include "dynclass/hmm_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dynclass/ctmc.hpp"
#include "dynclass/rng.hpp"

namespace dynclass {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

ModelParams wrap(const HmmParams& params, const ModelDims& dims) {
    ModelParams p;
    p.dims = dims;
    p.init = params.init;
    p.intensity = params.intensity;
    p.emission = params.emission;
    return p;
}

Vector hmm_parameter_vector(const HmmParams& p) {
    std::vector<double> coords;
    for (int k = 0; k < p.init.pi.size(); ++k) coords.push_back(p.init.pi[k]);
    const Vector rates = p.intensity.free_rates();
    for (int i = 0; i < rates.size(); ++i) coords.push_back(rates[i]);
    const int S = static_cast<int>(p.emission.e.rows());
    for (int k = 0; k < S; ++k)
        for (int l = 0; l < S; ++l)
            if (p.emission.feasible_mask(k, l)) coords.push_back(p.emission.e(k, l));
    return Eigen::Map<Vector>(coords.data(), static_cast<int>(coords.size()));
}

bool hmm_converged(const Vector& before, const Vector& after, double tol) {
    for (int i = 0; i < before.size(); ++i) {
        const double abs_err = std::abs(after[i] - before[i]);
        double rel_err;
        if (std::abs(before[i]) > 0.0)
            rel_err = abs_err / std::abs(before[i]);
        else
            rel_err = abs_err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        if (std::min(abs_err, rel_err) >= tol) return false;
    }
    return true;
}

}  // namespace

HmmFitResult fit_hmm(const Dataset& data, const FitConfig& cfg) {
    require_valid(validate_dataset(data), "fit_hmm");
    const int S = data.dims.num_states;
    const int n = static_cast<int>(data.subjects.size());

    HmmFitResult result;
    HmmParams params;

    // Initial distribution from the first-visit surrogate frequencies, floored
    // so every state keeps mass.
    params.init.pi = Vector::Constant(S, 0.5 / S);
    for (const auto& s : data.subjects) params.init.pi[s.surrogate.front()] += 1.0 / n;
    params.init.pi /= params.init.pi.sum();

    params.intensity.structure_mask =
        cfg.structure_mask.size() > 0 ? cfg.structure_mask : all_feasible_mask(S);
    params.intensity.rho = Matrix::Zero(S, S);
    for (int k = 0; k < S; ++k)
        for (int l = 0; l < S; ++l)
            if (k != l && params.intensity.structure_mask(k, l)) params.intensity.rho(k, l) = 0.1;
    params.intensity.fix_diagonal();

    params.emission.feasible_mask =
        cfg.feasible_mask.size() > 0 ? cfg.feasible_mask : BoolMatrix::Constant(S, S, true);
    params.emission.e = Matrix::Zero(S, S);
    for (int k = 0; k < S; ++k) {
        int feas = 0;
        for (int l = 0; l < S; ++l) feas += params.emission.feasible_mask(k, l) ? 1 : 0;
        for (int l = 0; l < S; ++l)
            if (params.emission.feasible_mask(k, l))
                params.emission.e(k, l) = l == k ? 0.6 : 0.4 / std::max(feas - 1, 1);
        params.emission.e.row(k) /= params.emission.e.row(k).sum();
    }

    auto rng = make_rng(derive_seed(cfg.seed, "hmm.fit"));
    const Matrix dummy;  // marginals unused under the classical ratio
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        const ModelParams wrapped = wrap(params, data.dims);
        std::vector<EStepQuantities> estep;
        estep.reserve(n);
        double loglik = 0.0;
        for (const auto& s : data.subjects) {
            estep.push_back(e_step_subject(s, wrapped, dummy, /*classical_ratio=*/true));
            loglik += estep.back().log_norm;
        }
        result.loglik_trace.push_back(loglik);

        HmmParams next = params;
        next.init = mstep_initial(estep);
        next.emission = mstep_emission(estep, data.subjects, params.emission, &result.diagnostics);
        next.intensity = mstep_transition(estep, data.subjects, params.intensity, cfg, rng,
                                          &result.diagnostics);

        const Vector before = hmm_parameter_vector(params);
        const Vector after = hmm_parameter_vector(next);
        params = std::move(next);
        result.iterations = iter;
        if (hmm_converged(before, after, cfg.tol)) {
            result.converged = true;
            break;
        }
    }
    result.params = std::move(params);
    return result;
}

HmmDecodeResult hmm_decode(const HmmParams& params, const SubjectRecord& subject) {
    const int m = subject.visits();
    const int S = static_cast<int>(params.init.pi.size());
    ModelDims dims;
    dims.num_states = S;
    dims.num_markers = static_cast<int>(subject.markers.cols());
    dims.t_star = subject.times.empty() ? 0.0 : subject.times.back();
    const ModelParams wrapped = wrap(params, dims);
    const Matrix dummy;
    const EStepQuantities e = e_step_subject(subject, wrapped, dummy, /*classical_ratio=*/true);

    HmmDecodeResult out;
    out.posteriors = e.gamma;

    // Viterbi over the same log g factors (surrogate emissions, indicator at a
    // known final state).
    const Matrix log_g = compute_log_g(subject, wrapped, dummy, /*classical_ratio=*/true);
    Matrix delta(m, S);
    Eigen::MatrixXi psi = Eigen::MatrixXi::Constant(m, S, -1);
    for (int d = 0; d < S; ++d) delta(0, d) = safe_log(params.init.pi[d]) + log_g(0, d);
    for (int j = 1; j < m; ++j) {
        const Matrix q =
            transition_probability(params.intensity, subject.times[j] - subject.times[j - 1]).q;
        for (int d = 0; d < S; ++d) {
            double best = kNegInf;
            int arg = 0;
            for (int k = 0; k < S; ++k) {
                const double v = delta(j - 1, k) + safe_log(q(k, d));
                if (v > best) {
                    best = v;
                    arg = k;
                }
            }
            delta(j, d) = best + log_g(j, d);
            psi(j, d) = arg;
        }
    }
    int last = 0;
    for (int d = 1; d < S; ++d)
        if (delta(m - 1, d) > delta(m - 1, last)) last = d;
    if (delta(m - 1, last) == kNegInf)
        throw std::runtime_error("hmm_decode: no feasible path for subject " + subject.subject_id);
    out.log_prob = delta(m - 1, last);
    out.viterbi_path.assign(m, 0);
    out.viterbi_path[m - 1] = last;
    for (int j = m - 1; j > 0; --j) out.viterbi_path[j - 1] = psi(j, out.viterbi_path[j]);
    return out;
}

}  // namespace dynclass
