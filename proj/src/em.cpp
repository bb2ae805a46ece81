#include "dynclass/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dynclass/ctmc.hpp"
#include "dynclass/hmm_baseline.hpp"
#include "dynclass/kernel_marginal.hpp"
#include "dynclass/nelder_mead.hpp"
#include "dynclass/rng.hpp"
#include "dynclass/splines.hpp"

namespace dynclass {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogFloor = -745.0;

double log_sum_exp(const Vector& v) {
    double mx = kNegInf;
    for (int i = 0; i < v.size(); ++i) mx = std::max(mx, v[i]);
    if (mx == kNegInf) return kNegInf;
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i)
        if (v[i] != kNegInf) s += std::exp(v[i] - mx);
    return mx + std::log(s);
}

double safe_log(double x) { return x > 0.0 ? std::max(std::log(x), kLogFloor) : kNegInf; }

std::vector<Matrix> interval_log_q(const SubjectRecord& subject,
                                   const TransitionIntensityMatrix& r) {
    const int m = subject.visits();
    std::vector<Matrix> out;
    out.reserve(m > 0 ? m - 1 : 0);
    for (int j = 1; j < m; ++j) {
        const Matrix q = transition_probability(r, subject.times[j] - subject.times[j - 1]).q;
        Matrix lq(q.rows(), q.cols());
        for (int k = 0; k < q.rows(); ++k)
            for (int l = 0; l < q.cols(); ++l) lq(k, l) = safe_log(q(k, l));
        out.push_back(std::move(lq));
    }
    return out;
}

Matrix forward_core(const Vector& log_pi, const Matrix& log_g, const std::vector<Matrix>& log_q) {
    const int m = static_cast<int>(log_g.rows());
    const int S = static_cast<int>(log_g.cols());
    Matrix logA(m, S);
    logA.row(0) = log_pi.transpose() + log_g.row(0);
    Vector acc(S);
    for (int j = 1; j < m; ++j) {
        for (int d = 0; d < S; ++d) {
            for (int k = 0; k < S; ++k) acc[k] = logA(j - 1, k) + log_q[j - 1](k, d);
            logA(j, d) = log_sum_exp(acc) + log_g(j, d);
        }
    }
    return logA;
}

Matrix backward_core(const Matrix& log_g, const std::vector<Matrix>& log_q) {
    const int m = static_cast<int>(log_g.rows());
    const int S = static_cast<int>(log_g.cols());
    Matrix logB = Matrix::Zero(m, S);
    Vector acc(S);
    for (int j = m - 2; j >= 0; --j) {
        for (int d = 0; d < S; ++d) {
            for (int l = 0; l < S; ++l) acc[l] = log_q[j](d, l) + log_g(j + 1, l) + logB(j + 1, l);
            logB(j, d) = log_sum_exp(acc);
        }
    }
    return logB;
}

}  // namespace

Matrix compute_log_g(const SubjectRecord& subject, const ModelParams& params,
                     const Matrix& marginals, bool classical_ratio,
                     double marker_marginal_constant) {
    const int m = subject.visits();
    const int S = params.dims.num_states;
    const double log_c = std::log(marker_marginal_constant);
    Matrix log_g(m, S);
    for (int j = 0; j < m; ++j) {
        Vector cond;
        if (!classical_ratio) {
            cond = class_probabilities(params.discrim, subject.markers.row(j).transpose(),
                                       subject.times[j]);
        }
        const bool indicator = subject.final_state_known && m >= 2 && j == m - 1;
        for (int d = 0; d < S; ++d) {
            double v = indicator ? (d == subject.final_state ? 0.0 : kNegInf)
                                 : safe_log(params.emission.e(d, subject.surrogate[j]));
            if (!classical_ratio) {
                const double marg = marginals(j, d);
                if (!(marg > 0.0)) {
                    std::ostringstream os;
                    os << "e_step: zero marginal for state " << d << " at visit " << j
                       << " of subject " << subject.subject_id;
                    throw std::runtime_error(os.str());
                }
                v += safe_log(cond[d]) - std::log(marg);
            }
            log_g(j, d) = v - log_c;
        }
    }
    return log_g;
}

Matrix adaptive_forward(const SubjectRecord& subject, const ModelParams& params,
                        const Matrix& marginals) {
    const Matrix log_g = compute_log_g(subject, params, marginals);
    Vector log_pi = params.init.pi.unaryExpr([](double x) { return safe_log(x); });
    return forward_core(log_pi, log_g, interval_log_q(subject, params.intensity));
}

Matrix adaptive_backward(const SubjectRecord& subject, const ModelParams& params,
                         const Matrix& marginals) {
    const Matrix log_g = compute_log_g(subject, params, marginals);
    return backward_core(log_g, interval_log_q(subject, params.intensity));
}

Matrix posterior_marginals(const Matrix& log_forward, const Matrix& log_backward) {
    const int m = static_cast<int>(log_forward.rows());
    const int S = static_cast<int>(log_forward.cols());
    const double log_norm = log_sum_exp(log_forward.row(m - 1).transpose());
    Matrix gamma(m, S);
    for (int j = 0; j < m; ++j) {
        for (int d = 0; d < S; ++d) {
            const double lg = log_forward(j, d) + log_backward(j, d) - log_norm;
            gamma(j, d) = lg == kNegInf ? 0.0 : std::exp(lg);
        }
        const double s = gamma.row(j).sum();
        if (s > 0.0) gamma.row(j) /= s;
    }
    return gamma;
}

EStepQuantities e_step_subject(const SubjectRecord& subject, const ModelParams& params,
                               const Matrix& marginals, bool classical_ratio,
                               double marker_marginal_constant) {
    const int m = subject.visits();
    const int S = params.dims.num_states;
    const Matrix log_g =
        compute_log_g(subject, params, marginals, classical_ratio, marker_marginal_constant);
    const std::vector<Matrix> log_q = interval_log_q(subject, params.intensity);
    Vector log_pi = params.init.pi.unaryExpr([](double x) { return safe_log(x); });

    EStepQuantities out;
    out.log_forward = forward_core(log_pi, log_g, log_q);
    out.log_backward = backward_core(log_g, log_q);
    out.log_norm = log_sum_exp(out.log_forward.row(m - 1).transpose());
    if (out.log_norm == kNegInf)
        throw std::runtime_error("e_step: zero likelihood for subject " + subject.subject_id);
    out.gamma = posterior_marginals(out.log_forward, out.log_backward);
    out.xi.reserve(m - 1);
    for (int j = 1; j < m; ++j) {
        Matrix xi(S, S);
        for (int k = 0; k < S; ++k)
            for (int l = 0; l < S; ++l) {
                const double lx = out.log_forward(j - 1, k) + log_q[j - 1](k, l) + log_g(j, l) +
                                  out.log_backward(j, l) - out.log_norm;
                xi(k, l) = lx == kNegInf || std::isnan(lx) ? 0.0 : std::exp(lx);
            }
        out.xi.push_back(std::move(xi));
    }
    return out;
}

InitialDistribution mstep_initial(const std::vector<EStepQuantities>& estep) {
    if (estep.empty()) throw std::invalid_argument("mstep_initial: no subjects");
    Vector pi = Vector::Zero(estep.front().gamma.cols());
    for (const auto& e : estep) pi += e.gamma.row(0).transpose();
    pi /= static_cast<double>(estep.size());
    return {pi};
}

EmissionMatrix mstep_emission(const std::vector<EStepQuantities>& estep,
                              const std::vector<SubjectRecord>& subjects,
                              const EmissionMatrix& previous, std::vector<std::string>* warnings) {
    const int S = static_cast<int>(previous.e.rows());
    Matrix num = Matrix::Zero(S, S);
    Vector den = Vector::Zero(S);
    for (size_t i = 0; i < subjects.size(); ++i) {
        const auto& g = estep[i].gamma;
        const int m = subjects[i].visits();
        // The final visit's surrogate is the true label, not an emission.
        for (int j = 0; j < m - 1; ++j) {
            const int z = subjects[i].surrogate[j];
            for (int k = 0; k < S; ++k) {
                num(k, z) += g(j, k);
                den[k] += g(j, k);
            }
        }
    }
    EmissionMatrix out = previous;
    for (int k = 0; k < S; ++k) {
        if (den[k] > 0.0) {
            Vector row = num.row(k).transpose() / den[k];
            for (int l = 0; l < S; ++l)
                if (!previous.feasible_mask(k, l)) row[l] = 0.0;
            const double s = row.sum();
            if (s > 0.0) {
                out.e.row(k) = (row / s).transpose();
                continue;
            }
        }
        if (warnings)
            warnings->push_back("mstep_emission: state " + std::to_string(k) +
                                " has zero posterior mass; keeping previous row");
    }
    return out;
}

namespace {

struct TransitionStats {
    std::vector<double> dts;
    std::vector<Matrix> weights;  // xi matrices aligned with dts
};

TransitionStats pool_transition_stats(const std::vector<EStepQuantities>& estep,
                                      const std::vector<SubjectRecord>& subjects) {
    TransitionStats stats;
    for (size_t i = 0; i < subjects.size(); ++i) {
        const auto& s = subjects[i];
        for (int j = 1; j < s.visits(); ++j) {
            stats.dts.push_back(s.times[j] - s.times[j - 1]);
            stats.weights.push_back(estep[i].xi[j - 1]);
        }
    }
    return stats;
}

// Negative expected complete-data transition log-likelihood over free log-rates.
class TransitionObjective {
  public:
    TransitionObjective(const TransitionStats& stats, const TransitionIntensityMatrix& r_template)
        : stats_(&stats), r_(r_template), reach_(transitive_closure(r_template.structure_mask)) {}

    double operator()(const Vector& log_rates) const {
        Vector rates(log_rates.size());
        for (int i = 0; i < log_rates.size(); ++i)
            rates[i] = std::exp(std::clamp(log_rates[i], -20.0, 7.0));
        TransitionIntensityMatrix r = r_;
        r.set_free_rates(rates);
        const int S = static_cast<int>(r.rho.rows());

        // Eigendecompose once so each interval costs S scalar exponentials and
        // an S^2 contraction instead of a full Pade exponential; fall back to
        // the exact routine when the eigenbasis is ill-conditioned.
        Eigen::EigenSolver<Matrix> es(r.rho);
        Eigen::VectorXcd lam;
        std::vector<std::complex<double>> coef;  // coef[(k*S+l)*S+m] = V(k,m)*Vinv(m,l)
        bool fast = es.info() == Eigen::Success;
        if (fast) {
            const Eigen::MatrixXcd V = es.eigenvectors();
            lam = es.eigenvalues();
            Eigen::FullPivLU<Eigen::MatrixXcd> lu(V);
            if (lu.isInvertible() && lu.rcond() > 1e-8) {
                const Eigen::MatrixXcd Vinv = lu.inverse();
                coef.resize(static_cast<size_t>(S) * S * S);
                for (int k = 0; k < S; ++k)
                    for (int l = 0; l < S; ++l)
                        for (int m = 0; m < S; ++m)
                            coef[(static_cast<size_t>(k) * S + l) * S + m] = V(k, m) * Vinv(m, l);
            } else {
                fast = false;
            }
        }

        double obj = 0.0;
        std::vector<std::complex<double>> elam(static_cast<size_t>(S));
        for (size_t j = 0; j < stats_->dts.size(); ++j) {
            const Matrix& w = stats_->weights[j];
            if (fast) {
                for (int m = 0; m < S; ++m) elam[m] = std::exp(lam[m] * stats_->dts[j]);
                for (int k = 0; k < S; ++k)
                    for (int l = 0; l < S; ++l) {
                        if (w(k, l) <= 0.0) continue;
                        double p = 1e-300;
                        if (reach_(k, l)) {
                            std::complex<double> q(0.0, 0.0);
                            const auto* c = &coef[(static_cast<size_t>(k) * S + l) * S];
                            for (int m = 0; m < S; ++m) q += c[m] * elam[m];
                            p = std::max(q.real(), 1e-300);
                        }
                        obj -= w(k, l) * std::log(p);
                    }
            } else {
                const Matrix q = matrix_exponential(stats_->dts[j] * r.rho);
                for (int k = 0; k < S; ++k)
                    for (int l = 0; l < S; ++l) {
                        if (w(k, l) <= 0.0) continue;
                        const double p = reach_(k, l) ? std::max(q(k, l), 1e-300) : 1e-300;
                        obj -= w(k, l) * std::log(p);
                    }
            }
        }
        return obj;
    }

  private:
    const TransitionStats* stats_;
    TransitionIntensityMatrix r_;
    BoolMatrix reach_;
};

}  // namespace

TransitionIntensityMatrix mstep_transition(const std::vector<EStepQuantities>& estep,
                                           const std::vector<SubjectRecord>& subjects,
                                           const TransitionIntensityMatrix& r_init,
                                           const FitConfig& cfg, std::mt19937_64& rng,
                                           std::vector<std::string>* warnings) {
    const TransitionStats stats = pool_transition_stats(estep, subjects);
    TransitionObjective objective(stats, r_init);
    const int nfree = r_init.num_free();
    if (nfree == 0 || stats.dts.empty()) return r_init;

    Vector x0(nfree);
    {
        const Vector rates = r_init.free_rates();
        for (int i = 0; i < nfree; ++i) x0[i] = std::log(std::max(rates[i], 1e-8));
    }
    const double f_init = objective(x0);

    std::uniform_real_distribution<double> jitter(-0.1, 0.1);
    std::uniform_real_distribution<double> wide(std::log(0.01), std::log(2.0));
    std::vector<Vector> starts;
    starts.push_back(x0);
    for (int s = 1; s < cfg.num_starts; ++s) {
        Vector x(nfree);
        if (s == 1 || s == 2) {
            const double shift = s == 1 ? 0.5 : -0.5;
            for (int i = 0; i < nfree; ++i) x[i] = x0[i] + shift + jitter(rng);
        } else {
            for (int i = 0; i < nfree; ++i) x[i] = wide(rng);
        }
        starts.push_back(x);
    }

    double best_val = f_init;
    Vector best_x = x0;
    bool improved = false;
    for (const auto& start : starts) {
        auto res = nelder_mead([&](const Vector& x) { return objective(x); }, start, 0.25,
                               cfg.nm_max_iter, cfg.nm_tol);
        if (res.value < best_val) {
            best_val = res.value;
            best_x = res.x;
            improved = true;
        }
    }
    if (!improved) {
        if (warnings)
            warnings->push_back("mstep_transition: no start improved on the incoming intensities");
        return r_init;
    }
    TransitionIntensityMatrix out = r_init;
    Vector rates(nfree);
    for (int i = 0; i < nfree; ++i) rates[i] = std::exp(std::clamp(best_x[i], -20.0, 7.0));
    out.set_free_rates(rates);
    return out;
}

WeightedClassificationProblem build_weighted_problem(const std::vector<EStepQuantities>& estep,
                                                     const std::vector<SubjectRecord>& subjects,
                                                     const SplineBasis& basis) {
    WeightedClassificationProblem problem;
    problem.basis = basis;
    for (size_t i = 0; i < subjects.size(); ++i) {
        const auto& s = subjects[i];
        for (int j = 0; j < s.visits(); ++j) {
            WeightedRow row;
            row.t = s.times[j];
            row.x = s.markers.row(j).transpose();
            row.weights = estep[i].gamma.row(j).transpose();
            problem.rows.push_back(std::move(row));
        }
    }
    return problem;
}

DiscriminativeParams mstep_discriminative(const std::vector<EStepQuantities>& estep,
                                          const std::vector<SubjectRecord>& subjects,
                                          const SplineBasis& basis, const PenaltyConfig& penalty,
                                          const DiscriminativeParams& current,
                                          FitDiagnostics* diag, int inner_max_iter,
                                          double inner_tol) {
    const auto problem = build_weighted_problem(estep, subjects, basis);
    return fit_weighted_multinomial(problem, penalty, current, diag, inner_max_iter, inner_tol);
}

std::vector<Matrix> marginal_tables(const Dataset& data, const ModelParams& params,
                                    MarginalMode mode, double bandwidth,
                                    std::vector<std::string>* warnings) {
    const int S = params.dims.num_states;
    std::vector<Matrix> out;
    out.reserve(data.subjects.size());
    if (mode == MarginalMode::HmmDual) {
        for (const auto& s : data.subjects) {
            Matrix marg(s.visits(), S);
            for (int j = 0; j < s.visits(); ++j)
                marg.row(j) =
                    hmm_state_marginal(params.init, params.intensity, s.times[j]).transpose();
            out.push_back(std::move(marg));
        }
        return out;
    }
    KernelConfig kcfg{bandwidth};
    NwMarginalEvaluator eval(data, params.discrim, kcfg);
    for (const auto& s : data.subjects) {
        Matrix marg(s.visits(), S);
        for (int j = 0; j < s.visits(); ++j)
            marg.row(j) =
                eval.evaluate(s.times[j], params.init, params.intensity, warnings).transpose();
        out.push_back(std::move(marg));
    }
    return out;
}

double adaptive_loglik(const Dataset& data, const ModelParams& params,
                       const std::vector<Matrix>& marginals, bool classical_ratio) {
    double total = 0.0;
    Vector log_pi = params.init.pi.unaryExpr([](double x) { return safe_log(x); });
    for (size_t i = 0; i < data.subjects.size(); ++i) {
        const auto& s = data.subjects[i];
        const Matrix log_g = compute_log_g(s, params, marginals[i], classical_ratio);
        const Matrix logA = forward_core(log_pi, log_g, interval_log_q(s, params.intensity));
        total += log_sum_exp(logA.row(s.visits() - 1).transpose());
    }
    return total;
}

namespace {

Vector parameter_vector(const ModelParams& p) {
    const int S = p.dims.num_states;
    std::vector<double> coords;
    for (int k = 0; k < S; ++k) coords.push_back(p.init.pi[k]);
    const Vector rates = p.intensity.free_rates();
    for (int i = 0; i < rates.size(); ++i) coords.push_back(rates[i]);
    for (int k = 0; k < S; ++k)
        for (int l = 0; l < S; ++l)
            if (p.emission.feasible_mask(k, l)) coords.push_back(p.emission.e(k, l));
    for (int i = 0; i < p.discrim.eta.size(); ++i) coords.push_back(p.discrim.eta.data()[i]);
    for (int i = 0; i < p.discrim.beta.size(); ++i) coords.push_back(p.discrim.beta.data()[i]);
    return Eigen::Map<Vector>(coords.data(), static_cast<int>(coords.size()));
}

// min(absolute, relative) error per coordinate, 0/0 = 0; all must pass.
bool converged_coordinatewise(const Vector& before, const Vector& after, double tol) {
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

double block_delta(const Matrix& a, const Matrix& b) {
    return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

ModelParams initialize(const Dataset& data, const FitConfig& cfg) {
    require_valid(validate_dataset(data), "initialize");
    const int S = data.dims.num_states;
    bool degenerate = true;
    int first_z = data.subjects.front().surrogate.front();
    for (const auto& s : data.subjects)
        for (int z : s.surrogate)
            if (z != first_z) degenerate = false;
    if (degenerate)
        throw std::invalid_argument("initialize: surrogate labels are a single class");

    const auto hmm = fit_hmm(data, cfg);

    const SplineBasis basis =
        build_basis(static_cast<int>(data.subjects.size()), data.dims.t_star, cfg.spline_order);
    WeightedClassificationProblem problem;
    problem.basis = basis;
    for (const auto& s : data.subjects) {
        const auto decode = hmm_decode(hmm.params, s);
        for (int j = 0; j < s.visits(); ++j) {
            WeightedRow row;
            row.t = s.times[j];
            row.x = s.markers.row(j).transpose();
            row.weights = Vector::Zero(S);
            row.weights[decode.viterbi_path[j]] = 1.0;
            problem.rows.push_back(std::move(row));
        }
    }
    DiscriminativeParams d0;
    d0.basis = basis;
    d0.eta = Matrix::Zero(S - 1, basis.dim());
    d0.beta = Matrix::Zero(S - 1, data.dims.num_markers);
    PenaltyConfig none;
    DiscriminativeParams discrim = fit_weighted_multinomial(problem, none, d0);

    ModelParams params;
    params.dims = data.dims;
    params.init = hmm.params.init;
    params.intensity = hmm.params.intensity;
    params.emission = hmm.params.emission;
    params.discrim = std::move(discrim);
    return params;
}

FitResult fit(const Dataset& data, const FitConfig& cfg) {
    if (cfg.max_iter < 1) throw std::invalid_argument("fit: max_iter must be >= 1");
    require_valid(validate_dataset(data), "fit");
    const int n = static_cast<int>(data.subjects.size());
    const double bandwidth =
        cfg.bandwidth > 0.0 ? cfg.bandwidth : default_bandwidth(n, data.dims.t_star);

    FitResult result;
    ModelParams params = initialize(data, cfg);
    auto rng = make_rng(derive_seed(cfg.seed, "em.fit"));

    const bool penalized = cfg.penalty.kind == PenaltyConfig::Kind::GroupAdaptiveLasso;
    double lambda = cfg.penalty.lambda;
    bool lambda_chosen = !cfg.cv;

    std::vector<Matrix> marginals;
    double prev_loglik = kNegInf;
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        if (marginals.empty() || cfg.refresh_marginal_every_iter)
            marginals = marginal_tables(data, params, cfg.e_step_marginal, bandwidth,
                                        &result.diagnostics);

        std::vector<EStepQuantities> estep;
        estep.reserve(n);
        double loglik = 0.0;
        for (int i = 0; i < n; ++i) {
            estep.push_back(e_step_subject(data.subjects[i], params, marginals[i]));
            loglik += estep.back().log_norm;
        }
        if (prev_loglik != kNegInf && loglik < prev_loglik - 1e-4)
            result.diagnostics.push_back("fit: adaptive log-likelihood decreased by more than 1e-4 at iteration " +
                                         std::to_string(iter));
        prev_loglik = loglik;

        ModelParams next = params;
        next.init = mstep_initial(estep);
        next.emission =
            mstep_emission(estep, data.subjects, params.emission, &result.diagnostics);
        next.intensity = mstep_transition(estep, data.subjects, params.intensity, cfg, rng,
                                          &result.diagnostics);

        PenaltyConfig pen;  // Kind::None
        FitDiagnostics fd;
        if (penalized) {
            // Adaptive weights from the unpenalized fit at this iteration's weights.
            DiscriminativeParams unpen = mstep_discriminative(
                estep, data.subjects, params.discrim.basis, pen, params.discrim, &fd);
            pen.kind = PenaltyConfig::Kind::GroupAdaptiveLasso;
            pen.adaptive_weights = Vector(data.dims.num_markers);
            for (int u = 0; u < data.dims.num_markers; ++u)
                pen.adaptive_weights[u] = 1.0 / std::max(unpen.beta.col(u).norm(), 1e-8);
            if (!lambda_chosen) {
                const auto problem =
                    build_weighted_problem(estep, data.subjects, params.discrim.basis);
                const double lmax = lambda_max(problem, pen.adaptive_weights);
                auto cv_rng = make_rng(derive_seed(cfg.seed, "em.cv"));
                lambda = cross_validate_lambda(problem, default_lambda_grid(lmax),
                                               pen.adaptive_weights, cfg.cv_folds, cv_rng)
                             .lambda;
                lambda_chosen = true;
                result.chosen_lambda = lambda;
            }
            pen.lambda = lambda;
            next.discrim =
                mstep_discriminative(estep, data.subjects, params.discrim.basis, pen, unpen, &fd);
        } else {
            next.discrim = mstep_discriminative(estep, data.subjects, params.discrim.basis, pen,
                                                params.discrim, &fd);
        }
        if (fd.separation)
            result.diagnostics.push_back("fit: complete separation flagged at iteration " +
                                         std::to_string(iter));

        IterationTraceRow row;
        row.iteration = iter;
        row.delta_pi = (next.init.pi - params.init.pi).cwiseAbs().maxCoeff();
        row.delta_rho = (next.intensity.free_rates() - params.intensity.free_rates())
                            .cwiseAbs()
                            .maxCoeff();
        row.delta_emission = block_delta(next.emission.e, params.emission.e);
        row.delta_eta = block_delta(next.discrim.eta, params.discrim.eta);
        row.delta_beta = block_delta(next.discrim.beta, params.discrim.beta);
        row.adaptive_loglik = loglik;
        row.adaptive_loglik_after = adaptive_loglik(data, next, marginals);
        if (row.adaptive_loglik_after < loglik - 1e-8)
            result.diagnostics.push_back(
                "fit: frozen-marginal log-likelihood decreased at iteration " +
                std::to_string(iter));
        result.trace.push_back(row);

        const Vector before = parameter_vector(params);
        const Vector after = parameter_vector(next);
        params = std::move(next);
        result.iterations = iter;
        if (converged_coordinatewise(before, after, cfg.tol)) {
            result.converged = true;
            break;
        }
    }
    // Final polish: one full M-step pass at the converged E-step with a tight
    // inner solver, so the reported parameters are not limited by the loose
    // tolerance the EM iterations run with.
    {
        if (marginals.empty() || cfg.refresh_marginal_every_iter)
            marginals = marginal_tables(data, params, cfg.e_step_marginal, bandwidth,
                                        &result.diagnostics);
        std::vector<EStepQuantities> estep;
        estep.reserve(n);
        for (int i = 0; i < n; ++i)
            estep.push_back(e_step_subject(data.subjects[i], params, marginals[i]));
        params.init = mstep_initial(estep);
        params.emission =
            mstep_emission(estep, data.subjects, params.emission, &result.diagnostics);
        params.intensity = mstep_transition(estep, data.subjects, params.intensity, cfg, rng,
                                            &result.diagnostics);
        PenaltyConfig pen;  // Kind::None
        if (penalized) {
            DiscriminativeParams unpen =
                mstep_discriminative(estep, data.subjects, params.discrim.basis, pen,
                                     params.discrim, nullptr, 5000, 1e-10);
            pen.kind = PenaltyConfig::Kind::GroupAdaptiveLasso;
            pen.adaptive_weights = Vector(data.dims.num_markers);
            for (int u = 0; u < data.dims.num_markers; ++u)
                pen.adaptive_weights[u] = 1.0 / std::max(unpen.beta.col(u).norm(), 1e-8);
            pen.lambda = lambda;
            params.discrim = mstep_discriminative(estep, data.subjects, params.discrim.basis,
                                                  pen, unpen, nullptr, 5000, 1e-10);
        } else {
            params.discrim = mstep_discriminative(estep, data.subjects, params.discrim.basis,
                                                  pen, params.discrim, nullptr, 5000, 1e-10);
        }
    }
    result.params = std::move(params);
    return result;
}

std::uint64_t fit_config_hash(const FitConfig& cfg) {
    std::ostringstream os;
    os << cfg.max_iter << '|' << cfg.tol << '|' << cfg.num_starts << '|'
       << static_cast<int>(cfg.penalty.kind) << '|' << cfg.penalty.lambda << '|' << cfg.cv << '|'
       << cfg.cv_folds << '|' << cfg.seed << '|' << static_cast<int>(cfg.e_step_marginal) << '|'
       << cfg.refresh_marginal_every_iter << '|' << cfg.bandwidth << '|' << cfg.spline_order << '|'
       << cfg.nm_max_iter << '|' << cfg.nm_tol;
    const std::string s = os.str();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace dynclass
