#include "dynclass/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dynclass/hmm_baseline.hpp"
#include "dynclass/predict.hpp"
#include "dynclass/rng.hpp"
#include "dynclass/splines.hpp"

namespace dynclass {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw std::invalid_argument("accuracy: label vectors must match and be nonempty");
    int hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1 : 0;
    return 100.0 * hits / static_cast<double>(pred.size());
}

Vector one_vs_rest_auc(const Matrix& scores, const std::vector<int>& truth) {
    const int N = static_cast<int>(truth.size());
    if (scores.rows() != N || N == 0)
        throw std::invalid_argument("one_vs_rest_auc: score/label size mismatch");
    const int S = static_cast<int>(scores.cols());
    Vector auc = Vector::Constant(S, kNaN);
    for (int k = 0; k < S; ++k) {
        long pos = 0;
        for (int i = 0; i < N; ++i) pos += truth[i] == k ? 1 : 0;
        const long neg = N - pos;
        if (pos == 0 || neg == 0) continue;
        double u = 0.0;  // Mann-Whitney statistic, ties 1/2
        for (int i = 0; i < N; ++i) {
            if (truth[i] != k) continue;
            for (int j = 0; j < N; ++j) {
                if (truth[j] == k) continue;
                if (scores(i, k) > scores(j, k))
                    u += 1.0;
                else if (scores(i, k) == scores(j, k))
                    u += 0.5;
            }
        }
        auc[k] = u / (static_cast<double>(pos) * static_cast<double>(neg));
    }
    return auc;
}

SelectionMetrics selection_metrics(const Matrix& beta_hat,
                                   const std::vector<bool>& true_support) {
    const int p = static_cast<int>(true_support.size());
    if (beta_hat.cols() != p)
        throw std::invalid_argument("selection_metrics: support/beta width mismatch");
    SelectionMetrics out;
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (int u = 0; u < p; ++u) {
        const bool selected = beta_hat.col(u).norm() > 0.0;
        if (selected && true_support[u]) ++tp;
        if (selected && !true_support[u]) ++fp;
        if (!selected && true_support[u]) ++fn;
        if (!selected && !true_support[u]) ++tn;
    }
    out.c = tp;
    out.ic = fp;
    const double den =
        std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
    out.mcc = den > 0.0 ? (tp * tn - fp * fn) / den : 0.0;
    return out;
}

Vector misd(const DiscriminativeParams& fitted, const DiscriminativeParams& reference,
            double t_max, int grid) {
    if (grid < 2) throw std::invalid_argument("misd: grid must have at least 2 points");
    const int K = static_cast<int>(fitted.eta.rows());
    if (reference.eta.rows() != K) throw std::invalid_argument("misd: class count mismatch");
    Vector out = Vector::Zero(K);
    const double h = t_max / (grid - 1);
    for (int g = 0; g < grid; ++g) {
        const double t = g * h;
        const Vector bf = evaluate_basis(fitted.basis, t);
        const Vector br = evaluate_basis(reference.basis, t);
        const double w = (g == 0 || g == grid - 1) ? 0.5 : 1.0;
        for (int k = 0; k < K; ++k) {
            const double diff = fitted.eta.row(k).dot(bf) - reference.eta.row(k).dot(br);
            out[k] += w * diff * diff * h;
        }
    }
    return out;
}

BlockErrors squared_error_blocks(const ModelParams& fitted, const ModelParams& truth) {
    BlockErrors out;
    const Vector rf = fitted.intensity.free_rates();
    const Vector rt = truth.intensity.free_rates();
    if (rf.size() != rt.size())
        throw std::invalid_argument("squared_error_blocks: transition structure mismatch");
    out.tran = rf.size() > 0 ? (rf - rt).squaredNorm() / rf.size() : 0.0;

    const int S = truth.dims.num_states;
    int count = 0;
    for (int k = 0; k < S; ++k)
        for (int l = 0; l < S; ++l)
            if (truth.emission.feasible_mask(k, l)) {
                const double d = fitted.emission.e(k, l) - truth.emission.e(k, l);
                out.emis += d * d;
                ++count;
            }
    if (count > 0) out.emis /= count;

    out.init = (fitted.init.pi - truth.init.pi).squaredNorm() / S;
    out.beta = (fitted.discrim.beta - truth.discrim.beta).squaredNorm() /
               fitted.discrim.beta.size();
    return out;
}

namespace {

// One-hot weighted multinomial fit on given labels; the D-known and Obs
// comparators.
DiscriminativeParams fit_labelled_logistic(const Dataset& data,
                                           const std::vector<std::vector<int>>& labels,
                                           int spline_order) {
    const int S = data.dims.num_states;
    WeightedClassificationProblem problem;
    problem.basis =
        build_basis(static_cast<int>(data.subjects.size()), data.dims.t_star, spline_order);
    for (size_t i = 0; i < data.subjects.size(); ++i) {
        const auto& s = data.subjects[i];
        for (int j = 0; j < s.visits(); ++j) {
            WeightedRow row;
            row.t = s.times[j];
            row.x = s.markers.row(j).transpose();
            row.weights = Vector::Zero(S);
            row.weights[labels[i][j]] = 1.0;
            problem.rows.push_back(std::move(row));
        }
    }
    DiscriminativeParams init;
    init.basis = problem.basis;
    init.eta = Matrix::Zero(S - 1, problem.basis.dim());
    init.beta = Matrix::Zero(S - 1, data.dims.num_markers);
    PenaltyConfig none;
    return fit_weighted_multinomial(problem, none, init);
}

struct FlatTruth {
    std::vector<int> labels;  // all test visits, subject-major
};

FlatTruth flatten_truth(const GeneratedCohort& cohort) {
    FlatTruth out;
    for (const auto& d : cohort.truth) out.labels.insert(out.labels.end(), d.begin(), d.end());
    return out;
}

void score_posterior(const GeneratedCohort& test, const ModelParams& params,
                     ReplicationRow& row) {
    const FlatTruth truth = flatten_truth(test);
    Matrix scores(static_cast<int>(truth.labels.size()), params.dims.num_states);
    std::vector<int> pred;
    int r = 0;
    for (const auto& s : test.data.subjects) {
        for (int j = 0; j < s.visits(); ++j) {
            const double t = std::min(s.times[j], params.dims.t_star);
            const auto pp = posterior_predict(params, s.markers.row(j).transpose(), t);
            scores.row(r++) = pp.probs.transpose();
            pred.push_back(pp.predicted);
        }
    }
    row.accuracy_posterior = accuracy(pred, truth.labels);
    row.auc = one_vs_rest_auc(scores, truth.labels);
}

void score_viterbi(const GeneratedCohort& test, const ModelParams& params, ReplicationRow& row) {
    const FlatTruth truth = flatten_truth(test);
    std::vector<int> pred;
    for (const auto& s : test.data.subjects) {
        const auto v = adaptive_viterbi(params, s.times, s.markers);
        pred.insert(pred.end(), v.path.begin(), v.path.end());
    }
    row.accuracy_viterbi = accuracy(pred, truth.labels);
}

std::vector<bool> canonical_support(int p) {
    std::vector<bool> support(p, false);
    for (int u = 0; u < std::min(p, 4); ++u) support[u] = true;
    return support;
}

}  // namespace

std::vector<ReplicationRow> evaluate_study(const Study& study, const FitConfig& fit_cfg,
                                           const std::vector<std::string>& methods,
                                           int replication) {
    std::vector<ReplicationRow> rows;
    const FlatTruth truth = flatten_truth(study.test);
    const std::vector<bool> support = canonical_support(study.truth.dims.num_markers);

    for (const auto& method : methods) {
        ReplicationRow row;
        row.replication = replication;
        row.method = method;
        row.accuracy_viterbi = kNaN;
        try {
            if (method == "proposed") {
                const FitResult fit_res = fit(study.train.data, fit_cfg);
                score_posterior(study.test, fit_res.params, row);
                score_viterbi(study.test, fit_res.params, row);
                row.selection = selection_metrics(fit_res.params.discrim.beta, support);
                row.mse = squared_error_blocks(fit_res.params, study.truth);
            } else if (method == "hmm") {
                const HmmFitResult hmm = fit_hmm(study.train.data, fit_cfg);
                const FlatTruth t = flatten_truth(study.test);
                Matrix scores(static_cast<int>(t.labels.size()),
                              study.truth.dims.num_states);
                std::vector<int> post_pred, vit_pred;
                int r = 0;
                for (const auto& s : study.test.data.subjects) {
                    const auto dec = hmm_decode(hmm.params, s);
                    for (int j = 0; j < s.visits(); ++j) {
                        scores.row(r++) = dec.posteriors.row(j);
                        int arg = 0;
                        for (int d = 1; d < dec.posteriors.cols(); ++d)
                            if (dec.posteriors(j, d) > dec.posteriors(j, arg)) arg = d;
                        post_pred.push_back(arg);
                    }
                    vit_pred.insert(vit_pred.end(), dec.viterbi_path.begin(),
                                    dec.viterbi_path.end());
                }
                row.accuracy_posterior = accuracy(post_pred, t.labels);
                row.accuracy_viterbi = accuracy(vit_pred, t.labels);
                row.auc = one_vs_rest_auc(scores, t.labels);
                ModelParams wrapped = study.truth;
                wrapped.init = hmm.params.init;
                wrapped.intensity = hmm.params.intensity;
                wrapped.emission = hmm.params.emission;
                row.mse = squared_error_blocks(wrapped, study.truth);
                row.mse.beta = kNaN;
            } else if (method == "dknown" || method == "obs") {
                std::vector<std::vector<int>> labels;
                if (method == "dknown") {
                    labels = study.train.truth;
                } else {
                    for (const auto& s : study.train.data.subjects)
                        labels.push_back(s.surrogate);
                }
                ModelParams params = study.truth;
                params.discrim = fit_labelled_logistic(study.train.data, labels,
                                                       fit_cfg.spline_order);
                score_posterior(study.test, params, row);
                row.mse.tran = row.mse.emis = row.mse.init = kNaN;
                row.mse.beta =
                    (params.discrim.beta - study.truth.discrim.beta).squaredNorm() /
                    params.discrim.beta.size();
            } else {
                throw std::invalid_argument("evaluate_study: unknown method " + method);
            }
        } catch (const std::exception& ex) {
            row.failed = true;
            row.error = ex.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
    BenchmarkResult result;
    const int S = cfg.sim.num_states;
    for (int rep = 1; rep <= cfg.replications; ++rep) {
        SimulationConfig sim = cfg.sim;
        sim.seed = derive_seed(cfg.sim.seed, static_cast<std::uint64_t>(rep));
        FitConfig fit_cfg = cfg.fit;
        fit_cfg.seed = derive_seed(cfg.fit.seed, static_cast<std::uint64_t>(rep));
        const Study study = make_study(sim);
        auto rows = evaluate_study(study, fit_cfg, cfg.methods, rep);
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }

    for (const auto& method : cfg.methods) {
        MethodSummary s;
        s.method = method;
        s.auc = Vector::Zero(S);
        Vector auc_count = Vector::Zero(S);
        double vit_sum = 0.0;
        int vit_count = 0;
        for (const auto& row : result.rows) {
            if (row.method != method) continue;
            if (row.failed) {
                ++s.failures;
                continue;
            }
            ++s.replications;
            s.accuracy_posterior += row.accuracy_posterior;
            if (!std::isnan(row.accuracy_viterbi)) {
                vit_sum += row.accuracy_viterbi;
                ++vit_count;
            }
            for (int k = 0; k < S && k < row.auc.size(); ++k)
                if (!std::isnan(row.auc[k])) {
                    s.auc[k] += row.auc[k];
                    auc_count[k] += 1.0;
                }
            s.selection.c += row.selection.c;
            s.selection.ic += row.selection.ic;
            s.selection.mcc += row.selection.mcc;
            s.mse.tran += row.mse.tran;
            s.mse.emis += row.mse.emis;
            s.mse.init += row.mse.init;
            s.mse.beta += row.mse.beta;
        }
        if (s.replications > 0) {
            const double n = s.replications;
            s.accuracy_posterior /= n;
            s.accuracy_viterbi = vit_count > 0 ? vit_sum / vit_count : kNaN;
            for (int k = 0; k < S; ++k)
                s.auc[k] = auc_count[k] > 0 ? s.auc[k] / auc_count[k] : kNaN;
            s.selection.c /= n;
            s.selection.ic /= n;
            s.selection.mcc /= n;
            s.mse.tran /= n;
            s.mse.emis /= n;
            s.mse.init /= n;
            s.mse.beta /= n;
        }
        result.summary.push_back(std::move(s));
    }
    return result;
}

}  // namespace dynclass
