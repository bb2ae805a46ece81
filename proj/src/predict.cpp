#include "dynclass/predict.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dynclass/ctmc.hpp"
#include "dynclass/discriminative.hpp"
#include "dynclass/kernel_marginal.hpp"

namespace dynclass {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

int argmax_row(const Matrix& delta, int row) {
    int best = 0;
    for (int d = 1; d < delta.cols(); ++d)
        if (delta(row, d) > delta(row, best)) best = d;
    return best;
}

ViterbiResult run_viterbi(const ModelParams& params, const std::vector<double>& times,
                          const Matrix& markers, int num_observed) {
    const int m = static_cast<int>(times.size());
    const int S = params.dims.num_states;
    if (m < 1) throw std::invalid_argument("adaptive_viterbi: at least one visit required");
    for (int j = 1; j < m; ++j)
        if (!(times[j] > times[j - 1]))
            throw std::domain_error("adaptive_viterbi: times must be strictly increasing");

    ViterbiResult out;
    out.delta = Matrix::Constant(m, S, kNegInf);
    out.psi = Eigen::MatrixXi::Constant(m, S, -1);

    const Vector p1 =
        class_probabilities(params.discrim, markers.row(0).transpose(), times[0]);
    for (int d = 0; d < S; ++d) out.delta(0, d) = safe_log(p1[d]);

    for (int j = 1; j < m; ++j) {
        const Matrix q =
            transition_probability(params.intensity, times[j] - times[j - 1]).q;
        Vector log_ratio = Vector::Zero(S);
        if (j < num_observed) {
            const Vector cond =
                class_probabilities(params.discrim, markers.row(j).transpose(), times[j]);
            const Vector marg = hmm_state_marginal(params.init, params.intensity, times[j]);
            for (int d = 0; d < S; ++d) {
                if (!(marg[d] > 0.0) && cond[d] > 0.0) {
                    std::ostringstream os;
                    os << "adaptive_viterbi: zero marginal for state " << d << " at time "
                       << times[j];
                    throw std::runtime_error(os.str());
                }
                log_ratio[d] = safe_log(cond[d]) - safe_log(marg[d]);
            }
        }
        for (int d = 0; d < S; ++d) {
            double best = kNegInf;
            int arg = 0;
            for (int k = 0; k < S; ++k) {
                const double v = out.delta(j - 1, k) + safe_log(q(k, d));
                if (v > best) {
                    best = v;
                    arg = k;
                }
            }
            out.delta(j, d) = best == kNegInf ? kNegInf : best + log_ratio[d];
            out.psi(j, d) = arg;
        }
    }

    const int last = argmax_row(out.delta, m - 1);
    out.log_prob = out.delta(m - 1, last);
    if (out.log_prob == kNegInf)
        throw std::runtime_error("adaptive_viterbi: no feasible state sequence");
    out.path.assign(m, 0);
    out.path[m - 1] = last;
    for (int j = m - 1; j > 0; --j) out.path[j - 1] = out.psi(j, out.path[j]);
    return out;
}

}  // namespace

PosteriorPrediction posterior_predict(const ModelParams& params, const Vector& x, double t) {
    if (t < 0.0 || t > params.dims.t_star)
        throw std::domain_error("posterior_predict: t outside [0, t_star]");
    PosteriorPrediction out;
    out.probs = class_probabilities(params.discrim, x, t);
    out.predicted = 0;
    for (int d = 1; d < out.probs.size(); ++d)
        if (out.probs[d] > out.probs[out.predicted]) out.predicted = d;
    return out;
}

ViterbiResult adaptive_viterbi(const ModelParams& params, const std::vector<double>& times,
                               const Matrix& markers) {
    if (static_cast<int>(times.size()) != markers.rows())
        throw std::invalid_argument("adaptive_viterbi: times/markers size mismatch");
    return run_viterbi(params, times, markers, static_cast<int>(times.size()));
}

ViterbiResult forecast(const ModelParams& params, const std::vector<double>& history_times,
                       const Matrix& history_markers, const std::vector<double>& future_times) {
    if (history_times.empty())
        throw std::invalid_argument("forecast: at least one history visit required");
    std::vector<double> times = history_times;
    for (size_t j = 0; j < future_times.size(); ++j) {
        if (!(future_times[j] > times.back()))
            throw std::domain_error("forecast: future times must be increasing past the history");
        times.push_back(future_times[j]);
    }
    Matrix markers = Matrix::Zero(static_cast<int>(times.size()), history_markers.cols());
    markers.topRows(history_markers.rows()) = history_markers;
    return run_viterbi(params, times, markers, static_cast<int>(history_times.size()));
}

}  // namespace dynclass
