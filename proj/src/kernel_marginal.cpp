#include "dynclass/kernel_marginal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dynclass/ctmc.hpp"
#include "dynclass/splines.hpp"

namespace dynclass {

double epanechnikov(double u) { return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

double default_bandwidth(int n, double t_star) {
    return t_star * std::pow(static_cast<double>(n), -0.2);
}

Vector hmm_state_marginal(const InitialDistribution& init, const TransitionIntensityMatrix& r,
                          double t) {
    if (t < 0.0) throw std::domain_error("hmm_state_marginal: negative time");
    Vector out = (init.pi.transpose() * matrix_exponential(t * r.rho)).transpose();
    out = out.cwiseMax(0.0);
    out /= out.sum();
    return out;
}

NwMarginalEvaluator::NwMarginalEvaluator(const Dataset& data, const DiscriminativeParams& discrim,
                                         const KernelConfig& cfg)
    : discrim_(&discrim), bandwidth_(cfg.bandwidth) {
    if (!(bandwidth_ > 0.0)) throw std::invalid_argument("NwMarginalEvaluator: bandwidth <= 0");
    const int K = static_cast<int>(discrim.eta.rows());
    const int N = data.total_visits();
    std::vector<std::pair<double, int>> order;
    order.reserve(N);
    Matrix scores(K + 1, N);
    int idx = 0;
    for (const auto& s : data.subjects) {
        for (int j = 0; j < s.visits(); ++j, ++idx) {
            order.emplace_back(s.times[j], idx);
            scores(0, idx) = 0.0;
            for (int k = 1; k <= K; ++k)
                scores(k, idx) = discrim.beta.row(k - 1).dot(s.markers.row(j));
        }
    }
    std::sort(order.begin(), order.end());
    times_.resize(N);
    exp_marker_score_.resize(K + 1, N);
    for (int i = 0; i < N; ++i) {
        times_[i] = order[i].first;
        const int src = order[i].second;
        const double mx = scores.col(src).maxCoeff();
        for (int k = 0; k <= K; ++k)
            exp_marker_score_(k, i) = std::exp(scores(k, src) - mx);
    }
}

Vector NwMarginalEvaluator::evaluate(double t, const InitialDistribution& init,
                                     const TransitionIntensityMatrix& r,
                                     std::vector<std::string>* warnings) const {
    const int K = static_cast<int>(discrim_->eta.rows());
    const Vector b = evaluate_basis(discrim_->basis, t);
    Vector exp_alpha(K + 1);
    double amax = 0.0;
    Vector alpha(K + 1);
    alpha[0] = 0.0;
    for (int k = 1; k <= K; ++k) {
        alpha[k] = discrim_->eta.row(k - 1).dot(b);
        amax = std::max(amax, alpha[k]);
    }
    for (int k = 0; k <= K; ++k) exp_alpha[k] = std::exp(alpha[k] - amax);

    const auto lo = std::lower_bound(times_.begin(), times_.end(), t - bandwidth_);
    const auto hi = std::upper_bound(times_.begin(), times_.end(), t + bandwidth_);
    Vector acc = Vector::Zero(K + 1);
    double wsum = 0.0;
    for (auto it = lo; it != hi; ++it) {
        const int i = static_cast<int>(it - times_.begin());
        const double w = epanechnikov((t - times_[i]) / bandwidth_);
        if (w <= 0.0) continue;
        double denom = 0.0;
        for (int k = 0; k <= K; ++k) denom += exp_alpha[k] * exp_marker_score_(k, i);
        const double scale = w / denom;
        for (int k = 0; k <= K; ++k) acc[k] += scale * exp_alpha[k] * exp_marker_score_(k, i);
        wsum += w;
    }
    if (wsum <= 0.0) {
        if (warnings)
            warnings->push_back("nw_state_marginal: empty kernel window at t=" + std::to_string(t) +
                                "; falling back to the HMM-dual marginal");
        return hmm_state_marginal(init, r, t);
    }
    acc /= wsum;
    return acc;
}

Vector nw_state_marginal(const Dataset& data, const DiscriminativeParams& discrim,
                         const KernelConfig& cfg, double t, const InitialDistribution& init,
                         const TransitionIntensityMatrix& r, std::vector<std::string>* warnings) {
    NwMarginalEvaluator eval(data, discrim, cfg);
    return eval.evaluate(t, init, r, warnings);
}

}  // namespace dynclass
