#include "dynclass/discriminative.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dynclass/splines.hpp"

namespace dynclass {

Vector class_probabilities(const DiscriminativeParams& discrim, const Vector& x, double t) {
    const int K = static_cast<int>(discrim.eta.rows());
    const Vector b = evaluate_basis(discrim.basis, t);
    Vector lp = Vector::Zero(K + 1);
    for (int k = 1; k <= K; ++k)
        lp[k] = discrim.eta.row(k - 1).dot(b) + discrim.beta.row(k - 1).dot(x);
    const double mx = lp.maxCoeff();
    Vector probs = (lp.array() - mx).exp();
    probs /= probs.sum();
    return probs;
}

namespace {

// Internal dense form: theta is K x q with q = basis_dim + p, columns
// [spline coefficients | marker coefficients].
struct DenseProblem {
    Matrix features;  // N x q
    Matrix weights;   // N x (K+1)
    int basis_dim = 0;
    int p = 0;
    int K = 0;

    int n_rows() const { return static_cast<int>(features.rows()); }
    int q() const { return basis_dim + p; }
};

DenseProblem densify(const WeightedClassificationProblem& problem, int K) {
    DenseProblem d;
    d.basis_dim = problem.basis.dim();
    d.p = problem.rows.empty() ? 0 : static_cast<int>(problem.rows.front().x.size());
    d.K = K;
    const int N = static_cast<int>(problem.rows.size());
    d.features.resize(N, d.q());
    d.weights.resize(N, K + 1);
    for (int i = 0; i < N; ++i) {
        const auto& row = problem.rows[i];
        d.features.row(i).head(d.basis_dim) = evaluate_basis(problem.basis, row.t).transpose();
        d.features.row(i).tail(d.p) = row.x.transpose();
        d.weights.row(i) = row.weights.transpose();
    }
    return d;
}

// Negative mean weighted log-likelihood and its gradient.
double smooth_loss(const DenseProblem& d, const Matrix& theta, Matrix* grad) {
    const int N = d.n_rows();
    const int K = d.K;
    // lp: N x K, class-0 predictor is 0.
    Matrix lp = d.features * theta.transpose();
    double loss = 0.0;
    Matrix resid(N, K);  // probs(1..K) - weights(1..K)
    for (int i = 0; i < N; ++i) {
        double mx = 0.0;
        for (int k = 0; k < K; ++k) mx = std::max(mx, lp(i, k));
        double denom = std::exp(-mx);
        for (int k = 0; k < K; ++k) denom += std::exp(lp(i, k) - mx);
        const double log_denom = mx + std::log(denom);
        loss += d.weights(i, 0) * log_denom;  // -w0 * log p0
        for (int k = 0; k < K; ++k) {
            loss -= d.weights(i, k + 1) * (lp(i, k) - log_denom);
            resid(i, k) = std::exp(lp(i, k) - log_denom) - d.weights(i, k + 1);
        }
    }
    if (grad) *grad = (resid.transpose() * d.features) / N;
    return loss / N;
}

double group_penalty(const DenseProblem& d, const Matrix& theta, const PenaltyConfig& pen) {
    if (pen.kind != PenaltyConfig::Kind::GroupAdaptiveLasso) return 0.0;
    double s = 0.0;
    for (int u = 0; u < d.p; ++u)
        s += pen.adaptive_weights[u] * theta.col(d.basis_dim + u).norm();
    return pen.lambda * s;
}

void prox_step(const DenseProblem& d, Matrix& theta, const PenaltyConfig& pen, double step) {
    if (pen.kind != PenaltyConfig::Kind::GroupAdaptiveLasso) return;
    for (int u = 0; u < d.p; ++u) {
        auto col = theta.col(d.basis_dim + u);
        const double norm = col.norm();
        const double thresh = step * pen.lambda * pen.adaptive_weights[u];
        if (norm <= thresh)
            col.setZero();
        else
            col *= (1.0 - thresh / norm);
    }
}

struct DenseFitResult {
    Matrix theta;
    FitDiagnostics diag;
};

DenseFitResult fit_dense(const DenseProblem& d, const PenaltyConfig& pen, const Matrix& theta0,
                         int max_iter = 2000, double grad_tol = 1e-6) {
    Matrix x = theta0, y = theta0;
    Matrix grad(d.K, d.q());
    // The loss is a sum over weighted rows, so the gradient scale grows with
    // the total weight; make the stopping criterion scale-invariant.
    grad_tol *= std::max(1.0, d.weights.sum());
    double fx = smooth_loss(d, x, nullptr);
    double Fx = fx + group_penalty(d, x, pen);
    double L = 1.0;
    double t_acc = 1.0;
    DenseFitResult out;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        const double fy = smooth_loss(d, y, &grad);
        if (!std::isfinite(fy)) throw std::runtime_error("fit_weighted_multinomial: non-finite objective");
        // Backtracking on the majorization at y.
        Matrix z;
        double fz;
        for (;;) {
            z = y - grad / L;
            prox_step(d, z, pen, 1.0 / L);
            fz = smooth_loss(d, z, nullptr);
            const Matrix diff = z - y;
            const double quad = fy + (grad.array() * diff.array()).sum() +
                                0.5 * L * diff.squaredNorm();
            if (fz <= quad + 1e-14 || L > 1e12) break;
            L *= 2.0;
        }
        const double Fz = fz + group_penalty(d, z, pen);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
        // Monotone variant: keep the best iterate, extrapolate through z.
        Matrix x_next = (Fz <= Fx) ? z : x;
        double Fx_next = std::min(Fz, Fx);
        y = x_next + (t_acc / t_next) * (z - x_next) + ((t_acc - 1.0) / t_next) * (x_next - x);
        x = std::move(x_next);
        Fx = Fx_next;
        t_acc = t_next;
        L *= 0.9;

        // Convergence on the prox-gradient mapping at x.
        Matrix gx(d.K, d.q());
        smooth_loss(d, x, &gx);
        Matrix px = x - gx;
        prox_step(d, px, pen, 1.0);
        const double map_norm = (x - px).cwiseAbs().maxCoeff();
        if (map_norm < grad_tol) {
            // Near-separated problems satisfy the gradient criterion while the
            // linear predictors are still drifting (loss and gradient both
            // ~ e^{-|lp|}); a collapsing smooth loss is the signature. Keep
            // iterating at a tighter tolerance so separation reaches the
            // diagnostic threshold instead of stalling just below it.
            if (grad_tol > 1e-13 && smooth_loss(d, x, nullptr) < 1e-4 * d.weights.sum()) {
                grad_tol = 1e-13;
                continue;
            }
            out.diag.converged = true;
            out.diag.grad_sup_norm = gx.cwiseAbs().maxCoeff();
            break;
        }
        out.diag.grad_sup_norm = gx.cwiseAbs().maxCoeff();
    }
    out.diag.iterations = iter;
    out.diag.objective = -Fx;
    // Complete-separation heuristic: unbounded linear predictors at convergence.
    const Matrix lp = d.features * x.transpose();
    out.diag.separation = lp.size() > 0 && lp.cwiseAbs().maxCoeff() > 30.0;
    out.theta = std::move(x);
    return out;
}

Matrix pack_theta(const DiscriminativeParams& params) {
    Matrix theta(params.eta.rows(), params.eta.cols() + params.beta.cols());
    theta << params.eta, params.beta;
    return theta;
}

DiscriminativeParams unpack_theta(const Matrix& theta, const SplineBasis& basis, int p) {
    DiscriminativeParams out;
    out.basis = basis;
    out.eta = theta.leftCols(theta.cols() - p);
    out.beta = theta.rightCols(p);
    return out;
}

}  // namespace

DiscriminativeParams fit_weighted_multinomial(const WeightedClassificationProblem& problem,
                                              const PenaltyConfig& penalty,
                                              const DiscriminativeParams& init,
                                              FitDiagnostics* diag, int inner_max_iter,
                                              double inner_tol) {
    if (problem.rows.empty())
        throw std::invalid_argument("fit_weighted_multinomial: empty problem");
    const int K = static_cast<int>(init.eta.rows());
    DenseProblem d = densify(problem, K);
    if (init.eta.cols() != d.basis_dim || init.beta.cols() != d.p)
        throw std::invalid_argument("fit_weighted_multinomial: init dimensions mismatch");
    if (penalty.kind == PenaltyConfig::Kind::GroupAdaptiveLasso &&
        penalty.adaptive_weights.size() != d.p)
        throw std::invalid_argument("fit_weighted_multinomial: adaptive weights length mismatch");
    auto res = fit_dense(d, penalty, pack_theta(init), inner_max_iter, inner_tol);
    if (diag) *diag = res.diag;
    return unpack_theta(res.theta, problem.basis, d.p);
}

double lambda_max(const WeightedClassificationProblem& problem, const Vector& adaptive_weights) {
    if (problem.rows.empty()) throw std::invalid_argument("lambda_max: empty problem");
    const int K = static_cast<int>(problem.rows.front().weights.size()) - 1;
    DenseProblem d = densify(problem, K);
    // Intercept-only fit: beta fixed at zero, eta free.
    PenaltyConfig none;
    Matrix theta0 = Matrix::Zero(K, d.q());
    DenseProblem intercept_only = d;
    intercept_only.features.rightCols(d.p).setZero();
    auto res = fit_dense(intercept_only, none, theta0);
    Matrix theta = res.theta;
    theta.rightCols(d.p).setZero();
    Matrix grad(K, d.q());
    smooth_loss(d, theta, &grad);
    double lmax = 0.0;
    for (int u = 0; u < d.p; ++u)
        lmax = std::max(lmax, grad.col(d.basis_dim + u).norm() / adaptive_weights[u]);
    return lmax;
}

std::vector<double> default_lambda_grid(double lmax) {
    std::vector<double> grid(50);
    const double lmin = 1e-3 * lmax;
    for (int i = 0; i < 50; ++i)
        grid[i] = lmin * std::pow(lmax / lmin, static_cast<double>(i) / 49.0);
    return grid;
}

CvResult cross_validate_lambda(const WeightedClassificationProblem& problem,
                               const std::vector<double>& lambda_grid,
                               const Vector& adaptive_weights, int folds, std::mt19937_64& rng) {
    if (folds < 2) throw std::invalid_argument("cross_validate_lambda: folds must be >= 2");
    if (lambda_grid.empty()) throw std::invalid_argument("cross_validate_lambda: empty grid");
    const int N = static_cast<int>(problem.rows.size());
    if (N < folds) throw std::invalid_argument("cross_validate_lambda: fewer rows than folds");
    const int K = static_cast<int>(problem.rows.front().weights.size()) - 1;
    const int G = static_cast<int>(lambda_grid.size());

    // Stratified fold assignment by argmax weight class.
    std::vector<int> fold_of(N);
    {
        std::vector<std::vector<int>> by_class(K + 1);
        for (int i = 0; i < N; ++i) {
            int cls = 0;
            problem.rows[i].weights.maxCoeff(&cls);
            by_class[cls].push_back(i);
        }
        for (auto& idxs : by_class) {
            std::shuffle(idxs.begin(), idxs.end(), rng);
            for (size_t r = 0; r < idxs.size(); ++r)
                fold_of[idxs[r]] = static_cast<int>(r % folds);
        }
    }

    DenseProblem full = densify(problem, K);
    Matrix fold_dev = Matrix::Zero(folds, G);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_idx, test_idx;
        for (int i = 0; i < N; ++i) (fold_of[i] == f ? test_idx : train_idx).push_back(i);
        DenseProblem train = full, test = full;
        auto subset = [&](DenseProblem& dst, const std::vector<int>& idx) {
            Matrix feat(static_cast<int>(idx.size()), full.q());
            Matrix w(static_cast<int>(idx.size()), K + 1);
            for (size_t r = 0; r < idx.size(); ++r) {
                feat.row(static_cast<int>(r)) = full.features.row(idx[r]);
                w.row(static_cast<int>(r)) = full.weights.row(idx[r]);
            }
            dst.features = std::move(feat);
            dst.weights = std::move(w);
        };
        subset(train, train_idx);
        subset(test, test_idx);
        // Warm-started path from the largest lambda down.
        Matrix theta = Matrix::Zero(K, full.q());
        for (int g = G - 1; g >= 0; --g) {
            PenaltyConfig pen;
            pen.kind = PenaltyConfig::Kind::GroupAdaptiveLasso;
            pen.lambda = lambda_grid[g];
            pen.adaptive_weights = adaptive_weights;
            theta = fit_dense(train, pen, theta, 1000, 1e-6).theta;
            fold_dev(f, g) = 2.0 * smooth_loss(test, theta, nullptr);
        }
    }

    CvResult out;
    out.grid = lambda_grid;
    out.mean_deviance.resize(G);
    out.se_deviance.resize(G);
    for (int g = 0; g < G; ++g) {
        const double mean = fold_dev.col(g).mean();
        double var = 0.0;
        for (int f = 0; f < folds; ++f) var += (fold_dev(f, g) - mean) * (fold_dev(f, g) - mean);
        var /= (folds - 1);
        out.mean_deviance[g] = mean;
        out.se_deviance[g] = std::sqrt(var / folds);
    }
    int best = 0;
    for (int g = 1; g < G; ++g)
        if (out.mean_deviance[g] < out.mean_deviance[best]) best = g;
    const double cutoff = out.mean_deviance[best] + out.se_deviance[best];
    int chosen = best;
    for (int g = 0; g < G; ++g)
        if (out.mean_deviance[g] <= cutoff && lambda_grid[g] > lambda_grid[chosen]) chosen = g;
    out.lambda = lambda_grid[chosen];
    return out;
}

}  // namespace dynclass
