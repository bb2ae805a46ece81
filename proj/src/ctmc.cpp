#include "dynclass/ctmc.hpp"

#include <cmath>
#include <stdexcept>

namespace dynclass {

namespace {

// Pade-13 numerator coefficients (Higham 2005).
constexpr double kB[14] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                           1187353796428800.0,  129060195264000.0,   10559470521600.0,
                           670442572800.0,      33522128640.0,       1323241920.0,
                           40840800.0,          960960.0,            16380.0,
                           182.0,               1.0};
constexpr double kTheta13 = 5.371920351148152;

template <typename Mat>
Mat expm_pade13(const Mat& arg, int n) {
    double norm1 = 0.0;
    for (int j = 0; j < n; ++j) {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += std::abs(arg(i, j));
        norm1 = std::max(norm1, c);
    }
    int squarings = 0;
    Mat a = arg;
    if (norm1 > kTheta13) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / kTheta13)));
        a /= std::ldexp(1.0, squarings);
    }
    const Mat ident = Mat::Identity(n, n);
    const Mat a2 = a * a;
    const Mat a4 = a2 * a2;
    const Mat a6 = a4 * a2;
    const Mat u = a * (a6 * (kB[13] * a6 + kB[11] * a4 + kB[9] * a2) + kB[7] * a6 + kB[5] * a4 +
                       kB[3] * a2 + kB[1] * ident);
    const Mat v = a6 * (kB[12] * a6 + kB[10] * a4 + kB[8] * a2) + kB[6] * a6 + kB[4] * a4 +
                  kB[2] * a2 + kB[0] * ident;
    Mat r = (v - u).partialPivLu().solve(v + u);
    for (int s = 0; s < squarings; ++s) r = r * r;
    return r;
}

}  // namespace

Matrix matrix_exponential(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("matrix_exponential: matrix not square");
    if (!m.allFinite()) throw std::domain_error("matrix_exponential: non-finite entries");
    const int n = static_cast<int>(m.rows());
    // Fixed-size paths keep the hot EM loops allocation-free.
    switch (n) {
        case 1: {
            Matrix r(1, 1);
            r(0, 0) = std::exp(m(0, 0));
            return r;
        }
        case 2:
            return expm_pade13<Eigen::Matrix2d>(m, 2);
        case 3:
            return expm_pade13<Eigen::Matrix3d>(m, 3);
        case 4:
            return expm_pade13<Eigen::Matrix4d>(m, 4);
        default:
            return expm_pade13<Matrix>(m, n);
    }
}

TransitionProbabilityMatrix transition_probability(const TransitionIntensityMatrix& r, double dt,
                                                   std::vector<std::string>* warnings) {
    if (dt < 0.0) throw std::domain_error("transition_probability: dt must be nonnegative");
    const int n = static_cast<int>(r.rho.rows());
    TransitionProbabilityMatrix out;
    out.dt = dt;
    out.q = matrix_exponential(dt * r.rho);
    const BoolMatrix reach = transitive_closure(r.structure_mask);
    double worst = 0.0;
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
            double& q = out.q(k, l);
            if (!reach(k, l)) {
                q = 0.0;
                continue;
            }
            if (q < 0.0) {
                worst = std::max(worst, -q);
                q = 0.0;
            } else if (q > 1.0) {
                worst = std::max(worst, q - 1.0);
                q = 1.0;
            }
        }
    if (warnings && worst > 1e-12)
        warnings->push_back("transition_probability: clamped entries by up to " +
                            std::to_string(worst));
    return out;
}

std::vector<int> sample_ctmc_states(const InitialDistribution& init,
                                    const TransitionIntensityMatrix& r,
                                    const std::vector<double>& times, std::mt19937_64& rng) {
    std::vector<int> states;
    states.reserve(times.size());
    if (times.empty()) return states;
    const int n = static_cast<int>(init.pi.size());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto draw = [&](const Vector& probs) {
        double u = unif(rng);
        double cum = 0.0;
        for (int d = 0; d < n; ++d) {
            cum += probs[d];
            if (u <= cum) return d;
        }
        return n - 1;
    };
    states.push_back(draw(init.pi));
    for (size_t j = 1; j < times.size(); ++j) {
        auto q = transition_probability(r, times[j] - times[j - 1]);
        Vector row = q.q.row(states.back()).transpose();
        double s = row.sum();
        if (s > 0.0) row /= s;
        states.push_back(draw(row));
    }
    return states;
}

}  // namespace dynclass
