#include "dynclass/splines.hpp"

#include <cmath>
#include <stdexcept>

namespace dynclass {

SplineBasis build_basis(int n, double t_star, int order) {
    if (n < 1) throw std::invalid_argument("build_basis: n must be >= 1");
    double raw = std::pow(static_cast<double>(n), 1.0 / 9.0);
    // pow can land an ulp above an exact integer; keep ceil stable there.
    double nearest = std::round(raw);
    if (std::abs(raw - nearest) < 1e-9) raw = nearest;
    return make_basis(static_cast<int>(std::ceil(raw)), t_star, order);
}

SplineBasis make_basis(int interior_knots, double t_star, int order) {
    if (!(t_star > 0.0)) throw std::invalid_argument("make_basis: t_star must be positive");
    if (order < 1) throw std::invalid_argument("make_basis: order must be >= 1");
    if (interior_knots < 0) throw std::invalid_argument("make_basis: negative knot count");
    SplineBasis b;
    b.order = order;
    b.interior_knots = interior_knots;
    b.t_star = t_star;
    b.knot_vector.reserve(2 * order + interior_knots);
    for (int i = 0; i < order; ++i) b.knot_vector.push_back(0.0);
    for (int i = 1; i <= interior_knots; ++i)
        b.knot_vector.push_back(t_star * i / (interior_knots + 1));
    for (int i = 0; i < order; ++i) b.knot_vector.push_back(t_star);
    return b;
}

Vector evaluate_basis(const SplineBasis& basis, double t) {
    if (t < 0.0 || t > basis.t_star)
        throw std::domain_error("evaluate_basis: t outside [0, t_star]");
    const int r = basis.order;
    const int dim = basis.dim();
    const auto& knots = basis.knot_vector;

    // Knot span, right-continuous convention; t = t_star falls in the last span.
    int mu = dim - 1;
    if (t < basis.t_star) {
        mu = r - 1;
        while (mu + 1 < dim && t >= knots[mu + 1]) ++mu;
    }

    // Triangular Cox-de Boor scheme over the r possibly-nonzero functions.
    std::vector<double> nvals(r, 0.0);
    nvals[0] = 1.0;
    for (int deg = 1; deg < r; ++deg) {
        double saved = 0.0;
        for (int j = 0; j < deg; ++j) {
            const int idx = mu - deg + 1 + j;
            const double denom = knots[idx + deg] - knots[idx];
            const double term = denom > 0.0 ? nvals[j] / denom : 0.0;
            nvals[j] = saved + (knots[idx + deg] - t) * term;
            saved = (t - knots[idx]) * term;
        }
        nvals[deg] = saved;
    }

    Vector out = Vector::Zero(dim);
    for (int j = 0; j < r; ++j) out[mu - r + 1 + j] = nvals[j];
    return out;
}

}  // namespace dynclass
