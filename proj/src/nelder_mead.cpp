#include "dynclass/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace dynclass {

NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                             double initial_step, int max_iter, double tol) {
    const int n = static_cast<int>(start.size());
    std::vector<Vector> pts(n + 1, start);
    std::vector<double> vals(n + 1);
    for (int i = 1; i <= n; ++i) pts[i][i - 1] += initial_step;
    for (int i = 0; i <= n; ++i) vals[i] = f(pts[i]);

    NelderMeadResult res;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        std::vector<int> ord(n + 1);
        std::iota(ord.begin(), ord.end(), 0);
        std::sort(ord.begin(), ord.end(), [&](int a, int b) { return vals[a] < vals[b]; });
        const int best = ord[0], worst = ord[n], second_worst = ord[n - 1];

        double diam = 0.0;
        for (int i = 0; i <= n; ++i)
            diam = std::max(diam, (pts[i] - pts[best]).cwiseAbs().maxCoeff());
        if (vals[worst] - vals[best] < tol && diam < tol) {
            res.converged = true;
            break;
        }

        Vector centroid = Vector::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += pts[i];
        centroid /= n;

        const Vector refl = centroid + (centroid - pts[worst]);
        const double frefl = f(refl);
        if (frefl < vals[best]) {
            const Vector expd = centroid + 2.0 * (centroid - pts[worst]);
            const double fexpd = f(expd);
            if (fexpd < frefl) {
                pts[worst] = expd;
                vals[worst] = fexpd;
            } else {
                pts[worst] = refl;
                vals[worst] = frefl;
            }
        } else if (frefl < vals[second_worst]) {
            pts[worst] = refl;
            vals[worst] = frefl;
        } else {
            const Vector contr = (frefl < vals[worst])
                                     ? centroid + 0.5 * (refl - centroid)
                                     : centroid + 0.5 * (pts[worst] - centroid);
            const double fcontr = f(contr);
            if (fcontr < std::min(frefl, vals[worst])) {
                pts[worst] = contr;
                vals[worst] = fcontr;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }

    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (vals[i] < vals[best]) best = i;
    res.x = pts[best];
    res.value = vals[best];
    res.iterations = iter;
    return res;
}

}  // namespace dynclass
