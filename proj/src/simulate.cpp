#include "dynclass/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dynclass/ctmc.hpp"
#include "dynclass/rng.hpp"
#include "dynclass/splines.hpp"

namespace dynclass {

ModelParams canonical_truth(int num_markers, double t_max) {
    if (num_markers < 4)
        throw std::invalid_argument("canonical_truth: at least four markers required");
    const int S = 4;
    ModelParams p;
    p.dims = {S, num_markers, t_max};

    p.init.pi = Vector(S);
    p.init.pi << 0.70, 0.12, 0.12, 0.06;

    p.intensity.structure_mask = progressive_mask(S);
    p.intensity.rho = Matrix::Zero(S, S);
    p.intensity.rho(0, 1) = 0.08;
    p.intensity.rho(0, 2) = 0.05;
    p.intensity.rho(0, 3) = 0.03;
    p.intensity.rho(1, 3) = 0.06;
    p.intensity.rho(2, 3) = 0.06;
    p.intensity.fix_diagonal();

    p.emission.feasible_mask = BoolMatrix::Constant(S, S, true);
    p.emission.e = Matrix(S, S);
    p.emission.e << 0.35, 0.26, 0.26, 0.13,  //
        0.19, 0.35, 0.13, 0.33,              //
        0.19, 0.13, 0.35, 0.33,              //
        0.11, 0.25, 0.25, 0.39;

    p.discrim.basis = make_basis(1, t_max, 4);
    p.discrim.eta = Matrix::Zero(S - 1, p.discrim.basis.dim());
    p.discrim.beta = Matrix::Zero(S - 1, num_markers);
    p.discrim.beta.block(0, 0, 3, 4) << 3.0, -2.4, 1.6, -1.8,  //
        -2.4, 3.0, -1.8, 1.6,                                  //
        1.8, 1.6, 2.8, 2.4;
    require_valid(validate_model(p), "canonical_truth");
    return p;
}

std::vector<double> sample_visit_schedule(double mean, double horizon, std::mt19937_64& rng) {
    std::poisson_distribution<int> extra(mean);
    std::uniform_real_distribution<double> u(0.0, horizon);
    const int m = 2 + extra(rng);
    std::vector<double> times;
    times.push_back(0.0);
    while (static_cast<int>(times.size()) < m) {
        const double t = u(rng);
        bool collides = false;
        for (double s : times)
            if (std::abs(t - s) < 1e-9) collides = true;
        if (!collides) times.push_back(t);
    }
    std::sort(times.begin(), times.end());
    return times;
}

Vector sample_marker(const SimulationConfig& cfg, std::mt19937_64& rng) {
    const int p = cfg.num_markers;
    std::normal_distribution<double> z(0.0, 1.0);
    Vector x(p);
    switch (cfg.scenario) {
        case Scenario::I:
            for (int u = 0; u < p; ++u) x[u] = z(rng);
            break;
        case Scenario::II: {
            if (p < 5)
                throw std::invalid_argument("sample_marker: scenario II needs p >= 5");
            x[0] = z(rng);
            x[1] = z(rng);
            std::bernoulli_distribution bern(0.5);
            x[2] = bern(rng) ? 1.0 : 0.0;
            std::uniform_int_distribution<int> cat(0, 2);
            const int level = cat(rng);
            x[3] = level == 1 ? 1.0 : 0.0;
            x[4] = level == 2 ? 1.0 : 0.0;
            for (int u = 5; u < p; ++u) x[u] = z(rng);
            break;
        }
        case Scenario::III: {
            // AR(1) correlation 0.5: x_u = 0.5 x_{u-1} + sqrt(0.75) eps_u.
            x[0] = z(rng);
            const double s = std::sqrt(1.0 - 0.25);
            for (int u = 1; u < p; ++u) x[u] = 0.5 * x[u - 1] + s * z(rng);
            break;
        }
    }
    return x;
}

MarkerPool build_marker_pool(const SimulationConfig& cfg, const ModelParams& truth,
                             std::mt19937_64& rng) {
    if (cfg.pool_size < 1000)
        throw std::invalid_argument("build_marker_pool: pool_size must be >= 1000");
    const int S = truth.dims.num_states;
    MarkerPool pool;
    pool.groups.assign(S, {});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        for (int i = 0; i < cfg.pool_size; ++i) {
            const Vector x = sample_marker(cfg, rng);
            // Intercept-free assignment: the time-varying intercept is
            // discarded when forming the candidate clusters.
            Vector lp(S);
            lp[0] = 0.0;
            for (int k = 1; k < S; ++k) lp[k] = truth.discrim.beta.row(k - 1).dot(x);
            const double mx = lp.maxCoeff();
            Vector prob = (lp.array() - mx).exp();
            prob /= prob.sum();
            double r = u(rng);
            int d = S - 1;
            for (int k = 0; k < S; ++k) {
                r -= prob[k];
                if (r <= 0.0) {
                    d = k;
                    break;
                }
            }
            pool.groups[d].push_back(x);
        }
        bool all_nonempty = true;
        for (const auto& g : pool.groups)
            if (g.empty()) all_nonempty = false;
        if (all_nonempty) break;
        for (auto& g : pool.groups) g.clear();
    }
    return pool;
}

GeneratedCohort generate_cohort(const ModelParams& truth, const MarkerPool& pool, int n,
                                double horizon, double visit_mean, bool final_state_known,
                                const std::string& id_prefix, std::mt19937_64& rng) {
    const int S = truth.dims.num_states;
    GeneratedCohort out;
    out.data.dims = truth.dims;
    out.data.dims.t_star = horizon;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        SubjectRecord s;
        s.subject_id = id_prefix + std::to_string(i + 1);
        s.times = sample_visit_schedule(visit_mean, horizon, rng);
        const int m = s.visits();
        const std::vector<int> d = sample_ctmc_states(truth.init, truth.intensity, s.times, rng);
        s.markers = Matrix(m, truth.dims.num_markers);
        s.surrogate.resize(m);
        for (int j = 0; j < m; ++j) {
            const auto& group = pool.groups[d[j]];
            std::uniform_int_distribution<size_t> pick(0, group.size() - 1);
            s.markers.row(j) = group[pick(rng)].transpose();
            if (j == m - 1) {
                s.surrogate[j] = d[j];
            } else {
                double r = u(rng);
                int z = S - 1;
                for (int k = 0; k < S; ++k) {
                    r -= truth.emission.e(d[j], k);
                    if (r <= 0.0) {
                        z = k;
                        break;
                    }
                }
                s.surrogate[j] = z;
            }
        }
        s.final_state_known = final_state_known;
        s.final_state = final_state_known ? d[m - 1] : -1;
        out.data.subjects.push_back(std::move(s));
        out.truth.push_back(d);
    }
    return out;
}

Study make_study(const SimulationConfig& cfg) {
    Study study;
    study.truth = canonical_truth(cfg.num_markers, cfg.t_max);
    auto pool_rng = make_rng(derive_seed(cfg.seed, "sim.pool"));
    const MarkerPool pool = build_marker_pool(cfg, study.truth, pool_rng);
    auto train_rng = make_rng(derive_seed(cfg.seed, "sim.train"));
    study.train = generate_cohort(study.truth, pool, cfg.n, cfg.t_max, cfg.visit_mean_train,
                                  /*final_state_known=*/true, "tr", train_rng);
    auto test_rng = make_rng(derive_seed(cfg.seed, "sim.test"));
    study.test = generate_cohort(study.truth, pool, 2 * cfg.n, cfg.test_horizon,
                                 cfg.visit_mean_test, /*final_state_known=*/false, "te", test_rng);
    return study;
}

}  // namespace dynclass
