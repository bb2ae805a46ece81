#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "dynclass/csv_io.hpp"
#include "dynclass/ctmc.hpp"
#include "dynclass/eval.hpp"
#include "dynclass/rng.hpp"
#include "dynclass/simulate.hpp"
#include "dynclass/splines.hpp"
#include "test_helpers.hpp"

using namespace dynclass;

TEST_CASE("canonical truth validates; visit schedules behave") {
    const ModelParams truth = canonical_truth(6);
    CHECK(validate_model(truth).empty());
    CHECK(truth.discrim.beta.col(4).norm() == 0.0);
    CHECK(truth.discrim.beta.col(0).norm() > 0.0);

    auto rng = make_rng(70);
    double mean = 0.0;
    const int N = 10000;
    for (int i = 0; i < N; ++i) {
        const auto times = sample_visit_schedule(6.0, 10.0, rng);
        CHECK(times.size() >= 2);
        CHECK(times.front() == 0.0);
        for (size_t j = 1; j < times.size(); ++j) {
            CHECK(times[j] > times[j - 1]);
            CHECK(times[j] < 10.0);
        }
        mean += static_cast<double>(times.size()) / N;
    }
    // E[m] = 8, Var = 6 -> se of the mean ~ 0.0245
    CHECK(std::abs(mean - 8.0) < 3 * std::sqrt(6.0 / N));
}

TEST_CASE("marker pool: beta = 0 gives near-uniform groups; scenario laws") {
    SimulationConfig cfg;
    cfg.pool_size = 40000;
    ModelParams truth = canonical_truth(4);
    truth.discrim.beta.setZero();
    auto rng = make_rng(71);
    const MarkerPool pool = build_marker_pool(cfg, truth, rng);
    for (int d = 0; d < 4; ++d) {
        const double frac = static_cast<double>(pool.groups[d].size()) / cfg.pool_size;
        const double se = std::sqrt(0.25 * 0.75 / cfg.pool_size);
        CHECK(std::abs(frac - 0.25) < 3.5 * se);
    }

    // scenario II support
    SimulationConfig c2 = cfg;
    c2.scenario = Scenario::II;
    c2.num_markers = 5;
    auto rng2 = make_rng(72);
    for (int i = 0; i < 500; ++i) {
        const Vector x = sample_marker(c2, rng2);
        CHECK((x[2] == 0.0 || x[2] == 1.0));
        CHECK((x[3] == 0.0 || x[3] == 1.0));
        CHECK((x[4] == 0.0 || x[4] == 1.0));
        CHECK(x[3] + x[4] <= 1.0);
    }
    SimulationConfig c2small = c2;
    c2small.num_markers = 4;
    CHECK_THROWS_AS(sample_marker(c2small, rng2), std::invalid_argument);

    // scenario III AR(1) correlation 0.5
    SimulationConfig c3 = cfg;
    c3.scenario = Scenario::III;
    c3.num_markers = 4;
    auto rng3 = make_rng(73);
    const int N = 100000;
    double s01 = 0.0, s0 = 0.0, s1 = 0.0, s00 = 0.0, s11 = 0.0;
    for (int i = 0; i < N; ++i) {
        const Vector x = sample_marker(c3, rng3);
        s01 += x[0] * x[1];
        s0 += x[0];
        s1 += x[1];
        s00 += x[0] * x[0];
        s11 += x[1] * x[1];
    }
    const double corr = (s01 / N - s0 / N * s1 / N) /
                        std::sqrt((s00 / N - s0 / N * s0 / N) * (s11 / N - s1 / N * s1 / N));
    CHECK(std::abs(corr - 0.5) < 0.02);
}

TEST_CASE("generate_cohort: emission frequencies, last-visit constraint, determinism") {
    SimulationConfig cfg;
    cfg.pool_size = 5000;
    const ModelParams truth = canonical_truth(4);
    auto prng = make_rng(74);
    const MarkerPool pool = build_marker_pool(cfg, truth, prng);
    auto rng = make_rng(75);
    const auto cohort = generate_cohort(truth, pool, 2000, 10.0, 6.0, true, "s", rng);

    Matrix counts = Matrix::Zero(4, 4);
    for (size_t i = 0; i < cohort.data.subjects.size(); ++i) {
        const auto& s = cohort.data.subjects[i];
        const int m = s.visits();
        CHECK(s.surrogate[m - 1] == cohort.truth[i][m - 1]);
        CHECK(s.final_state == cohort.truth[i][m - 1]);
        for (int j = 0; j < m - 1; ++j) counts(cohort.truth[i][j], s.surrogate[j]) += 1.0;
    }
    for (int d = 0; d < 4; ++d) {
        const double n = counts.row(d).sum();
        for (int k = 0; k < 4; ++k) {
            const double p = truth.emission.e(d, k);
            const double se = std::sqrt(p * (1 - p) / n);
            CHECK(std::abs(counts(d, k) / n - p) < 3.5 * se + 1e-12);
        }
    }

    auto rng_b = make_rng(75);
    const auto again = generate_cohort(truth, pool, 2000, 10.0, 6.0, true, "s", rng_b);
    CHECK(again.data.subjects[7].times == cohort.data.subjects[7].times);
    CHECK((again.data.subjects[7].markers - cohort.data.subjects[7].markers)
              .cwiseAbs()
              .maxCoeff() == 0.0);
}

TEST_CASE("make_study: sizes, horizons, seeded bit-determinism") {
    SimulationConfig cfg;
    cfg.n = 40;
    cfg.pool_size = 2000;
    cfg.seed = 77;
    const Study a = make_study(cfg);
    CHECK(a.test.data.subjects.size() == 2 * a.train.data.subjects.size());
    for (const auto& s : a.test.data.subjects)
        for (double t : s.times) CHECK(t < 7.0);
    const Study b = make_study(cfg);
    CHECK((a.train.data.subjects[3].markers - b.train.data.subjects[3].markers)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(a.test.truth == b.test.truth);
}

TEST_CASE("accuracy pinned examples") {
    CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 100.0);
    CHECK(accuracy({0, 1}, {1, 0}) == 0.0);
    CHECK(accuracy({1, 1, 0, 2}, {1, 1, 0, 0}) == 75.0);
}

TEST_CASE("one_vs_rest_auc pinned examples") {
    {
        Matrix scores(4, 2);
        scores << 0.1, 0.9, 0.2, 0.8, 0.9, 0.1, 0.8, 0.2;
        const Vector auc = one_vs_rest_auc(scores, {1, 1, 0, 0});
        CHECK(auc[0] == 1.0);
        CHECK(auc[1] == 1.0);
    }
    {
        Matrix scores = Matrix::Constant(6, 2, 0.5);
        const Vector auc = one_vs_rest_auc(scores, {0, 1, 0, 1, 0, 1});
        CHECK(auc[0] == 0.5);
        CHECK(auc[1] == 0.5);
    }
    {
        // hand case {(0.9,+),(0.8,-),(0.7,+),(0.1,-)} -> 3 of 4 pairs concordant
        Matrix scores(4, 2);
        scores << 0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.9, 0.1;
        const Vector auc = one_vs_rest_auc(scores, {1, 0, 1, 0});
        CHECK(auc[1] == doctest::Approx(0.75));
    }
}

TEST_CASE("selection_metrics pinned examples") {
    std::vector<bool> support(20, false);
    for (int u = 0; u < 4; ++u) support[u] = true;
    Matrix exact = Matrix::Zero(3, 20);
    exact.block(0, 0, 3, 4).setConstant(1.0);
    const auto a = selection_metrics(exact, support);
    CHECK(a.c == 4.0);
    CHECK(a.ic == 0.0);
    CHECK(a.mcc == doctest::Approx(1.0));

    const auto b = selection_metrics(Matrix::Constant(3, 20, 0.5), support);
    CHECK(b.c == 4.0);
    CHECK(b.ic == 16.0);
    CHECK(b.mcc == 0.0);

    const auto c = selection_metrics(Matrix::Zero(3, 20), support);
    CHECK(c.c == 0.0);
    CHECK(c.mcc == 0.0);
}

TEST_CASE("misd pinned examples") {
    const SplineBasis basis = make_basis(2, 10.0, 4);
    DiscriminativeParams a, b;
    a.basis = b.basis = basis;
    a.eta = Matrix::Zero(2, basis.dim());
    a.beta = Matrix::Zero(2, 1);
    b = a;
    CHECK(misd(a, b, 10.0).cwiseAbs().maxCoeff() == 0.0);

    // constant offset c: alpha difference = c everywhere (partition of unity)
    const double c = 0.7;
    DiscriminativeParams off = a;
    off.eta.row(0).setConstant(c);
    const Vector m1 = misd(off, a, 10.0);
    CHECK(m1[0] == doctest::Approx(10.0 * c * c).epsilon(1e-6));
    CHECK(m1[1] == 0.0);

    // sign flip doubles the amplitude -> 4x the integral
    DiscriminativeParams neg = a;
    neg.eta.row(0).setConstant(-c);
    const Vector m2 = misd(off, neg, 10.0);
    CHECK(m2[0] == doctest::Approx(4.0 * m1[0]).epsilon(1e-6));
}

TEST_CASE("squared_error_blocks respects masks") {
    const ModelParams truth = canonical_truth(4);
    ModelParams fitted = truth;
    fitted.intensity.rho(0, 1) += 0.1;
    fitted.intensity.fix_diagonal();
    const auto e = squared_error_blocks(fitted, truth);
    CHECK(e.tran == doctest::Approx(0.01 / 5.0));
    CHECK(e.emis == 0.0);
    CHECK(e.init == 0.0);
    CHECK(e.beta == 0.0);
}

TEST_CASE("cohort and truth CSV round-trips") {
    SimulationConfig cfg;
    cfg.n = 15;
    cfg.pool_size = 2000;
    cfg.seed = 80;
    const Study study = make_study(cfg);
    const std::string path = "/tmp/dynclass_test_cohort.csv";
    const std::string tpath = "/tmp/dynclass_test_truth.csv";
    write_cohort_csv(study.train.data, path);
    const Dataset back = read_cohort_csv(path);
    REQUIRE(back.subjects.size() == study.train.data.subjects.size());
    CHECK(back.dims.num_markers == 4);
    for (size_t i = 0; i < back.subjects.size(); ++i) {
        CHECK(back.subjects[i].times == study.train.data.subjects[i].times);
        CHECK(back.subjects[i].surrogate == study.train.data.subjects[i].surrogate);
        CHECK(back.subjects[i].final_state_known ==
              study.train.data.subjects[i].final_state_known);
        CHECK((back.subjects[i].markers - study.train.data.subjects[i].markers)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
    write_truth_csv(study.train.data, study.train.truth, tpath);
    CHECK(read_truth_csv(tpath, back) == study.train.truth);
    std::remove(path.c_str());
    std::remove(tpath.c_str());
}

TEST_CASE("predictions CSV round-trip and metrics writer") {
    std::vector<PredictionRow> rows;
    PredictionRow r;
    r.subject_id = "a";
    r.time = 1.25;
    r.predicted_state = 2;
    r.probs = Vector(3);
    r.probs << 0.2, 0.3, 0.5;
    rows.push_back(r);
    const std::string path = "/tmp/dynclass_test_pred.csv";
    write_predictions_csv(rows, 3, path);
    const auto back = read_predictions_csv(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].subject_id == "a");
    CHECK(back[0].time == 1.25);
    CHECK(back[0].predicted_state == 2);
    CHECK((back[0].probs - r.probs).cwiseAbs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("run_benchmark: single-rep determinism") {
    BenchmarkConfig cfg;
    cfg.sim.n = 25;
    cfg.sim.pool_size = 2000;
    cfg.sim.seed = 81;
    cfg.fit.max_iter = 3;
    cfg.fit.seed = 81;
    cfg.fit.structure_mask = progressive_mask(4);
    cfg.replications = 1;
    cfg.methods = {"dknown", "obs"};
    const auto a = run_benchmark(cfg);
    const auto b = run_benchmark(cfg);
    REQUIRE(a.rows.size() == 2);
    CHECK(a.rows[0].accuracy_posterior == b.rows[0].accuracy_posterior);
    CHECK(a.rows[1].accuracy_posterior == b.rows[1].accuracy_posterior);
    CHECK(a.summary[0].failures == 0);
}
