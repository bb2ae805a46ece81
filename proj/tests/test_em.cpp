#include <doctest.h>

#include <cmath>
#include <random>

#include "dynclass/ctmc.hpp"
#include "dynclass/em.hpp"
#include "dynclass/hmm_baseline.hpp"
#include "dynclass/kernel_marginal.hpp"
#include "dynclass/rng.hpp"
#include "dynclass/simulate.hpp"
#include "test_helpers.hpp"

using namespace dynclass;

namespace {

// Classical HMM smoothed posteriors by exhaustive enumeration on Z only.
Matrix classical_enum_gamma(const ModelParams& m, const SubjectRecord& s) {
    const int S = m.dims.num_states;
    const int mv = s.visits();
    Matrix gamma = Matrix::Zero(mv, S);
    double total = 0.0;
    for (const auto& seq : testutil::all_sequences(S, mv)) {
        double sc = m.init.pi[seq[0]];
        for (int j = 1; j < mv; ++j)
            sc *= transition_probability(m.intensity, s.times[j] - s.times[j - 1])
                      .q(seq[j - 1], seq[j]);
        for (int j = 0; j < mv; ++j) {
            if (s.final_state_known && mv >= 2 && j == mv - 1)
                sc *= seq[j] == s.final_state ? 1.0 : 0.0;
            else
                sc *= m.emission.e(seq[j], s.surrogate[j]);
        }
        total += sc;
        for (int j = 0; j < mv; ++j) gamma(j, seq[j]) += sc;
    }
    return gamma / total;
}

}  // namespace

TEST_CASE("A_1 with P-hat = pi reduces to emission times conditional") {
    auto rng = make_rng(40);
    const ModelParams m = testutil::random_model(3, 2, rng);
    SubjectRecord s = testutil::random_subject(m, 1, rng, false);
    Matrix marg(1, 3);
    marg.row(0) = m.init.pi.transpose();
    const Matrix logA = adaptive_forward(s, m, marg);
    const Vector cond =
        class_probabilities(m.discrim, s.markers.row(0).transpose(), s.times[0]);
    for (int d = 0; d < 3; ++d) {
        const double expect = m.emission.e(d, s.surrogate[0]) * cond[d];
        CHECK(std::exp(logA(0, d)) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("gamma/xi match exhaustive enumeration within 1e-10") {
    auto rng = make_rng(41);
    std::uniform_int_distribution<int> uk(1, 2), um(2, 5), up(1, 3);
    std::bernoulli_distribution known(0.5);
    for (int rep = 0; rep < 30; ++rep) {
        const int S = uk(rng) + 1, mv = um(rng), p = up(rng);
        const ModelParams m = testutil::random_model(S, p, rng);
        const SubjectRecord s = testutil::random_subject(m, mv, rng, known(rng));
        const Matrix marg = testutil::random_marginals(mv, S, rng);

        Matrix gamma_o = Matrix::Zero(mv, S);
        std::vector<Matrix> xi_o(mv - 1, Matrix::Zero(S, S));
        double total = 0.0;
        for (const auto& seq : testutil::all_sequences(S, mv)) {
            const double sc = testutil::adaptive_sequence_score(m, s, marg, seq);
            total += sc;
            for (int j = 0; j < mv; ++j) gamma_o(j, seq[j]) += sc;
            for (int j = 1; j < mv; ++j) xi_o[j - 1](seq[j - 1], seq[j]) += sc;
        }
        gamma_o /= total;
        for (auto& x : xi_o) x /= total;

        const EStepQuantities e = e_step_subject(s, m, marg);
        CHECK((e.gamma - gamma_o).cwiseAbs().maxCoeff() < 1e-10);
        for (int j = 0; j < mv - 1; ++j)
            CHECK((e.xi[j] - xi_o[j]).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(e.log_norm == doctest::Approx(std::log(total)).epsilon(1e-10));
    }
}

TEST_CASE("gamma/xi marginalization consistency and final-visit indicator") {
    auto rng = make_rng(42);
    const ModelParams m = testutil::random_model(3, 2, rng);
    const SubjectRecord s = testutil::random_subject(m, 5, rng, true);
    const Matrix marg = testutil::random_marginals(5, 3, rng);
    const EStepQuantities e = e_step_subject(s, m, marg);
    for (int j = 0; j < 5; ++j) CHECK(std::abs(e.gamma.row(j).sum() - 1.0) < 1e-10);
    for (int j = 1; j < 5; ++j) {
        for (int k = 0; k < 3; ++k)
            CHECK(e.xi[j - 1].row(k).sum() == doctest::Approx(e.gamma(j - 1, k)).epsilon(1e-8));
        for (int l = 0; l < 3; ++l)
            CHECK(e.xi[j - 1].col(l).sum() == doctest::Approx(e.gamma(j, l)).epsilon(1e-8));
    }
    for (int d = 0; d < 3; ++d)
        CHECK(e.gamma(4, d) == doctest::Approx(d == s.final_state ? 1.0 : 0.0));
}

TEST_CASE("A_j B_j summed over d is constant in j") {
    auto rng = make_rng(43);
    const ModelParams m = testutil::random_model(3, 2, rng);
    const SubjectRecord s = testutil::random_subject(m, 4, rng, false);
    const Matrix marg = testutil::random_marginals(4, 3, rng);
    const Matrix logA = adaptive_forward(s, m, marg);
    const Matrix logB = adaptive_backward(s, m, marg);
    double ref = 0.0;
    for (int j = 0; j < 4; ++j) {
        double v = 0.0;
        for (int d = 0; d < 3; ++d) v += std::exp(logA(j, d) + logB(j, d));
        if (j == 0) ref = v;
        CHECK(v == doctest::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("uninformative markers reduce to the classical recursion") {
    auto rng = make_rng(44);
    for (int rep = 0; rep < 20; ++rep) {
        ModelParams m = testutil::random_model(3, 2, rng);
        const SubjectRecord s = testutil::random_subject(m, 4, rng, rep % 2 == 0);
        // Make the ratio exactly 1: marginals equal the model's conditionals.
        Matrix marg(4, 3);
        for (int j = 0; j < 4; ++j)
            marg.row(j) = class_probabilities(m.discrim, s.markers.row(j).transpose(),
                                              s.times[j])
                              .transpose();
        const EStepQuantities adaptive = e_step_subject(s, m, marg);
        const EStepQuantities classical =
            e_step_subject(s, m, Matrix(), /*classical_ratio=*/true);
        CHECK((adaptive.gamma - classical.gamma).cwiseAbs().maxCoeff() < 1e-10);
        for (int j = 0; j < 3; ++j)
            CHECK((adaptive.xi[j] - classical.xi[j]).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((adaptive.gamma - classical_enum_gamma(m, s)).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("c-invariance: the marker-marginal constant changes nothing") {
    auto rng = make_rng(45);
    const ModelParams m = testutil::random_model(3, 2, rng);
    const SubjectRecord s = testutil::random_subject(m, 4, rng, true);
    const Matrix marg = testutil::random_marginals(4, 3, rng);
    const EStepQuantities e1 = e_step_subject(s, m, marg, false, 1.0);
    const EStepQuantities e2 = e_step_subject(s, m, marg, false, 7.31);
    CHECK((e1.gamma - e2.gamma).cwiseAbs().maxCoeff() < 1e-12);
    for (int j = 0; j < 3; ++j)
        CHECK((e1.xi[j] - e2.xi[j]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero marginal raises an error naming the visit") {
    auto rng = make_rng(46);
    const ModelParams m = testutil::random_model(3, 2, rng);
    const SubjectRecord s = testutil::random_subject(m, 3, rng, false);
    Matrix marg = testutil::random_marginals(3, 3, rng);
    marg(1, 2) = 0.0;
    CHECK_THROWS_WITH_AS(e_step_subject(s, m, marg),
                         doctest::Contains("visit 1"), std::runtime_error);
}

TEST_CASE("mstep_initial pinned examples") {
    EStepQuantities a, b;
    a.gamma = Matrix::Zero(2, 3);
    a.gamma(0, 0) = 1.0;
    b.gamma = Matrix::Zero(2, 3);
    b.gamma(0, 1) = 1.0;
    const auto pi = mstep_initial({a, b});
    CHECK(pi.pi[0] == doctest::Approx(0.5));
    CHECK(pi.pi[1] == doctest::Approx(0.5));
    CHECK(pi.pi[2] == 0.0);

    auto rng = make_rng(47);
    std::vector<EStepQuantities> es(5);
    Vector direct = Vector::Zero(3);
    for (auto& e : es) {
        e.gamma = testutil::random_marginals(3, 3, rng);
        direct += e.gamma.row(0).transpose() / 5.0;
    }
    CHECK((mstep_initial(es).pi - direct).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mstep_emission: ratio formula, final visit excluded, zero-mass row kept") {
    auto rng = make_rng(48);
    const ModelParams m = testutil::random_model(3, 2, rng);
    SubjectRecord s = testutil::random_subject(m, 3, rng, false);
    EStepQuantities e;
    e.gamma = testutil::random_marginals(3, 3, rng);
    EmissionMatrix prev = m.emission;
    const auto fit = mstep_emission({e}, {s}, prev, nullptr);
    // hand ratio over visits 0..m-2 only
    for (int k = 0; k < 3; ++k) {
        Vector num = Vector::Zero(3);
        double den = 0.0;
        for (int j = 0; j < 2; ++j) {
            num[s.surrogate[j]] += e.gamma(j, k);
            den += e.gamma(j, k);
        }
        for (int l = 0; l < 3; ++l)
            CHECK(fit.e(k, l) == doctest::Approx(num[l] / den).epsilon(1e-14));
    }

    // zero posterior mass on state 2 -> previous row kept, warning emitted
    EStepQuantities z = e;
    z.gamma.col(2).setZero();
    std::vector<std::string> warnings;
    const auto kept = mstep_emission({z}, {s}, prev, &warnings);
    CHECK((kept.e.row(2) - prev.e.row(2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(warnings.size() == 1);
}

TEST_CASE("mstep_transition: no transitions drives the rate to the lower clamp") {
    auto rng = make_rng(49);
    FitConfig cfg;
    TransitionIntensityMatrix r;
    r.structure_mask = BoolMatrix::Constant(2, 2, false);
    r.structure_mask(0, 1) = true;
    r.rho = Matrix::Zero(2, 2);
    r.rho(0, 1) = 0.5;
    r.fix_diagonal();
    SubjectRecord s;
    s.subject_id = "a";
    s.times = {0.0, 1.0, 2.0};
    s.surrogate = {0, 0, 0};
    s.markers = Matrix::Zero(3, 1);
    EStepQuantities e;
    e.gamma = Matrix::Zero(3, 2);
    e.xi.assign(2, Matrix::Zero(2, 2));
    e.xi[0](0, 0) = 1.0;  // stay-stay with certainty
    e.xi[1](0, 0) = 1.0;
    auto opt_rng = make_rng(50);
    const auto fit = mstep_transition({e}, {s}, r, cfg, opt_rng, nullptr);
    CHECK(fit.rho(0, 1) < 1e-6);
    (void)rng;
}

TEST_CASE("mstep_transition: single observed transition matches golden-section oracle") {
    FitConfig cfg;
    TransitionIntensityMatrix r;
    r.structure_mask = BoolMatrix::Constant(2, 2, false);
    r.structure_mask(0, 1) = true;
    r.rho = Matrix::Zero(2, 2);
    r.rho(0, 1) = 0.3;
    r.fix_diagonal();
    const double t = 1.7;
    SubjectRecord s;
    s.subject_id = "a";
    s.times = {0.0, t};
    s.surrogate = {0, 1};
    s.markers = Matrix::Zero(2, 1);
    EStepQuantities e;
    e.gamma = Matrix::Zero(2, 2);
    e.xi.assign(1, Matrix::Zero(2, 2));
    e.xi[0](0, 1) = 1.0;  // transition observed with certainty

    // golden-section maximization of log(1 - exp(-lambda t)) is monotone
    // increasing, so add a second stay interval to create an interior optimum:
    SubjectRecord s2 = s;
    s2.times = {0.0, 2.3};
    EStepQuantities e2;
    e2.gamma = Matrix::Zero(2, 2);
    e2.xi.assign(1, Matrix::Zero(2, 2));
    e2.xi[0](0, 0) = 1.0;

    auto obj = [&](double lam) {
        return -(std::log(1.0 - std::exp(-lam * t)) + (-lam * 2.3));
    };
    double a = 1e-4, b = 10.0;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    for (int it = 0; it < 200; ++it) {
        if (obj(c) < obj(d))
            b = d;
        else
            a = c;
        c = b - gr * (b - a);
        d = a + gr * (b - a);
    }
    const double oracle = 0.5 * (a + b);

    auto opt_rng = make_rng(51);
    const auto fit = mstep_transition({e, e2}, {s, s2}, r, cfg, opt_rng, nullptr);
    CHECK(fit.rho(0, 1) == doctest::Approx(oracle).epsilon(1e-5));
}

TEST_CASE("mstep_discriminative with one-hot weights equals a labeled fit") {
    auto rng = make_rng(52);
    const ModelParams m = testutil::random_model(3, 2, rng);
    std::vector<SubjectRecord> subjects;
    std::vector<EStepQuantities> es;
    for (int i = 0; i < 30; ++i) {
        subjects.push_back(testutil::random_subject(m, 4, rng, false));
        EStepQuantities e;
        e.gamma = Matrix::Zero(4, 3);
        std::uniform_int_distribution<int> uc(0, 2);
        for (int j = 0; j < 4; ++j) e.gamma(j, uc(rng)) = 1.0;
        es.push_back(e);
    }
    PenaltyConfig none;
    const auto fit = mstep_discriminative(es, subjects, m.discrim.basis, none, m.discrim);
    // uniform weights: beta gradient is 0 at beta = 0 -> fitted probs uniform
    std::vector<EStepQuantities> eu = es;
    for (auto& e : eu) e.gamma = Matrix::Constant(4, 3, 1.0 / 3.0);
    DiscriminativeParams zero = m.discrim;
    zero.eta.setZero();
    zero.beta.setZero();
    const auto fitu = mstep_discriminative(eu, subjects, m.discrim.basis, none, zero);
    CHECK(fitu.beta.cwiseAbs().maxCoeff() < 1e-4);
    (void)fit;
}

TEST_CASE("initialize rejects single-class surrogates; m=1 contract on fit config") {
    SimulationConfig sc;
    sc.n = 20;
    sc.pool_size = 2000;
    sc.seed = 5;
    const Study study = make_study(sc);
    Dataset degenerate = study.train.data;
    for (auto& s : degenerate.subjects) {
        for (auto& z : s.surrogate) z = 0;
        s.final_state = 0;
    }
    FitConfig cfg;
    cfg.structure_mask = progressive_mask(4);
    CHECK_THROWS_AS(initialize(degenerate, cfg), std::invalid_argument);
    FitConfig bad = cfg;
    bad.max_iter = 0;
    CHECK_THROWS_AS(fit(study.train.data, bad), std::invalid_argument);
}

TEST_CASE("one EM iteration at max_iter = 1; frozen-marginal monotonicity; determinism") {
    SimulationConfig sc;
    sc.n = 30;
    sc.pool_size = 2000;
    sc.seed = 6;
    const Study study = make_study(sc);
    FitConfig cfg;
    cfg.structure_mask = progressive_mask(4);
    cfg.max_iter = 1;
    cfg.seed = 9;
    const FitResult one = fit(study.train.data, cfg);
    CHECK(one.iterations == 1);
    CHECK_FALSE(one.converged);

    cfg.max_iter = 8;
    const FitResult a = fit(study.train.data, cfg);
    for (const auto& row : a.trace)
        CHECK(row.adaptive_loglik_after >= row.adaptive_loglik - 1e-8);
    const FitResult b = fit(study.train.data, cfg);
    CHECK((a.params.init.pi - b.params.init.pi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.params.intensity.rho - b.params.intensity.rho).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.params.discrim.beta - b.params.discrim.beta).cwiseAbs().maxCoeff() == 0.0);
    // initialization log-likelihood below the final fitted one
    CHECK(a.trace.back().adaptive_loglik_after >= a.trace.front().adaptive_loglik);
}

TEST_CASE("fit_config_hash distinguishes configs") {
    FitConfig a, b;
    b.tol = 1e-5;
    CHECK(fit_config_hash(a) != fit_config_hash(b));
    CHECK(fit_config_hash(a) == fit_config_hash(a));
}
