#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "dynclass/discriminative.hpp"
#include "dynclass/splines.hpp"
#include "dynclass/types.hpp"

namespace testutil {

using dynclass::BoolMatrix;
using dynclass::Matrix;
using dynclass::Vector;

// Truncated Taylor series, the independent matrix-exponential oracle.
inline Matrix taylor_expm(const Matrix& m, int terms = 50) {
    Matrix sum = Matrix::Identity(m.rows(), m.cols());
    Matrix term = Matrix::Identity(m.rows(), m.cols());
    for (int k = 1; k <= terms; ++k) {
        term = term * m / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

inline Vector random_simplex(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = u(rng);
    return v / v.sum();
}

inline dynclass::TransitionIntensityMatrix random_intensity(int S, std::mt19937_64& rng,
                                                            double max_rate = 1.0) {
    std::uniform_real_distribution<double> u(0.05, max_rate);
    dynclass::TransitionIntensityMatrix r;
    r.structure_mask = dynclass::all_feasible_mask(S);
    r.rho = Matrix::Zero(S, S);
    for (int k = 0; k < S; ++k)
        for (int l = 0; l < S; ++l)
            if (k != l) r.rho(k, l) = u(rng);
    r.fix_diagonal();
    return r;
}

inline dynclass::EmissionMatrix random_emission(int S, std::mt19937_64& rng) {
    dynclass::EmissionMatrix e;
    e.feasible_mask = BoolMatrix::Constant(S, S, true);
    e.e = Matrix(S, S);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (;;) {
        for (int k = 0; k < S; ++k) {
            Vector row(S);
            for (int l = 0; l < S; ++l) row[l] = u(rng);
            row[k] += 1.0;  // keep rows distinct and diagonally weighted
            e.e.row(k) = (row / row.sum()).transpose();
        }
        bool distinct = true;
        for (int a = 0; a < S; ++a)
            for (int b = a + 1; b < S; ++b)
                if ((e.e.row(a) - e.e.row(b)).cwiseAbs().maxCoeff() < 1e-6) distinct = false;
        if (distinct) return e;
    }
}

inline dynclass::ModelParams random_model(int S, int p, std::mt19937_64& rng,
                                          double t_star = 10.0) {
    dynclass::ModelParams m;
    m.dims = {S, p, t_star};
    m.init.pi = random_simplex(S, rng);
    m.intensity = random_intensity(S, rng);
    m.emission = random_emission(S, rng);
    m.discrim.basis = dynclass::make_basis(2, t_star, 4);
    std::normal_distribution<double> z(0.0, 0.5);
    m.discrim.eta = Matrix(S - 1, m.discrim.basis.dim());
    m.discrim.beta = Matrix(S - 1, p);
    for (int i = 0; i < m.discrim.eta.size(); ++i) m.discrim.eta.data()[i] = z(rng);
    for (int i = 0; i < m.discrim.beta.size(); ++i) m.discrim.beta.data()[i] = z(rng);
    return m;
}

inline dynclass::SubjectRecord random_subject(const dynclass::ModelParams& m, int visits,
                                              std::mt19937_64& rng, bool final_known) {
    dynclass::SubjectRecord s;
    s.subject_id = "s";
    std::uniform_real_distribution<double> ut(0.05, m.dims.t_star * 0.99);
    s.times.push_back(0.0);
    while (static_cast<int>(s.times.size()) < visits) {
        const double t = ut(rng);
        bool dup = false;
        for (double v : s.times)
            if (std::abs(v - t) < 1e-6) dup = true;
        if (!dup) s.times.push_back(t);
    }
    std::sort(s.times.begin(), s.times.end());
    std::normal_distribution<double> z(0.0, 1.0);
    s.markers = Matrix(visits, m.dims.num_markers);
    for (int i = 0; i < s.markers.size(); ++i) s.markers.data()[i] = z(rng);
    std::uniform_int_distribution<int> uz(0, m.dims.num_states - 1);
    for (int j = 0; j < visits; ++j) s.surrogate.push_back(uz(rng));
    s.final_state_known = final_known;
    s.final_state = final_known ? s.surrogate.back() : -1;
    return s;
}

inline Matrix random_marginals(int m, int S, std::mt19937_64& rng) {
    Matrix marg(m, S);
    for (int j = 0; j < m; ++j) marg.row(j) = random_simplex(S, rng).transpose();
    return marg;
}

// Adaptive sequence score for exhaustive enumeration: pi * prod q * prod g,
// computed independently of the library's recursions.
double adaptive_sequence_score(const dynclass::ModelParams& params,
                               const dynclass::SubjectRecord& subject, const Matrix& marginals,
                               const std::vector<int>& seq);

// All (K+1)^m sequences.
std::vector<std::vector<int>> all_sequences(int S, int m);

}  // namespace testutil
