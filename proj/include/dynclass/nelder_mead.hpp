#pragma once

#include <functional>

#include "dynclass/types.hpp"

namespace dynclass {

struct NelderMeadResult {
    Vector x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Minimizes f; stops when the simplex function spread and diameter fall below tol.
NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& start,
                             double initial_step = 0.25, int max_iter = 500, double tol = 1e-8);

}  // namespace dynclass
