#pragma once

#include "dynclass/types.hpp"

namespace dynclass {

// J_n = ceil(n^{1/9}) equidistant interior knots, clamped boundary knots.
SplineBasis build_basis(int n, double t_star, int order = 4);

SplineBasis make_basis(int interior_knots, double t_star, int order = 4);

// Cox-de Boor evaluation; right-continuous at interior knots, left limit at t_star.
Vector evaluate_basis(const SplineBasis& basis, double t);

}  // namespace dynclass
