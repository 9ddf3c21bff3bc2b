#pragma once

// Shipped PDE systems and their symmetry generators.
//
// Generator labels: burgers: v1..v5; darcy: v1_inf, v2_inf (formal h1, h2),
// v2_h=x, v2_h=y (linear harmonic h2).

#include "symflow/symmetry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace symflow {

/// Viscous Burgers u_t + u u_x - nu u_xx over {x, t | u | nu}. `nu` stays a
/// symbolic parameter in the residual; the numeric value is recorded in
/// params for grid evaluation.
PDESystem burgers(std::optional<double> nu = 0.01);

/// Darcy flow div(k grad u) + f in expanded form over {x, y | u, k, f}, with
/// the formal generators and the linear subalgebra attached.
PDESystem darcy();

/// v1_inf = h1(u) d_u - k h1_u(u) d_k and
/// v2_inf = -h2_y d_x - h2_x d_y + 2 f h2_xy d_f.
/// A missing h1/h2 keeps the function formal; a concrete h1 is a polynomial in
/// u, a concrete h2 a harmonic polynomial in x, y (std::invalid_argument
/// otherwise).
std::vector<GeneralizedVectorField> darcy_generators(const std::optional<Expr>& h1, const std::optional<Expr>& h2);

/// The two fields with h2 = x and h2 = y, in that order.
std::vector<GeneralizedVectorField> darcy_linear_subalgebra();

/// Basis used to instantiate the formal Darcy generators during verification:
/// h1 in {u, u^2}, h2 in {x, y, x*y, x^2 - y^2}.
std::vector<GeneralizedVectorField> darcy_instantiated_generators();

/// "burgers" or "darcy"; throws std::invalid_argument otherwise.
PDESystem pde_by_name(const std::string& name);

/// Externally quoted multiples c with pr v[residual] = c * residual for the
/// Burgers generators, keyed by generator label, in DSL syntax. Used to flag
/// disagreement with the computed cofactors.
std::map<std::string, std::string> burgers_reference_point_multiples();

}  // namespace symflow
