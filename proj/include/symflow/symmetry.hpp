#pragma once

// Generalized vector fields, their characteristics, prolongation actions on
// differential functions, and on-shell vanishing certificates.

#include "symflow/jet.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace symflow {

struct GeneralizedVectorField {
    VarSpace space;
    std::vector<Expr> xi;   // one per independent variable
    std::vector<Expr> phi;  // one per dependent variable
    std::string name;
    // Formal functions of (x^0, x^1) that are constrained to be harmonic.
    std::vector<std::string> harmonic;

    /// Throws std::invalid_argument on length mismatch.
    void validate() const;
    /// True iff every coefficient depends on (x, u) only.
    bool is_point() const;
};

struct EvolutionaryField {
    VarSpace space;
    std::vector<Expr> Q;
    std::string name;
    std::vector<std::string> harmonic;

    void validate() const;
    /// The same field written with xi = 0, phi = Q.
    GeneralizedVectorField as_generalized() const;
};

struct PDESystem {
    std::string name;
    VarSpace space;
    std::vector<Expr> residuals;
    std::map<std::string, std::optional<double>> params;
    std::vector<GeneralizedVectorField> generators;
    std::vector<std::string> notes;

    const GeneralizedVectorField* find_generator(std::string_view label) const;
};

/// Q_alpha = phi_alpha - sum_i xi^i u^alpha_i.
EvolutionaryField characteristic(const GeneralizedVectorField& v);

/// pr v_Q[F] = sum over derivative coordinates u^alpha_J of F of D_J Q_alpha * dF/du^alpha_J.
Expr prolong_apply_evolutionary(const EvolutionaryField& field, const Expr& F);

/// Classical prolongation pr v[F], built from the recursive coefficient
/// formula phi^{J,i} = D_i phi^J - sum_k D_i xi^k u_{J,k}. It does not go
/// through the characteristic, so comparing it against
/// prolong_apply_evolutionary is a genuine two-route check.
Expr prolong_apply_point(const GeneralizedVectorField& v, const Expr& F);

/// Rewrites derivatives of the named two-argument formal functions with the
/// harmonic relation h_xx = -h_yy, so every surviving atom has first-argument
/// derivative order <= 1.
Expr harmonic_reduce(const Expr& e, const std::vector<std::string>& funcs);

/// True iff the Laplacian over all independent variables of `space` vanishes.
/// Throws std::invalid_argument if p involves anything but independent
/// variables and constants.
bool check_harmonic(const Expr& p, const VarSpace& space);

struct CofactorKey {
    int residual = 0;
    MultiIndex J;
    auto operator<=>(const CofactorKey&) const = default;
    bool operator==(const CofactorKey&) const = default;
};

/// target = sum_{r,J} c_{r,J} * D_J[residual_r]. Zero coefficients are omitted.
struct CofactorDecomposition {
    std::map<CofactorKey, Expr> coefficients;

    Expr reconstruct(std::span<const Expr> residuals, const std::vector<std::string>& harmonic = {}) const;
    /// True iff every nonzero coefficient multiplies an undifferentiated residual.
    bool only_order_zero() const;
};

struct CofactorOptions {
    int max_order = 2;   // |J| bound
    int max_degree = 3;  // cofactor monomial degree bound
    std::size_t max_unknowns = 20000;
    std::vector<std::string> harmonic;
};

/// Searches cofactors among monomials that divide some target monomial, up to
/// the degree bound, by exact elimination over the rationals. std::nullopt
/// means no decomposition exists in that search space, which is not a proof of
/// non-vanishing. Throws std::length_error past `max_unknowns`.
std::optional<CofactorDecomposition> cofactor_decompose(const Expr& target, std::span<const Expr> residuals,
                                                        std::size_t num_independent, const CofactorOptions& opts);
std::optional<CofactorDecomposition> cofactor_decompose(const Expr& target, const PDESystem& pde,
                                                        const CofactorOptions& opts);

enum class SymmetryStatus { Certified, Refuted, Inconclusive };
std::string to_string(SymmetryStatus s);

struct SymmetryReport {
    SymmetryStatus status = SymmetryStatus::Inconclusive;
    std::string field;
    std::vector<Expr> targets;  // one per residual, after harmonic reduction
    std::vector<std::optional<CofactorDecomposition>> witnesses;
    std::string detail;
};

SymmetryReport is_symmetry(const GeneralizedVectorField& v, const PDESystem& pde, CofactorOptions opts = {});
SymmetryReport is_symmetry(const EvolutionaryField& v, const PDESystem& pde, CofactorOptions opts = {});

}  // namespace symflow
