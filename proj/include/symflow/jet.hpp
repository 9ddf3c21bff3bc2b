#pragma once

// Symbolic expressions over jet-space coordinates.
//
// An Expr is always held in canonical form: an expanded polynomial whose
// monomials are products of atoms (jet coordinates, named parameters and
// formal function symbols) with exact rational coefficients. Every
// arithmetic operation re-normalizes, so structural equality is semantic
// equality on the polynomial fragment.

#include <gmpxx.h>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace symflow {

using Rational = mpq_class;

/// Raised by the DSL parser; carries the byte offset of the offending token.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at position " + std::to_string(position)), position_(position) {}
    std::size_t position() const noexcept { return position_; }

  private:
    std::size_t position_;
};

class VarSpace {
  public:
    VarSpace(std::vector<std::string> independent, std::vector<std::string> dependent,
             std::vector<std::string> parameters = {});

    const std::vector<std::string>& independent() const noexcept { return independent_; }
    const std::vector<std::string>& dependent() const noexcept { return dependent_; }
    const std::vector<std::string>& parameters() const noexcept { return parameters_; }
    std::size_t p() const noexcept { return independent_.size(); }
    std::size_t q() const noexcept { return dependent_.size(); }

    std::optional<int> independent_index(std::string_view name) const;
    std::optional<int> dependent_index(std::string_view name) const;
    bool is_parameter(std::string_view name) const;

    bool operator==(const VarSpace&) const = default;

  private:
    std::vector<std::string> independent_;
    std::vector<std::string> dependent_;
    std::vector<std::string> parameters_;
};

/// Derivative counts per independent variable, in VarSpace order.
struct MultiIndex {
    std::vector<int> counts;

    MultiIndex() = default;
    explicit MultiIndex(std::size_t p) : counts(p, 0) {}
    explicit MultiIndex(std::vector<int> c) : counts(std::move(c)) {}

    int order() const noexcept;
    bool empty() const noexcept { return order() == 0; }
    MultiIndex plus(std::size_t axis, int n = 1) const;

    /// Lower total order first; within an order, earlier axes first (u_x < u_t).
    std::strong_ordering operator<=>(const MultiIndex& other) const;
    bool operator==(const MultiIndex&) const = default;
};

/// Enumerates every multi-index over `p` axes with total order <= max_order,
/// ordered by MultiIndex's ordering.
std::vector<MultiIndex> multi_indices_up_to(std::size_t p, int max_order);

struct JetCoord {
    enum class Kind : std::uint8_t { Independent, Derivative };

    Kind kind = Kind::Derivative;
    int index = 0;  // independent index or dependent index alpha
    MultiIndex J;   // Derivative only

    static JetCoord independent(int i) { return JetCoord{Kind::Independent, i, {}}; }
    static JetCoord dependent(int alpha, MultiIndex J) { return JetCoord{Kind::Derivative, alpha, std::move(J)}; }
    static JetCoord dependent(int alpha, std::size_t p) { return dependent(alpha, MultiIndex(p)); }

    bool is_independent() const noexcept { return kind == Kind::Independent; }
    int order() const noexcept { return kind == Kind::Independent ? 0 : J.order(); }

    std::strong_ordering operator<=>(const JetCoord& other) const;
    bool operator==(const JetCoord&) const = default;
};

struct ParamAtom {
    std::string name;
    auto operator<=>(const ParamAtom&) const = default;
    bool operator==(const ParamAtom&) const = default;
};

/// Formal function symbol h(args) carrying a derivative multi-index over its
/// own argument list, e.g. h2_xy(x, y) is {name=h2, args=(x,y), deriv=(1,1)}.
struct FuncAtom {
    std::string name;
    std::vector<JetCoord> args;
    std::vector<int> deriv;
    auto operator<=>(const FuncAtom&) const = default;
    bool operator==(const FuncAtom&) const = default;
};

// Variant index fixes the kind order: parameters < coordinates < functions.
using Atom = std::variant<ParamAtom, JetCoord, FuncAtom>;

struct Factor {
    Atom atom;
    int power = 1;
    auto operator<=>(const Factor&) const = default;
    bool operator==(const Factor&) const = default;
};

/// Sorted by atom, each atom at most once, powers >= 1. Empty = constant 1.
struct Monomial {
    std::vector<Factor> factors;

    int degree() const noexcept;
    Monomial operator*(const Monomial& other) const;
    /// True iff `this` divides `other`.
    bool divides(const Monomial& other) const;

    std::strong_ordering operator<=>(const Monomial& other) const;
    bool operator==(const Monomial&) const = default;
};

class Expr {
  public:
    using Terms = std::map<Monomial, Rational>;

    Expr() = default;
    Expr(long value);  // NOLINT(google-explicit-constructor): literals read naturally
    explicit Expr(Rational value);

    static Expr constant(Rational value) { return Expr(std::move(value)); }
    static Expr param(std::string name);
    static Expr coord(JetCoord c);
    static Expr func(std::string name, std::vector<JetCoord> args, std::vector<int> deriv);
    static Expr atom(Atom a, int power = 1);
    static Expr from_terms(Terms terms);

    const Terms& terms() const noexcept { return terms_; }
    bool is_zero() const noexcept { return terms_.empty(); }
    bool is_constant() const noexcept;
    /// Constant value; throws std::logic_error unless is_constant().
    Rational constant_value() const;

    Expr operator-() const;
    Expr& operator+=(const Expr& other);
    Expr& operator-=(const Expr& other);
    Expr& operator*=(const Expr& other);
    friend Expr operator+(Expr a, const Expr& b) { return a += b; }
    friend Expr operator-(Expr a, const Expr& b) { return a -= b; }
    friend Expr operator*(const Expr& a, const Expr& b);

    bool operator==(const Expr&) const = default;

  private:
    void add_term(const Monomial& m, const Rational& c);
    Terms terms_;
};

Expr pow(const Expr& base, int exponent);

// ---------------------------------------------------------------------------
// Core operations

Expr parse(std::string_view text, const VarSpace& space);
std::string print(const Expr& e, const VarSpace& space);
std::string coord_name(const JetCoord& c, const VarSpace& space);

/// Identity: Exprs are normalized on construction. Kept as a named entry
/// point for callers that want to be explicit.
inline Expr normalize(const Expr& e) { return e; }

/// Total derivative D_i.
Expr total_derivative(const Expr& e, int i);
/// Apply D_J by composing per-axis total derivatives in axis order.
Expr total_derivative(const Expr& e, const MultiIndex& J);

/// Partial derivative with every jet coordinate treated as an independent
/// symbol; formal functions differentiate through their arguments.
Expr partial_wrt(const Expr& e, const JetCoord& c);

/// Formal function instantiation: `name(params...)` := body, with `body`
/// written over the coordinates in `params`.
struct FuncBinding {
    std::string name;
    std::vector<JetCoord> params;
    Expr body;
    bool require_harmonic = false;
};

/// Simultaneous substitution of jet coordinates plus formal function
/// instantiation. Throws std::invalid_argument when a bound coordinate occurs
/// as an argument of a formal function, or when a harmonic-flagged body is
/// not harmonic.
Expr substitute(const Expr& e, const std::map<JetCoord, Expr>& bindings,
                const std::vector<FuncBinding>& funcs = {});

std::set<JetCoord> free_coords(const Expr& e);
int max_order(const Expr& e);

}  // namespace symflow
