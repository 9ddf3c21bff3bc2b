#include "symflow/symmetry.hpp"

#include <algorithm>
#include <functional>

namespace symflow {

void GeneralizedVectorField::validate() const {
    if (xi.size() != space.p()) throw std::invalid_argument("vector field '" + name + "': xi length mismatch");
    if (phi.size() != space.q()) throw std::invalid_argument("vector field '" + name + "': phi length mismatch");
}

bool GeneralizedVectorField::is_point() const {
    auto order_zero = [](const Expr& e) { return max_order(e) == 0; };
    return std::all_of(xi.begin(), xi.end(), order_zero) && std::all_of(phi.begin(), phi.end(), order_zero);
}

void EvolutionaryField::validate() const {
    if (Q.size() != space.q()) throw std::invalid_argument("evolutionary field '" + name + "': Q length mismatch");
}

GeneralizedVectorField EvolutionaryField::as_generalized() const {
    return GeneralizedVectorField{space, std::vector<Expr>(space.p()), Q, name, harmonic};
}

const GeneralizedVectorField* PDESystem::find_generator(std::string_view label) const {
    for (const auto& g : generators)
        if (g.name == label) return &g;
    return nullptr;
}

EvolutionaryField characteristic(const GeneralizedVectorField& v) {
    v.validate();
    const std::size_t p = v.space.p();
    EvolutionaryField out{v.space, {}, v.name, v.harmonic};
    for (std::size_t a = 0; a < v.space.q(); ++a) {
        Expr q = v.phi[a];
        for (std::size_t i = 0; i < p; ++i)
            q -= v.xi[i] * Expr::coord(JetCoord::dependent(static_cast<int>(a), MultiIndex(p).plus(i)));
        out.Q.push_back(std::move(q));
    }
    return out;
}

namespace {

// Derivative coordinates of F, i.e. the slots d/du^alpha_J that a
// prolongation can hit.
std::vector<JetCoord> derivative_coords(const Expr& F) {
    std::vector<JetCoord> out;
    for (const auto& c : free_coords(F))
        if (!c.is_independent()) out.push_back(c);
    return out;
}

// Memoized D_J applied to a fixed expression, built incrementally.
class TotalDerivativeCache {
  public:
    explicit TotalDerivativeCache(Expr base) { cache_.emplace(MultiIndex{}, std::move(base)); }

    const Expr& get(const MultiIndex& J) {
        MultiIndex key = J.empty() ? MultiIndex{} : J;
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        // Peel one derivative off the last nonzero axis.
        std::size_t axis = J.counts.size();
        while (axis > 0 && J.counts[axis - 1] == 0) --axis;
        MultiIndex parent = J.plus(axis - 1, -1);
        Expr value = total_derivative(get(parent), static_cast<int>(axis - 1));
        return cache_.emplace(std::move(key), std::move(value)).first->second;
    }

  private:
    std::map<MultiIndex, Expr> cache_;
};

}  // namespace

Expr prolong_apply_evolutionary(const EvolutionaryField& field, const Expr& F) {
    field.validate();
    std::vector<TotalDerivativeCache> dq;
    dq.reserve(field.Q.size());
    for (const auto& q : field.Q) dq.emplace_back(q);
    Expr result;
    for (const auto& c : derivative_coords(F)) {
        Expr dF = partial_wrt(F, c);
        if (dF.is_zero()) continue;
        result += dq[static_cast<std::size_t>(c.index)].get(c.J) * dF;
    }
    return result;
}

Expr prolong_apply_point(const GeneralizedVectorField& v, const Expr& F) {
    v.validate();
    const std::size_t p = v.space.p();
    std::vector<TotalDerivativeCache> dxi;
    for (const auto& x : v.xi) dxi.emplace_back(x);

    // phi_alpha^J via phi^{J + e_i} = D_i phi^J - sum_k D_i xi^k * u^alpha_{J + e_k}.
    std::map<JetCoord, Expr> memo;
    std::function<const Expr&(int, const MultiIndex&)> coeff = [&](int alpha, const MultiIndex& J) -> const Expr& {
        JetCoord key = JetCoord::dependent(alpha, J);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        Expr value;
        if (J.order() == 0) {
            value = v.phi[static_cast<std::size_t>(alpha)];
        } else {
            std::size_t i = 0;
            while (J.counts[i] == 0) ++i;
            MultiIndex parent = J.plus(i, -1);
            value = total_derivative(coeff(alpha, parent), static_cast<int>(i));
            MultiIndex e_i(p);
            e_i.counts[i] = 1;
            for (std::size_t k = 0; k < p; ++k) {
                const Expr& d = dxi[k].get(e_i);
                if (d.is_zero()) continue;
                value -= d * Expr::coord(JetCoord::dependent(alpha, parent.plus(k)));
            }
        }
        return memo.emplace(std::move(key), std::move(value)).first->second;
    };

    Expr result;
    for (std::size_t i = 0; i < p; ++i) {
        if (v.xi[i].is_zero()) continue;
        result += v.xi[i] * partial_wrt(F, JetCoord::independent(static_cast<int>(i)));
    }
    for (const auto& c : derivative_coords(F)) {
        Expr dF = partial_wrt(F, c);
        if (dF.is_zero()) continue;
        result += coeff(c.index, c.J) * dF;
    }
    return result;
}

// ---------------------------------------------------------------------------

Expr harmonic_reduce(const Expr& e, const std::vector<std::string>& funcs) {
    if (funcs.empty()) return e;
    Expr result;
    for (const auto& [m, c] : e.terms()) {
        Expr term(c);
        for (const auto& f : m.factors) {
            const auto* fa = std::get_if<FuncAtom>(&f.atom);
            if (!fa || fa->args.size() != 2 || std::find(funcs.begin(), funcs.end(), fa->name) == funcs.end()) {
                term *= Expr::atom(f.atom, f.power);
                continue;
            }
            FuncAtom reduced = *fa;
            long sign = 1;
            while (reduced.deriv[0] >= 2) {
                reduced.deriv[0] -= 2;
                reduced.deriv[1] += 2;
                sign = -sign;
            }
            term *= pow(Expr(sign) * Expr::atom(std::move(reduced)), f.power);
        }
        result += term;
    }
    return result;
}

bool check_harmonic(const Expr& p, const VarSpace& space) {
    for (const auto& [m, c] : p.terms())
        for (const auto& f : m.factors) {
            const auto* jc = std::get_if<JetCoord>(&f.atom);
            if (!jc || !jc->is_independent())
                throw std::invalid_argument("check_harmonic: expected a polynomial in the independent variables");
        }
    Expr lap;
    for (std::size_t i = 0; i < space.p(); ++i) {
        JetCoord x = JetCoord::independent(static_cast<int>(i));
        lap += partial_wrt(partial_wrt(p, x), x);
    }
    return lap.is_zero();
}

// ---------------------------------------------------------------------------

Expr CofactorDecomposition::reconstruct(std::span<const Expr> residuals, const std::vector<std::string>& harmonic) const {
    Expr sum;
    for (const auto& [key, c] : coefficients)
        sum += c * total_derivative(residuals[static_cast<std::size_t>(key.residual)], key.J);
    return harmonic_reduce(sum, harmonic);
}

bool CofactorDecomposition::only_order_zero() const {
    return std::all_of(coefficients.begin(), coefficients.end(),
                       [](const auto& kv) { return kv.first.J.order() == 0; });
}

namespace {

using SparseVec = std::map<int, Rational>;

void axpy(SparseVec& y, const Rational& a, const SparseVec& x) {
    for (const auto& [k, v] : x) {
        auto [it, inserted] = y.try_emplace(k, 0);
        it->second += a * v;
        if (it->second == 0) y.erase(it);
    }
}

struct BasisVector {
    int pivot;
    SparseVec row;   // over monomial rows, row[pivot] == 1
    SparseVec comb;  // over original columns
};

// Reduces v (and its column combination) against the basis in insertion order.
void reduce(SparseVec& v, SparseVec& comb, const std::vector<BasisVector>& basis) {
    for (const auto& b : basis) {
        auto it = v.find(b.pivot);
        if (it == v.end()) continue;
        Rational coef = it->second;
        axpy(v, -coef, b.row);
        axpy(comb, -coef, b.comb);
    }
}

void collect_divisors(const Monomial& m, int max_degree, std::set<Monomial>& out) {
    Monomial cur;
    auto rec = [&](auto&& self, std::size_t k, int degree) -> void {
        if (k == m.factors.size()) {
            out.insert(cur);
            return;
        }
        self(self, k + 1, degree);
        for (int e = 1; e <= m.factors[k].power && degree + e <= max_degree; ++e) {
            cur.factors.push_back(Factor{m.factors[k].atom, e});
            self(self, k + 1, degree + e);
            cur.factors.pop_back();
        }
    };
    rec(rec, 0, 0);
}

}  // namespace

std::optional<CofactorDecomposition> cofactor_decompose(const Expr& target, std::span<const Expr> residuals,
                                                        std::size_t num_independent, const CofactorOptions& opts) {
    if (opts.max_order < 0) throw std::invalid_argument("cofactor_decompose: negative max_order");
    const Expr goal = harmonic_reduce(target, opts.harmonic);
    if (goal.is_zero()) return CofactorDecomposition{};

    const auto Js = multi_indices_up_to(num_independent, opts.max_order);
    std::set<Monomial> divisors;
    for (const auto& [m, c] : goal.terms()) collect_divisors(m, opts.max_degree, divisors);

    const std::size_t unknowns = residuals.size() * Js.size() * divisors.size();
    if (unknowns > opts.max_unknowns)
        throw std::length_error("cofactor_decompose: " + std::to_string(unknowns) + " unknowns exceed the bound of " +
                                std::to_string(opts.max_unknowns));

    struct Column {
        CofactorKey key;
        Monomial multiplier;
    };
    std::vector<Column> columns;
    std::map<Monomial, int> row_of;
    auto row_id = [&](const Monomial& m) {
        return row_of.try_emplace(m, static_cast<int>(row_of.size())).first->second;
    };
    std::vector<BasisVector> basis;

    for (std::size_t r = 0; r < residuals.size(); ++r) {
        for (const auto& J : Js) {
            const Expr dr = harmonic_reduce(total_derivative(residuals[r], J), opts.harmonic);
            if (dr.is_zero()) continue;
            for (const auto& mult : divisors) {
                SparseVec v;
                for (const auto& [m, c] : dr.terms()) v.emplace(row_id(mult * m), c);
                const int col = static_cast<int>(columns.size());
                columns.push_back(Column{CofactorKey{static_cast<int>(r), J}, mult});
                SparseVec comb{{col, Rational(1)}};
                reduce(v, comb, basis);
                if (v.empty()) continue;
                const int pivot = v.begin()->first;
                const Rational inv = Rational(1) / v.begin()->second;
                for (auto& [k, x] : v) x *= inv;
                for (auto& [k, x] : comb) x *= inv;
                basis.push_back(BasisVector{pivot, std::move(v), std::move(comb)});
            }
        }
    }

    SparseVec t;
    for (const auto& [m, c] : goal.terms()) {
        auto it = row_of.find(m);
        if (it == row_of.end()) return std::nullopt;  // no column can produce this monomial
        t.emplace(it->second, c);
    }
    SparseVec comb;
    reduce(t, comb, basis);
    if (!t.empty()) return std::nullopt;

    // goal - sum(comb_j * col_j) == 0, so the coefficients are -comb.
    CofactorDecomposition out;
    for (const auto& [col, a] : comb) {
        Expr::Terms term;
        term.emplace(columns[static_cast<std::size_t>(col)].multiplier, -a);
        auto& slot = out.coefficients[columns[static_cast<std::size_t>(col)].key];
        slot += Expr::from_terms(std::move(term));
    }
    std::erase_if(out.coefficients, [](const auto& kv) { return kv.second.is_zero(); });

    if (!(out.reconstruct(residuals, opts.harmonic) - goal).is_zero())
        throw std::logic_error("cofactor_decompose: reconstruction failed");
    return out;
}

std::optional<CofactorDecomposition> cofactor_decompose(const Expr& target, const PDESystem& pde,
                                                        const CofactorOptions& opts) {
    return cofactor_decompose(target, pde.residuals, pde.space.p(), opts);
}

std::string to_string(SymmetryStatus s) {
    switch (s) {
        case SymmetryStatus::Certified: return "Certified";
        case SymmetryStatus::Refuted: return "Refuted";
        case SymmetryStatus::Inconclusive: return "Inconclusive";
    }
    return "?";
}

namespace {

// A target monomial divisible by no monomial of any D_J[residual] cannot be
// produced by any polynomial cofactor combination at this |J| bound.
bool has_unreachable_monomial(const Expr& target, const PDESystem& pde, const CofactorOptions& opts) {
    std::set<Monomial> generators;
    for (const auto& r : pde.residuals)
        for (const auto& J : multi_indices_up_to(pde.space.p(), opts.max_order)) {
            const Expr d = harmonic_reduce(total_derivative(r, J), opts.harmonic);
            for (const auto& [m, c] : d.terms()) generators.insert(m);
        }
    for (const auto& [m, c] : target.terms()) {
        bool reachable = std::any_of(generators.begin(), generators.end(),
                                     [&m](const Monomial& g) { return g.divides(m); });
        if (!reachable) return true;
    }
    return false;
}

SymmetryReport certify(std::string name, std::vector<Expr> targets, const PDESystem& pde, const CofactorOptions& opts) {
    SymmetryReport report;
    report.field = std::move(name);
    report.status = SymmetryStatus::Certified;
    for (auto& t : targets) {
        t = harmonic_reduce(t, opts.harmonic);
        std::optional<CofactorDecomposition> w;
        try {
            w = cofactor_decompose(t, pde, opts);
        } catch (const std::length_error& e) {
            report.detail = e.what();
        }
        if (!w) {
            if (has_unreachable_monomial(t, pde, opts)) {
                report.status = SymmetryStatus::Refuted;
                report.detail = "target has a monomial that no D_J[residual] monomial divides";
            } else if (report.status != SymmetryStatus::Refuted) {
                report.status = SymmetryStatus::Inconclusive;
            }
        }
        report.witnesses.push_back(std::move(w));
        report.targets.push_back(std::move(t));
    }
    return report;
}

std::vector<std::string> merged(std::vector<std::string> a, const std::vector<std::string>& b) {
    for (const auto& s : b)
        if (std::find(a.begin(), a.end(), s) == a.end()) a.push_back(s);
    return a;
}

}  // namespace

SymmetryReport is_symmetry(const GeneralizedVectorField& v, const PDESystem& pde, CofactorOptions opts) {
    opts.harmonic = merged(opts.harmonic, v.harmonic);
    std::vector<Expr> targets;
    for (const auto& r : pde.residuals) targets.push_back(prolong_apply_point(v, r));
    return certify(v.name, std::move(targets), pde, opts);
}

SymmetryReport is_symmetry(const EvolutionaryField& v, const PDESystem& pde, CofactorOptions opts) {
    opts.harmonic = merged(opts.harmonic, v.harmonic);
    std::vector<Expr> targets;
    for (const auto& r : pde.residuals) targets.push_back(prolong_apply_evolutionary(v, r));
    return certify(v.name, std::move(targets), pde, opts);
}

}  // namespace symflow
