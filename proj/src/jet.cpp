#include "symflow/jet.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

namespace symflow {

namespace {

void check_name(const std::string& name) {
    if (name.empty()) throw std::invalid_argument("VarSpace: empty name");
    if (name.find('_') != std::string::npos)
        throw std::invalid_argument("VarSpace: name '" + name + "' must not contain '_'");
    if (!(std::isalpha(static_cast<unsigned char>(name[0]))))
        throw std::invalid_argument("VarSpace: name '" + name + "' must start with a letter");
    for (char ch : name)
        if (!std::isalnum(static_cast<unsigned char>(ch)))
            throw std::invalid_argument("VarSpace: name '" + name + "' must be alphanumeric");
}

std::optional<int> find_index(const std::vector<std::string>& names, std::string_view name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<int>(it - names.begin());
}

}  // namespace

VarSpace::VarSpace(std::vector<std::string> independent, std::vector<std::string> dependent,
                   std::vector<std::string> parameters)
    : independent_(std::move(independent)), dependent_(std::move(dependent)), parameters_(std::move(parameters)) {
    if (independent_.empty()) throw std::invalid_argument("VarSpace: no independent variables");
    if (dependent_.empty()) throw std::invalid_argument("VarSpace: no dependent variables");
    std::set<std::string> seen;
    for (const auto* list : {&independent_, &dependent_, &parameters_}) {
        for (const auto& n : *list) {
            check_name(n);
            if (!seen.insert(n).second) throw std::invalid_argument("VarSpace: duplicate name '" + n + "'");
        }
    }
}

std::optional<int> VarSpace::independent_index(std::string_view name) const { return find_index(independent_, name); }
std::optional<int> VarSpace::dependent_index(std::string_view name) const { return find_index(dependent_, name); }
bool VarSpace::is_parameter(std::string_view name) const { return find_index(parameters_, name).has_value(); }

// ---------------------------------------------------------------------------

int MultiIndex::order() const noexcept { return std::accumulate(counts.begin(), counts.end(), 0); }

MultiIndex MultiIndex::plus(std::size_t axis, int n) const {
    MultiIndex r = *this;
    if (axis >= r.counts.size()) throw std::out_of_range("MultiIndex::plus: axis out of range");
    r.counts[axis] += n;
    return r;
}

std::strong_ordering MultiIndex::operator<=>(const MultiIndex& other) const {
    if (auto c = order() <=> other.order(); c != 0) return c;
    // Higher count on an earlier axis sorts first: (1,0) < (0,1).
    for (std::size_t i = 0; i < std::min(counts.size(), other.counts.size()); ++i)
        if (counts[i] != other.counts[i]) return other.counts[i] <=> counts[i];
    return counts.size() <=> other.counts.size();
}

std::vector<MultiIndex> multi_indices_up_to(std::size_t p, int max_order) {
    std::vector<MultiIndex> out;
    MultiIndex cur(p);
    // Odometer over all count vectors with total <= max_order.
    auto rec = [&](auto&& self, std::size_t axis, int remaining) -> void {
        if (axis == p) {
            out.push_back(cur);
            return;
        }
        for (int k = 0; k <= remaining; ++k) {
            cur.counts[axis] = k;
            self(self, axis + 1, remaining - k);
        }
        cur.counts[axis] = 0;
    };
    rec(rec, 0, max_order);
    std::sort(out.begin(), out.end());
    return out;
}

std::strong_ordering JetCoord::operator<=>(const JetCoord& other) const {
    if (auto c = kind <=> other.kind; c != 0) return c;
    if (kind == Kind::Independent) return index <=> other.index;
    if (auto c = index <=> other.index; c != 0) return c;
    return J <=> other.J;
}

// ---------------------------------------------------------------------------

int Monomial::degree() const noexcept {
    int d = 0;
    for (const auto& f : factors) d += f.power;
    return d;
}

Monomial Monomial::operator*(const Monomial& other) const {
    Monomial r;
    r.factors.reserve(factors.size() + other.factors.size());
    auto a = factors.begin();
    auto b = other.factors.begin();
    while (a != factors.end() || b != other.factors.end()) {
        if (b == other.factors.end() || (a != factors.end() && a->atom < b->atom)) {
            r.factors.push_back(*a++);
        } else if (a == factors.end() || b->atom < a->atom) {
            r.factors.push_back(*b++);
        } else {
            r.factors.push_back(Factor{a->atom, a->power + b->power});
            ++a;
            ++b;
        }
    }
    return r;
}

bool Monomial::divides(const Monomial& other) const {
    auto b = other.factors.begin();
    for (const auto& f : factors) {
        while (b != other.factors.end() && b->atom < f.atom) ++b;
        if (b == other.factors.end() || !(b->atom == f.atom) || b->power < f.power) return false;
    }
    return true;
}

std::strong_ordering Monomial::operator<=>(const Monomial& other) const {
    if (auto c = degree() <=> other.degree(); c != 0) return c;
    return factors <=> other.factors;
}

// ---------------------------------------------------------------------------

Expr::Expr(long value) : Expr(Rational(value)) {}

Expr::Expr(Rational value) {
    value.canonicalize();
    if (value != 0) terms_.emplace(Monomial{}, std::move(value));
}

Expr Expr::param(std::string name) { return atom(ParamAtom{std::move(name)}); }
Expr Expr::coord(JetCoord c) { return atom(std::move(c)); }

Expr Expr::func(std::string name, std::vector<JetCoord> args, std::vector<int> deriv) {
    if (deriv.empty()) deriv.assign(args.size(), 0);
    if (deriv.size() != args.size()) throw std::invalid_argument("Expr::func: derivative index length mismatch");
    return atom(FuncAtom{std::move(name), std::move(args), std::move(deriv)});
}

Expr Expr::atom(Atom a, int power) {
    if (power < 0) throw std::invalid_argument("Expr::atom: negative power");
    Expr e;
    Monomial m;
    if (power > 0) m.factors.push_back(Factor{std::move(a), power});
    e.terms_.emplace(std::move(m), Rational(1));
    return e;
}

Expr Expr::from_terms(Terms terms) {
    Expr e;
    for (auto& [m, c] : terms) e.add_term(m, c);
    return e;
}

bool Expr::is_constant() const noexcept {
    return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.factors.empty());
}

Rational Expr::constant_value() const {
    if (!is_constant()) throw std::logic_error("Expr::constant_value: expression is not constant");
    return terms_.empty() ? Rational(0) : terms_.begin()->second;
}

void Expr::add_term(const Monomial& m, const Rational& c) {
    if (c == 0) return;
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0) terms_.erase(it);
    }
}

Expr Expr::operator-() const {
    Expr r = *this;
    for (auto& [m, c] : r.terms_) c = -c;
    return r;
}

Expr& Expr::operator+=(const Expr& other) {
    for (const auto& [m, c] : other.terms_) add_term(m, c);
    return *this;
}

Expr& Expr::operator-=(const Expr& other) {
    for (const auto& [m, c] : other.terms_) add_term(m, -c);
    return *this;
}

Expr operator*(const Expr& a, const Expr& b) {
    Expr r;
    for (const auto& [ma, ca] : a.terms_)
        for (const auto& [mb, cb] : b.terms_) r.add_term(ma * mb, ca * cb);
    return r;
}

Expr& Expr::operator*=(const Expr& other) { return *this = *this * other; }

Expr pow(const Expr& base, int exponent) {
    if (exponent < 0) throw std::invalid_argument("pow: negative exponent");
    Expr result(1L);
    Expr b = base;
    while (exponent > 0) {
        if (exponent & 1) result *= b;
        exponent >>= 1;
        if (exponent) b *= b;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Differentiation

namespace {

Expr total_derivative_of_coord(const JetCoord& c, int i) {
    if (c.is_independent()) return Expr(c.index == i ? 1L : 0L);
    return Expr::coord(JetCoord::dependent(c.index, c.J.plus(static_cast<std::size_t>(i))));
}

Expr total_derivative_of_atom(const Atom& a, int i) {
    if (std::holds_alternative<ParamAtom>(a)) return Expr(0L);
    if (const auto* c = std::get_if<JetCoord>(&a)) return total_derivative_of_coord(*c, i);
    const auto& f = std::get<FuncAtom>(a);
    Expr r;
    for (std::size_t k = 0; k < f.args.size(); ++k) {
        Expr inner = total_derivative_of_coord(f.args[k], i);
        if (inner.is_zero()) continue;
        FuncAtom df = f;
        df.deriv[k] += 1;
        r += Expr::atom(std::move(df)) * inner;
    }
    return r;
}

Expr partial_of_atom(const Atom& a, const JetCoord& c) {
    if (std::holds_alternative<ParamAtom>(a)) return Expr(0L);
    if (const auto* x = std::get_if<JetCoord>(&a)) return Expr(*x == c ? 1L : 0L);
    const auto& f = std::get<FuncAtom>(a);
    Expr r;
    for (std::size_t k = 0; k < f.args.size(); ++k) {
        if (!(f.args[k] == c)) continue;
        FuncAtom df = f;
        df.deriv[k] += 1;
        r += Expr::atom(std::move(df));
    }
    return r;
}

// Product rule over a monomial given a per-atom derivative.
template <typename AtomDerivative>
Expr differentiate(const Expr& e, AtomDerivative&& d_atom) {
    Expr result;
    for (const auto& [m, c] : e.terms()) {
        for (std::size_t k = 0; k < m.factors.size(); ++k) {
            Expr da = d_atom(m.factors[k].atom);
            if (da.is_zero()) continue;
            Monomial rest;
            for (std::size_t j = 0; j < m.factors.size(); ++j) {
                if (j == k) {
                    if (m.factors[j].power > 1) rest.factors.push_back(Factor{m.factors[j].atom, m.factors[j].power - 1});
                } else {
                    rest.factors.push_back(m.factors[j]);
                }
            }
            Expr::Terms t;
            t.emplace(std::move(rest), c * m.factors[k].power);
            result += Expr::from_terms(std::move(t)) * da;
        }
    }
    return result;
}

}  // namespace

Expr total_derivative(const Expr& e, int i) {
    return differentiate(e, [i](const Atom& a) { return total_derivative_of_atom(a, i); });
}

Expr total_derivative(const Expr& e, const MultiIndex& J) {
    Expr r = e;
    for (std::size_t axis = 0; axis < J.counts.size(); ++axis)
        for (int k = 0; k < J.counts[axis]; ++k) r = total_derivative(r, static_cast<int>(axis));
    return r;
}

Expr partial_wrt(const Expr& e, const JetCoord& c) {
    return differentiate(e, [&c](const Atom& a) { return partial_of_atom(a, c); });
}

// ---------------------------------------------------------------------------

namespace {

bool body_is_harmonic(const FuncBinding& b) {
    Expr lap;
    for (const auto& p : b.params) lap += partial_wrt(partial_wrt(b.body, p), p);
    return lap.is_zero();
}

}  // namespace

Expr substitute(const Expr& e, const std::map<JetCoord, Expr>& bindings, const std::vector<FuncBinding>& funcs) {
    std::map<std::string, const FuncBinding*> by_name;
    for (const auto& fb : funcs) {
        if (fb.require_harmonic && !body_is_harmonic(fb))
            throw std::invalid_argument("substitute: binding for '" + fb.name + "' is not harmonic");
        by_name[fb.name] = &fb;
    }

    auto atom_value = [&](const Atom& a) -> Expr {
        if (const auto* c = std::get_if<JetCoord>(&a)) {
            auto it = bindings.find(*c);
            return it == bindings.end() ? Expr::atom(a) : it->second;
        }
        if (const auto* f = std::get_if<FuncAtom>(&a)) {
            for (const auto& arg : f->args)
                if (bindings.count(arg))
                    throw std::invalid_argument("substitute: bound coordinate appears inside formal function '" +
                                                f->name + "'");
            auto it = by_name.find(f->name);
            if (it == by_name.end()) return Expr::atom(a);
            const FuncBinding& fb = *it->second;
            if (fb.params.size() != f->args.size())
                throw std::invalid_argument("substitute: arity mismatch for '" + f->name + "'");
            Expr body = fb.body;
            for (std::size_t k = 0; k < f->deriv.size(); ++k)
                for (int n = 0; n < f->deriv[k]; ++n) body = partial_wrt(body, fb.params[k]);
            std::map<JetCoord, Expr> rename;
            for (std::size_t k = 0; k < fb.params.size(); ++k)
                if (!(fb.params[k] == f->args[k])) rename.emplace(fb.params[k], Expr::coord(f->args[k]));
            return rename.empty() ? body : substitute(body, rename);
        }
        return Expr::atom(a);
    };

    Expr result;
    for (const auto& [m, c] : e.terms()) {
        Expr term(c);
        for (const auto& f : m.factors) term *= pow(atom_value(f.atom), f.power);
        result += term;
    }
    return result;
}

std::set<JetCoord> free_coords(const Expr& e) {
    std::set<JetCoord> out;
    for (const auto& [m, c] : e.terms()) {
        for (const auto& f : m.factors) {
            if (const auto* jc = std::get_if<JetCoord>(&f.atom)) out.insert(*jc);
            else if (const auto* fa = std::get_if<FuncAtom>(&f.atom)) out.insert(fa->args.begin(), fa->args.end());
        }
    }
    return out;
}

int max_order(const Expr& e) {
    int best = 0;
    for (const auto& c : free_coords(e)) best = std::max(best, c.order());
    return best;
}

}  // namespace symflow
