// DSL parser and printer. The grammar is documented in docs/dsl.md; the
// printer emits exactly that grammar so print() output always re-parses.

#include "symflow/jet.hpp"

#include <cctype>
#include <sstream>

namespace symflow {

namespace {

class Parser {
  public:
    Parser(std::string_view text, const VarSpace& space) : text_(text), space_(space) {}

    Expr run() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
        Expr e = expr();
        skip_ws();
        if (pos_ < text_.size()) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
        return e;
    }

  private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) {
            skip_ws();
            throw ParseError(std::string("expected '") + c + "'", pos_);
        }
    }

    Expr expr() {
        Expr e = term();
        for (;;) {
            if (accept('+')) e += term();
            else if (accept('-')) e -= term();
            else return e;
        }
    }

    Expr term() {
        Expr e = factor();
        for (;;) {
            if (accept('*')) {
                e *= factor();
            } else if (accept('/')) {
                std::size_t at = pos_;
                Expr d = factor();
                if (!d.is_constant() || d.is_zero()) throw ParseError("division only by a nonzero constant", at);
                e *= Expr(Rational(1) / d.constant_value());
            } else {
                return e;
            }
        }
    }

    Expr factor() {
        if (accept('-')) return -factor();
        if (accept('+')) return factor();
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) {
            skip_ws();
            std::size_t at = pos_;
            std::string digits;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) digits += text_[pos_++];
            if (digits.empty()) throw ParseError("expected integer exponent", at);
            int n = std::stoi(digits);
            if (n < 1) throw ParseError("exponent must be >= 1", at);
            return pow(base, n);
        }
        return base;
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        throw ParseError(std::string("unexpected '") + c + "'", pos_);
    }

    Expr number() {
        std::string whole, frac;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) whole += text_[pos_++];
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) frac += text_[pos_++];
            if (frac.empty()) throw ParseError("malformed number", pos_);
        }
        Rational value(whole + frac, 10);
        if (!frac.empty()) value /= Rational(mpz_class("1" + std::string(frac.size(), '0')));
        return Expr(value);
    }

    struct Name {
        std::string base;
        std::string suffix;
        bool has_suffix = false;
        std::size_t pos = 0;
        std::size_t suffix_pos = 0;
    };

    Name read_name() {
        Name n;
        n.pos = pos_;
        while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) n.base += text_[pos_++];
        if (pos_ < text_.size() && text_[pos_] == '_') {
            ++pos_;
            n.has_suffix = true;
            n.suffix_pos = pos_;
            while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) n.suffix += text_[pos_++];
            if (n.suffix.empty()) throw ParseError("empty derivative suffix", pos_);
        }
        return n;
    }

    // Resolves each suffix letter against a list of candidate names; only
    // single-character candidates can match a letter.
    std::vector<int> resolve_suffix(const Name& n, const std::vector<std::string>& candidates) {
        std::vector<int> counts(candidates.size(), 0);
        for (std::size_t k = 0; k < n.suffix.size(); ++k) {
            int hit = -1;
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                if (candidates[i].size() == 1 && candidates[i][0] == n.suffix[k]) {
                    if (hit >= 0) throw ParseError(std::string("ambiguous derivative letter '") + n.suffix[k] + "'", n.suffix_pos + k);
                    hit = static_cast<int>(i);
                }
            }
            if (hit < 0)
                throw ParseError(std::string("unknown derivative variable '") + n.suffix[k] + "'", n.suffix_pos + k);
            ++counts[static_cast<std::size_t>(hit)];
        }
        return counts;
    }

    JetCoord resolve_coord(const Name& n) {
        if (auto i = space_.independent_index(n.base)) {
            if (n.has_suffix) throw ParseError("derivative of independent variable '" + n.base + "'", n.pos);
            return JetCoord::independent(*i);
        }
        if (auto a = space_.dependent_index(n.base)) {
            MultiIndex J(space_.p());
            if (n.has_suffix) J.counts = resolve_suffix(n, space_.independent());
            return JetCoord::dependent(*a, std::move(J));
        }
        throw ParseError("unknown identifier '" + n.base + "'", n.pos);
    }

    Expr identifier() {
        Name n = read_name();
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            ++pos_;
            if (space_.independent_index(n.base) || space_.dependent_index(n.base) || space_.is_parameter(n.base))
                throw ParseError("'" + n.base + "' is not a function", n.pos);
            std::vector<JetCoord> args;
            std::vector<std::string> arg_names;
            do {
                skip_ws();
                if (pos_ >= text_.size() || !std::isalpha(static_cast<unsigned char>(text_[pos_])))
                    throw ParseError("expected function argument", pos_);
                Name a = read_name();
                JetCoord c = resolve_coord(a);
                std::string label = a.base + (a.has_suffix ? "_" + a.suffix : "");
                for (const auto& prev : arg_names)
                    if (prev == label) throw ParseError("repeated function argument '" + label + "'", a.pos);
                args.push_back(std::move(c));
                arg_names.push_back(std::move(label));
            } while (accept(','));
            expect(')');
            std::vector<int> deriv(args.size(), 0);
            if (n.has_suffix) deriv = resolve_suffix(n, arg_names);
            return Expr::func(n.base, std::move(args), std::move(deriv));
        }
        if (space_.is_parameter(n.base)) {
            if (n.has_suffix) throw ParseError("derivative of parameter '" + n.base + "'", n.pos);
            return Expr::param(n.base);
        }
        return Expr::coord(resolve_coord(n));
    }

    std::string_view text_;
    const VarSpace& space_;
    std::size_t pos_ = 0;
};

std::string atom_name(const Atom& a, const VarSpace& space) {
    if (const auto* p = std::get_if<ParamAtom>(&a)) return p->name;
    if (const auto* c = std::get_if<JetCoord>(&a)) return coord_name(*c, space);
    const auto& f = std::get<FuncAtom>(a);
    std::string out = f.name;
    std::vector<std::string> names;
    for (const auto& arg : f.args) names.push_back(coord_name(arg, space));
    std::string suffix;
    for (std::size_t k = 0; k < f.deriv.size(); ++k)
        for (int n = 0; n < f.deriv[k]; ++n) suffix += names[k];
    if (!suffix.empty()) out += "_" + suffix;
    out += "(";
    for (std::size_t k = 0; k < names.size(); ++k) out += (k ? ", " : "") + names[k];
    return out + ")";
}

}  // namespace

Expr parse(std::string_view text, const VarSpace& space) { return Parser(text, space).run(); }

std::string coord_name(const JetCoord& c, const VarSpace& space) {
    if (c.is_independent()) return space.independent().at(static_cast<std::size_t>(c.index));
    std::string out = space.dependent().at(static_cast<std::size_t>(c.index));
    if (c.J.order() == 0) return out;
    out += "_";
    for (std::size_t i = 0; i < c.J.counts.size(); ++i)
        for (int n = 0; n < c.J.counts[i]; ++n) out += space.independent().at(i);
    return out;
}

std::string print(const Expr& e, const VarSpace& space) {
    if (e.is_zero()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [m, c] : e.terms()) {
        Rational mag = abs(c);
        bool neg = c < 0;
        if (first) os << (neg ? "-" : "");
        else os << (neg ? " - " : " + ");
        first = false;
        bool unit = (mag == 1);
        if (m.factors.empty()) {
            os << mag.get_str();
            continue;
        }
        if (!unit) os << mag.get_str() << "*";
        for (std::size_t k = 0; k < m.factors.size(); ++k) {
            if (k) os << "*";
            os << atom_name(m.factors[k].atom, space);
            if (m.factors[k].power > 1) os << "^" << m.factors[k].power;
        }
    }
    return os.str();
}

}  // namespace symflow
