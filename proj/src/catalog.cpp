#include "symflow/catalog.hpp"

namespace symflow {

namespace {

GeneralizedVectorField field(const VarSpace& space, std::string name, const std::vector<std::string>& xi,
                             const std::vector<std::string>& phi) {
    GeneralizedVectorField v{space, {}, {}, std::move(name), {}};
    for (const auto& s : xi) v.xi.push_back(parse(s, space));
    for (const auto& s : phi) v.phi.push_back(parse(s, space));
    v.validate();
    return v;
}

VarSpace darcy_space() { return VarSpace({"x", "y"}, {"u", "k", "f"}); }

}  // namespace

PDESystem burgers(std::optional<double> nu) {
    VarSpace space({"x", "t"}, {"u"}, {"nu"});
    PDESystem pde{"burgers", space, {parse("u_t + u*u_x - nu*u_xx", space)}, {{"nu", nu}}, {}, {}};
    pde.generators = {
        field(space, "v1", {"1", "0"}, {"0"}),
        field(space, "v2", {"0", "1"}, {"0"}),
        field(space, "v3", {"x", "2*t"}, {"-u"}),
        field(space, "v4", {"t", "0"}, {"1"}),
        field(space, "v5", {"t*x", "t^2"}, {"x - t*u"}),
    };
    pde.notes = {"residual: u_t + u*u_x - nu*u_xx on x in [0,1] periodic, t in [0,1]",
                 "generators: translations (v1, v2), scaling (v3), Galilean boost (v4), projective (v5)"};
    return pde;
}

std::vector<GeneralizedVectorField> darcy_generators(const std::optional<Expr>& h1, const std::optional<Expr>& h2) {
    const VarSpace space = darcy_space();
    const JetCoord x = JetCoord::independent(0);
    const JetCoord y = JetCoord::independent(1);
    const JetCoord u = JetCoord::dependent(0, 2);
    const Expr k = Expr::coord(JetCoord::dependent(1, 2));
    const Expr f = Expr::coord(JetCoord::dependent(2, 2));

    GeneralizedVectorField v1{space, {Expr(0L), Expr(0L)}, {}, "v1_inf", {}};
    Expr h1_expr, h1_u;
    if (h1) {
        for (const auto& c : free_coords(*h1))
            if (!(c == u)) throw std::invalid_argument("darcy_generators: h1 must be a function of u only");
        h1_expr = *h1;
        h1_u = partial_wrt(*h1, u);
    } else {
        h1_expr = Expr::func("h1", {u}, {0});
        h1_u = Expr::func("h1", {u}, {1});
    }
    v1.phi = {h1_expr, -k * h1_u, Expr(0L)};

    GeneralizedVectorField v2{space, {}, {}, "v2_inf", {}};
    Expr hx, hy, hxy;
    if (h2) {
        if (!check_harmonic(*h2, space)) throw std::invalid_argument("darcy_generators: h2 is not harmonic");
        hx = partial_wrt(*h2, x);
        hy = partial_wrt(*h2, y);
        hxy = partial_wrt(hx, y);
    } else {
        hx = Expr::func("h2", {x, y}, {1, 0});
        hy = Expr::func("h2", {x, y}, {0, 1});
        hxy = Expr::func("h2", {x, y}, {1, 1});
        v2.harmonic = {"h2"};
    }
    v2.xi = {-hy, -hx};
    v2.phi = {Expr(0L), Expr(0L), Expr(2L) * f * hxy};
    return {v1, v2};
}

std::vector<GeneralizedVectorField> darcy_linear_subalgebra() {
    const VarSpace space = darcy_space();
    std::vector<GeneralizedVectorField> out;
    for (const char* h : {"x", "y"}) {
        auto v = darcy_generators(std::nullopt, parse(h, space))[1];
        v.name = std::string("v2_h=") + h;
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<GeneralizedVectorField> darcy_instantiated_generators() {
    const VarSpace space = darcy_space();
    std::vector<GeneralizedVectorField> out;
    for (const char* h : {"u", "u^2"}) {
        auto v = darcy_generators(parse(h, space), std::nullopt)[0];
        v.name = std::string("v1_inf[h1=") + h + "]";
        out.push_back(std::move(v));
    }
    for (const char* h : {"x", "y", "x*y", "x^2 - y^2"}) {
        auto v = darcy_generators(std::nullopt, parse(h, space))[1];
        v.name = std::string("v2_inf[h2=") + h + "]";
        out.push_back(std::move(v));
    }
    return out;
}

PDESystem darcy() {
    const VarSpace space = darcy_space();
    PDESystem pde{"darcy", space, {parse("k_x*u_x + k_y*u_y + k*u_xx + k*u_yy + f", space)}, {}, {}, {}};
    pde.generators = darcy_generators(std::nullopt, std::nullopt);
    for (auto& v : darcy_linear_subalgebra()) pde.generators.push_back(std::move(v));
    pde.notes = {"residual: div(k grad u) + f stored expanded; data generator discretizes the divergence form",
                 "k and f are dependent jet variables; at training time they are inputs, never outputs",
                 "h2 is constrained harmonic; formal checks rewrite h2_xx -> -h2_yy"};
    return pde;
}

PDESystem pde_by_name(const std::string& name) {
    if (name == "burgers") return burgers();
    if (name == "darcy") return darcy();
    throw std::invalid_argument("unknown PDE '" + name + "' (expected burgers or darcy)");
}

std::map<std::string, std::string> burgers_reference_point_multiples() {
    return {{"v1", "0"}, {"v2", "0"}, {"v3", "3*nu"}, {"v4", "0"}, {"v5", "3*nu*t"}};
}

}  // namespace symflow
