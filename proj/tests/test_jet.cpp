#include "random_expr.hpp"
#include "symflow/jet.hpp"

#include <catch_amalgamated.hpp>

using namespace symflow;

namespace {

const VarSpace kBurgers({"x", "t"}, {"u"}, {"nu"});
const VarSpace kDarcy({"x", "y"}, {"u", "k", "f"});

Expr B(const char* s) { return parse(s, kBurgers); }
Expr D(const char* s) { return parse(s, kDarcy); }

JetCoord coord_of(const Expr& e) { return *free_coords(e).begin(); }

std::size_t parse_error_position(const char* text) {
    try {
        B(text);
    } catch (const ParseError& e) {
        return e.position();
    }
    FAIL("expected ParseError for '" << text << "'");
    return 0;
}

}  // namespace

TEST_CASE("VarSpace rejects malformed variable lists", "[jet]") {
    CHECK_THROWS_AS(VarSpace({}, {"u"}), std::invalid_argument);
    CHECK_THROWS_AS(VarSpace({"x"}, {}), std::invalid_argument);
    CHECK_THROWS_AS(VarSpace({"x"}, {"x"}), std::invalid_argument);
    CHECK_THROWS_AS(VarSpace({"x"}, {"u_x"}), std::invalid_argument);
}

TEST_CASE("MultiIndex ordering is graded with earlier axes first", "[jet]") {
    auto all = multi_indices_up_to(2, 2);
    REQUIRE(all.size() == 6);
    CHECK(all[0] == MultiIndex({0, 0}));
    CHECK(all[1] == MultiIndex({1, 0}));
    CHECK(all[2] == MultiIndex({0, 1}));
    CHECK(all[3] == MultiIndex({2, 0}));
    CHECK(all[4] == MultiIndex({1, 1}));
    CHECK(all[5] == MultiIndex({0, 2}));
}

TEST_CASE("parse builds the Burgers residual", "[jet][parse]") {
    Expr delta = B("u_t + u*u_x - nu*u_xx");
    Expr u = Expr::coord(JetCoord::dependent(0, 2));
    Expr ux = Expr::coord(JetCoord::dependent(0, MultiIndex({1, 0})));
    Expr ut = Expr::coord(JetCoord::dependent(0, MultiIndex({0, 1})));
    Expr uxx = Expr::coord(JetCoord::dependent(0, MultiIndex({2, 0})));
    CHECK(delta == ut + u * ux - Expr::param("nu") * uxx);
    CHECK(B("0").is_zero());
    CHECK(B("u_xt") == B("u_tx"));
    CHECK(B("3/2*u - 0.5*u") == B("u"));
    CHECK(B("-u^2") == -(B("u") * B("u")));
    CHECK(B("h1_u(u)") == Expr::func("h1", {JetCoord::dependent(0, 2)}, {1}));
}

TEST_CASE("parse expands the Darcy residual consistently with total derivatives", "[jet][parse]") {
    Expr expanded = D("k_x*u_x + k_y*u_y + k*u_xx + k*u_yy + f");
    Expr u_x = D("u_x"), u_y = D("u_y"), k = D("k");
    Expr via_total = k * total_derivative(u_x, 0) + u_x * total_derivative(k, 0) + k * total_derivative(u_y, 1) +
                     u_y * total_derivative(k, 1) + D("f");
    CHECK(expanded == via_total);
}

TEST_CASE("parse reports errors with positions", "[jet][parse]") {
    CHECK(parse_error_position("u + * u") == 4);
    CHECK(parse_error_position("u + w") == 4);
    CHECK(parse_error_position("x_t") == 0);
    CHECK(parse_error_position("u_z") == 2);
    CHECK(parse_error_position("(u + 1") == 6);
    CHECK(parse_error_position("u^0") == 2);
    CHECK(parse_error_position("u/u") == 2);
    CHECK(parse_error_position("") == 0);
    CHECK_THROWS_AS(B("nu_x"), ParseError);
    CHECK_THROWS_AS(B("u(x)"), ParseError);
    CHECK_THROWS_AS(B("h(x, x)"), ParseError);

    VarSpace clash({"x", "xx"}, {"u"});
    CHECK_NOTHROW(parse("u_x", clash));
    VarSpace dup_letter({"a", "b"}, {"u"});
    CHECK_THROWS_AS(parse("u_c", dup_letter), ParseError);
}

TEST_CASE("normalize cancels and expands", "[jet][normalize]") {
    CHECK((B("u*u_x") - B("u_x*u")).is_zero());
    CHECK(B("(u + u_x)^2") == B("u^2 + 2*u*u_x + u_x^2"));
    CHECK((B("h1(u)*u_t") - B("u_t*h1(u)")).is_zero());
    Expr e = B("(u + x)*(u - x)");
    CHECK(normalize(normalize(e)) == normalize(e));
}

TEST_CASE("total derivative follows chain and Leibniz rules", "[jet][total_derivative]") {
    CHECK(total_derivative(B("u*u_x"), 0) == B("u_x^2 + u*u_xx"));
    Expr delta = B("u_t + u*u_x - nu*u_xx");
    CHECK(total_derivative(delta, 0) == B("u_xt + u_x^2 + u*u_xx - nu*u_xxx"));
    CHECK(total_derivative(B("h1(u)"), 0) == B("h1_u(u)*u_x"));
    CHECK(total_derivative(B("x*t + nu"), 0) == B("t"));
    CHECK(total_derivative(D("h2(x, y)"), 0) == D("h2_x(x, y)"));
    CHECK(total_derivative(D("h2_xy(x, y)"), 1) == D("h2_xyy(x, y)"));
    CHECK(total_derivative(delta, MultiIndex({1, 1})) == total_derivative(total_derivative(delta, 1), 0));
}

TEST_CASE("partial_wrt treats jet coordinates as independent symbols", "[jet][partial]") {
    Expr delta = B("u_t + u*u_x - nu*u_xx");
    CHECK(partial_wrt(delta, coord_of(B("u_x"))) == B("u"));
    CHECK(partial_wrt(delta, coord_of(B("u_xx"))) == B("-nu"));
    CHECK(partial_wrt(B("u_x^2"), coord_of(B("u_x"))) == B("2*u_x"));
    CHECK(partial_wrt(B("u_xx"), coord_of(B("u_x"))).is_zero());
    CHECK(partial_wrt(B("h1(u)^2"), coord_of(B("u"))) == B("2*h1(u)*h1_u(u)"));
}

TEST_CASE("substitute performs simultaneous replacement and function instantiation", "[jet][substitute]") {
    Expr delta = B("u_t + u*u_x - nu*u_xx");
    CHECK(substitute(delta, {{coord_of(B("u_t")), B("nu*u_xx - u*u_x")}}).is_zero());
    // simultaneous: x <-> t swap
    CHECK(substitute(B("x - 2*t"), {{coord_of(B("x")), B("t")}, {coord_of(B("t")), B("x")}}) == B("t - 2*x"));

    const JetCoord x = JetCoord::independent(0), y = JetCoord::independent(1);
    FuncBinding xy{"h2", {x, y}, D("x*y"), true};
    CHECK(substitute(D("2*f*h2_xy(x, y)"), {}, {xy}) == D("2*f"));
    FuncBinding sq{"h2", {x, y}, D("x^2"), true};
    CHECK_THROWS_AS(substitute(D("h2(x, y)"), {}, {sq}), std::invalid_argument);
    sq.require_harmonic = false;
    CHECK(substitute(D("h2_x(x, y)"), {}, {sq}) == D("2*x"));

    FuncBinding h1{"h1", {JetCoord::dependent(0, 2)}, D("u^2"), false};
    CHECK(substitute(D("k*h1_u(u)"), {}, {h1}) == D("2*k*u"));
    CHECK_THROWS_AS(substitute(D("h1(u)"), {{JetCoord::dependent(0, 2), D("k")}}), std::invalid_argument);

    CHECK(substitute(D("k_x*u_x + k_y*u_y + k*u_xx + k*u_yy + f"),
                     {{coord_of(D("k")), D("1")}, {coord_of(D("k_x")), D("0")}, {coord_of(D("k_y")), D("0")}}) ==
          D("u_xx + u_yy + f"));
}

TEST_CASE("free_coords and max_order census", "[jet]") {
    Expr delta = B("u_t + u*u_x - nu*u_xx");
    std::set<JetCoord> expected;
    for (const char* s : {"u", "u_x", "u_t", "u_xx"}) expected.insert(coord_of(B(s)));
    CHECK(free_coords(delta) == expected);
    CHECK(max_order(delta) == 2);
    CHECK(max_order(total_derivative(delta, 0)) == 3);
    CHECK(max_order(B("5")) == 0);
}

TEST_CASE("print emits canonical DSL", "[jet][print]") {
    CHECK(print(B("0"), kBurgers) == "0");
    CHECK(print(B("u_tx"), kBurgers) == "u_xt");
    CHECK(print(B("-3/2*u^2*x"), kBurgers) == "-3/2*x*u^2");
    CHECK(print(D("2*f*h2_xy(x, y)"), kDarcy) == "2*f*h2_xy(x, y)");
}

// ---------------------------------------------------------------------------
// Properties over random polynomials

TEST_CASE("property: parse(print(e)) == e", "[jet][property]") {
    std::mt19937_64 rng(11);
    auto pool = testing::atom_pool(kBurgers, 3);
    pool.push_back(B("h1(u)"));
    pool.push_back(B("h1_uu(u)"));
    pool.push_back(B("g_xt(x, t)"));
    for (int trial = 0; trial < 200; ++trial) {
        Expr e = testing::random_poly(rng, pool, 6, 4);
        INFO(print(e, kBurgers));
        CHECK(parse(print(e, kBurgers), kBurgers) == e);
    }
}

TEST_CASE("property: total derivatives commute and are linear", "[jet][property]") {
    std::mt19937_64 rng(12);
    auto pool = testing::atom_pool(kDarcy, 2);
    pool.push_back(D("h1(u)"));
    pool.push_back(D("h2_x(x, y)"));
    for (int trial = 0; trial < 100; ++trial) {
        Expr e = testing::random_poly(rng, pool, 5, 3);
        Expr g = testing::random_poly(rng, pool, 5, 3);
        CHECK(total_derivative(total_derivative(e, 0), 1) == total_derivative(total_derivative(e, 1), 0));
        Rational a(trial - 50, 7), b(3, trial + 1);
        CHECK(total_derivative(Expr(a) * e + Expr(b) * g, 0) ==
              Expr(a) * total_derivative(e, 0) + Expr(b) * total_derivative(g, 0));
        CHECK((e - normalize(e)).is_zero());
    }
}

TEST_CASE("property: total derivative equals chain rule over jet coordinates", "[jet][property]") {
    std::mt19937_64 rng(13);
    auto pool = testing::atom_pool(kBurgers, 2);
    pool.push_back(B("h1(u)"));
    for (int trial = 0; trial < 100; ++trial) {
        Expr e = testing::random_poly(rng, pool, 5, 3);
        for (int i = 0; i < 2; ++i) {
            Expr chain = partial_wrt(e, JetCoord::independent(i));
            for (const auto& c : free_coords(e)) {
                if (c.is_independent()) continue;
                chain += partial_wrt(e, c) * Expr::coord(JetCoord::dependent(c.index, c.J.plus(i)));
            }
            CHECK(total_derivative(e, i) == chain);
        }
    }
}
