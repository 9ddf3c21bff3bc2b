#include "random_expr.hpp"
#include "symflow/catalog.hpp"
#include "symflow/symmetry.hpp"

#include <catch_amalgamated.hpp>

using namespace symflow;

namespace {

const PDESystem kBurgers = burgers();
const VarSpace& bs = kBurgers.space;
const Expr& kDeltaB = kBurgers.residuals[0];

Expr B(const char* s) { return parse(s, bs); }
Expr Dx(const Expr& e) { return total_derivative(e, 0); }
Expr Dt(const Expr& e) { return total_derivative(e, 1); }

const GeneralizedVectorField& gen(const PDESystem& pde, const char* name) {
    const auto* g = pde.find_generator(name);
    REQUIRE(g != nullptr);
    return *g;
}

EvolutionaryField evolutionary(const VarSpace& space, std::vector<Expr> Q) { return EvolutionaryField{space, std::move(Q), "Q", {}}; }

}  // namespace

TEST_CASE("characteristic subtracts xi times first derivatives", "[symmetry][characteristic]") {
    CHECK(characteristic(gen(kBurgers, "v1")).Q[0] == B("-u_x"));
    CHECK(characteristic(gen(kBurgers, "v4")).Q[0] == B("1 - t*u_x"));
    GeneralizedVectorField already{bs, {Expr(0L), Expr(0L)}, {B("u_x")}, "w", {}};
    CHECK(characteristic(already).Q[0] == B("u_x"));
    GeneralizedVectorField bad{bs, {Expr(0L)}, {B("u")}, "bad", {}};
    CHECK_THROWS_AS(characteristic(bad), std::invalid_argument);
}

TEST_CASE("evolutionary prolongation on the Burgers residual", "[symmetry][prolong]") {
    CHECK(prolong_apply_evolutionary(evolutionary(bs, {B("u_x")}), kDeltaB) == Dx(kDeltaB));
    CHECK(prolong_apply_evolutionary(characteristic(gen(kBurgers, "v1")), kDeltaB) == -Dx(kDeltaB));
    CHECK(prolong_apply_evolutionary(evolutionary(bs, {Expr(0L)}), kDeltaB).is_zero());
}

TEST_CASE("point prolongation on the Burgers residual", "[symmetry][prolong]") {
    CHECK(prolong_apply_point(gen(kBurgers, "v1"), kDeltaB).is_zero());
    CHECK(prolong_apply_point(gen(kBurgers, "v4"), kDeltaB).is_zero());

    // Oracle for v3: evolutionary action plus xi . D F, expanded by hand as
    // -(3 + x D_x + 2t D_t) Delta + x D_x Delta + 2t D_t Delta = -3 Delta.
    Expr v3 = prolong_apply_point(gen(kBurgers, "v3"), kDeltaB);
    CHECK(v3 == Expr(-3L) * kDeltaB);
    CHECK(prolong_apply_point(gen(kBurgers, "v5"), kDeltaB) == B("-3*t") * kDeltaB);

    // pr d_u [Delta] = dDelta/du = u_x
    GeneralizedVectorField du{bs, {Expr(0L), Expr(0L)}, {Expr(1L)}, "w", {}};
    CHECK(prolong_apply_point(du, kDeltaB) == B("u_x"));
}

TEST_CASE("cofactor decomposition examples", "[symmetry][cofactor]") {
    CofactorOptions opts;
    auto minus_dx = cofactor_decompose(-Dx(kDeltaB), kBurgers, opts);
    REQUIRE(minus_dx);
    REQUIRE(minus_dx->coefficients.size() == 1);
    CHECK(minus_dx->coefficients.at(CofactorKey{0, MultiIndex({1, 0})}) == Expr(-1L));

    Expr target = -(Expr(3L) * kDeltaB + B("x") * Dx(kDeltaB) + B("2*t") * Dt(kDeltaB));
    auto scaling = cofactor_decompose(target, kBurgers, opts);
    REQUIRE(scaling);
    CHECK(scaling->coefficients.size() == 3);
    CHECK(scaling->coefficients.at(CofactorKey{0, MultiIndex({0, 0})}) == Expr(-3L));
    CHECK(scaling->coefficients.at(CofactorKey{0, MultiIndex({1, 0})}) == B("-x"));
    CHECK(scaling->coefficients.at(CofactorKey{0, MultiIndex({0, 1})}) == B("-2*t"));

    for (int order = 0; order <= 2; ++order) {
        opts.max_order = order;
        CHECK_FALSE(cofactor_decompose(B("u_x"), kBurgers, opts));
    }

    CHECK(cofactor_decompose(Expr(0L), kBurgers, {})->coefficients.empty());
    CofactorOptions tiny;
    tiny.max_unknowns = 3;
    CHECK_THROWS_AS(cofactor_decompose(target, kBurgers, tiny), std::length_error);
    CofactorOptions negative;
    negative.max_order = -1;
    CHECK_THROWS_AS(cofactor_decompose(target, kBurgers, negative), std::invalid_argument);
}

TEST_CASE("is_symmetry certifies the Burgers algebra and refutes d_u", "[symmetry][verify]") {
    for (const auto& g : kBurgers.generators) {
        auto report = is_symmetry(g, kBurgers);
        INFO(g.name);
        CHECK(report.status == SymmetryStatus::Certified);
        auto evo = is_symmetry(characteristic(g), kBurgers);
        CHECK(evo.status == SymmetryStatus::Certified);
    }
    GeneralizedVectorField du{bs, {Expr(0L), Expr(0L)}, {Expr(1L)}, "w", {}};
    auto report = is_symmetry(du, kBurgers);
    CHECK(report.status == SymmetryStatus::Refuted);
    CHECK(report.targets[0] == B("u_x"));
    CHECK_FALSE(report.witnesses[0]);

    GeneralizedVectorField zero{bs, {Expr(0L), Expr(0L)}, {Expr(0L)}, "z", {}};
    CHECK(is_symmetry(zero, kBurgers).status == SymmetryStatus::Certified);

    // Q = u_x*u_t is not a symmetry, but every target monomial divides some
    // monomial of a D_J Delta, so the search cannot refute it.
    auto report_far = is_symmetry(evolutionary(bs, {B("u_x*u_t")}), kBurgers);
    CHECK(report_far.status == SymmetryStatus::Inconclusive);
}

TEST_CASE("check_harmonic", "[symmetry][harmonic]") {
    const VarSpace ds = darcy().space;
    CHECK(check_harmonic(parse("x*y", ds), ds));
    CHECK(check_harmonic(parse("x^2 - y^2", ds), ds));
    CHECK_FALSE(check_harmonic(parse("x^2", ds), ds));
    CHECK_THROWS_AS(check_harmonic(parse("u*x", ds), ds), std::invalid_argument);
    CHECK_THROWS_AS(check_harmonic(parse("h(x, y)", ds), ds), std::invalid_argument);
}

TEST_CASE("harmonic_reduce eliminates second x derivatives", "[symmetry][harmonic]") {
    const VarSpace ds = darcy().space;
    CHECK(harmonic_reduce(parse("h2_xx(x, y)", ds), {"h2"}) == parse("-h2_yy(x, y)", ds));
    CHECK(harmonic_reduce(parse("h2_xxxy(x, y)^2", ds), {"h2"}) == parse("h2_xyyy(x, y)^2", ds));
    CHECK(harmonic_reduce(parse("h2_xx(x, y) + h2_yy(x, y)", ds), {"h2"}).is_zero());
    CHECK(harmonic_reduce(parse("g_xx(x, y)", ds), {"h2"}) == parse("g_xx(x, y)", ds));
}

TEST_CASE("Darcy formal generators act as documented", "[symmetry][darcy]") {
    const PDESystem pde = darcy();
    const VarSpace& ds = pde.space;
    const Expr& delta = pde.residuals[0];
    auto D = [&](const char* s) { return parse(s, ds); };

    const auto& v1 = gen(pde, "v1_inf");
    CHECK(prolong_apply_evolutionary(characteristic(v1), delta).is_zero());
    CHECK(prolong_apply_point(v1, delta).is_zero());

    const auto& v2 = gen(pde, "v2_inf");
    Expr evo = harmonic_reduce(prolong_apply_evolutionary(characteristic(v2), delta), {"h2"});
    Expr expected = total_derivative(D("h2_y(x, y)") * delta, 0) + total_derivative(D("h2_x(x, y)") * delta, 1);
    CHECK(evo == harmonic_reduce(expected, {"h2"}));
    Expr point = harmonic_reduce(prolong_apply_point(v2, delta), {"h2"});
    CHECK(point == D("2*h2_xy(x, y)") * delta);

    auto report = is_symmetry(v2, pde);
    CHECK(report.status == SymmetryStatus::Certified);
    REQUIRE(report.witnesses[0]);
    CHECK(report.witnesses[0]->only_order_zero());
}

// ---------------------------------------------------------------------------

TEST_CASE("property: point action = evolutionary action + xi . D F for random fields", "[symmetry][property]") {
    std::mt19937_64 rng(21);
    for (const auto& pde : {burgers(), darcy()}) {
        auto pool = testing::atom_pool(pde.space, 1);
        for (int trial = 0; trial < 30; ++trial) {
            GeneralizedVectorField v{pde.space, {}, {}, "rand", {}};
            for (std::size_t i = 0; i < pde.space.p(); ++i) v.xi.push_back(testing::random_poly(rng, pool, 3, 2));
            for (std::size_t a = 0; a < pde.space.q(); ++a) v.phi.push_back(testing::random_poly(rng, pool, 3, 2));
            const Expr& F = pde.residuals[0];
            Expr rhs = prolong_apply_evolutionary(characteristic(v), F);
            for (std::size_t i = 0; i < pde.space.p(); ++i) rhs += v.xi[i] * total_derivative(F, static_cast<int>(i));
            CHECK((prolong_apply_point(v, F) - rhs).is_zero());
        }
    }
}

TEST_CASE("property: the characteristic of an evolutionary field is itself", "[symmetry][property]") {
    std::mt19937_64 rng(22);
    auto pool = testing::atom_pool(bs, 2);
    for (int trial = 0; trial < 30; ++trial) {
        EvolutionaryField q = evolutionary(bs, {testing::random_poly(rng, pool, 4, 3)});
        CHECK(characteristic(q.as_generalized()).Q == q.Q);
    }
}

TEST_CASE("property: returned cofactors reconstruct their targets", "[symmetry][property]") {
    std::mt19937_64 rng(23);
    auto pool = testing::atom_pool(bs, 1);
    auto Js = multi_indices_up_to(2, 2);
    std::uniform_int_distribution<std::size_t> pickJ(0, Js.size() - 1);
    for (int trial = 0; trial < 20; ++trial) {
        Expr target;
        for (int k = 0; k < 2; ++k)
            target += testing::random_poly(rng, pool, 2, 1) * total_derivative(kDeltaB, Js[pickJ(rng)]);
        auto w = cofactor_decompose(target, kBurgers, {});
        if (!w) continue;
        CHECK((w->reconstruct(kBurgers.residuals) - target).is_zero());
    }
}
