// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `acceptance [N ...]` runs only the listed criteria.

#include "random_expr.hpp"
#include "symflow/catalog.hpp"
#include "symflow/config.hpp"
#include "symflow/datasets.hpp"
#include "symflow/grid.hpp"
#include "symflow/operator_net.hpp"
#include "symflow/symmetry.hpp"
#include "symflow/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace symflow;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Failure messages of one criterion; empty means PASS.
struct Verdict {
    std::vector<std::string> failures;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

double wall_seconds() {
    using clock = std::chrono::steady_clock;
    static const auto start = clock::now();
    return std::chrono::duration<double>(clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Desk runs shared by criteria 7-9, memoized with their CPU cost.

struct Cell {
    ExperimentResult result;
    double cpu = 0.0;
};

std::string cell_key(const ExperimentConfig& c) { return c.to_json().dump(); }

const Cell& desk_run(const ExperimentConfig& cfg) {
    static std::map<std::string, Cell> cache;
    const std::string key = cell_key(cfg);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const double t0 = cpu_seconds();
    ExperimentResult r = run_experiment(cfg);
    const double cpu = cpu_seconds() - t0;
    std::cerr << "  [" << cfg.pde << " " << to_string(cfg.loss.method) << " seed " << cfg.data_seed << "] "
              << fmt(cpu, 3) << " cpu-s\n";
    return cache.emplace(key, Cell{std::move(r), cpu}).first->second;
}

ExperimentConfig desk(const std::string& pde, Method m, std::uint64_t seed) {
    ExperimentConfig c = ExperimentConfig::desk(pde, m);
    c.data_seed = seed;
    c.train.seed = seed;
    return c;
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
    Verdict v;
    const double t0 = wall_seconds();
    const PDESystem pde = burgers();
    const VarSpace& s = pde.space;
    const Expr& delta = pde.residuals[0];
    const Expr Dx = total_derivative(delta, 0), Dt = total_derivative(delta, 1);
    const Expr x = parse("x", s), t = parse("t", s);

    const std::map<std::string, std::pair<std::string, Expr>> expected{
        {"v1", {"-u_x", -Dx}},
        {"v2", {"-u_t", -Dt}},
        {"v3", {"-(u + x*u_x + 2*t*u_t)", -(Expr(3L) * delta + x * Dx + Expr(2L) * t * Dt)}},
        {"v4", {"-(t*u_x - 1)", -(t * Dx)}},
        {"v5", {"x - t*u - t*x*u_x - t^2*u_t", -(t * (Expr(3L) * delta + x * Dx + t * Dt))}},
    };
    v.check(pde.generators.size() == 5, "Burgers catalog must hold five generators");
    for (const auto& g : pde.generators) {
        const auto& [q, action] = expected.at(g.name);
        const EvolutionaryField ev = characteristic(g);
        v.check(ev.Q[0] == parse(q, s), g.name + ": characteristic differs from " + q);
        const Expr diff = normalize(prolong_apply_evolutionary(ev, delta) - action);
        v.check(diff.is_zero(), g.name + ": evolutionary action minus expected form = " + print(diff, s));
    }
    for (const char* name : {"v1", "v2", "v4"}) {
        const Expr a = prolong_apply_point(*pde.find_generator(name), delta);
        v.check(a.is_zero(), std::string(name) + ": point action is " + print(a, s));
    }
    for (const char* name : {"v3", "v5"}) {
        const Expr a = prolong_apply_point(*pde.find_generator(name), delta);
        const auto w = cofactor_decompose(a, pde, {});
        v.check(w && w->only_order_zero() && w->coefficients.size() == 1,
                std::string(name) + ": point action is not a pure multiple of the residual");
        if (w && !w->coefficients.empty())
            v.note(std::string(name) + " point = (" + print(w->coefficients.begin()->second, s) + ")*R");
    }
    const double dt = wall_seconds() - t0;
    v.check(dt < 5.0, "runtime " + fmt(dt) + " s >= 5 s");
    return v;
}

Verdict criterion2() {
    Verdict v;
    const double t0 = wall_seconds();
    const PDESystem pde = darcy();
    const VarSpace& s = pde.space;
    const Expr& delta = pde.residuals[0];
    const auto gen = [&](const char* name) -> const GeneralizedVectorField& { return *pde.find_generator(name); };

    const Expr a1 = prolong_apply_evolutionary(characteristic(gen("v1_inf")), delta);
    v.check(a1.is_zero(), "v1_inf: evolutionary action is " + print(a1, s));

    const Expr a2 = harmonic_reduce(prolong_apply_evolutionary(characteristic(gen("v2_inf")), delta), {"h2"});
    const Expr expected2 = harmonic_reduce(total_derivative(parse("h2_y(x, y)", s) * delta, 0) +
                                              total_derivative(parse("h2_x(x, y)", s) * delta, 1),
                                          {"h2"});
    v.check((a2 - expected2).is_zero(), "v2_inf: evolutionary action differs by " + print(a2 - expected2, s));

    const auto linear = darcy_linear_subalgebra();
    const Expr expected[2] = {total_derivative(delta, 1), total_derivative(delta, 0)};
    for (std::size_t i = 0; i < 2; ++i) {
        const Expr evo = prolong_apply_evolutionary(characteristic(linear[i]), delta);
        v.check((evo - expected[i]).is_zero(), linear[i].name + ": evolutionary action is " + print(evo, s));
        const Expr point = prolong_apply_point(linear[i], delta);
        v.check(point.is_zero(), linear[i].name + ": point action is " + print(point, s));
    }
    const double dt = wall_seconds() - t0;
    v.check(dt < 5.0, "runtime " + fmt(dt) + " s >= 5 s");
    return v;
}

// point action == evolutionary action of the characteristic + xi . D F
bool point_decomposes(const GeneralizedVectorField& g, const PDESystem& pde) {
    const Expr& F = pde.residuals[0];
    Expr rhs = prolong_apply_evolutionary(characteristic(g), F);
    for (std::size_t i = 0; i < pde.space.p(); ++i) rhs += g.xi[i] * total_derivative(F, static_cast<int>(i));
    return (prolong_apply_point(g, F) - rhs).is_zero();
}

Verdict criterion3() {
    Verdict v;
    std::size_t catalog = 0;
    std::mt19937_64 rng(2024);
    for (const PDESystem& pde : {burgers(), darcy()}) {
        for (const auto& g : pde.generators) {
            ++catalog;
            v.check(point_decomposes(g, pde), pde.name + " " + g.name + ": decomposition fails");
        }
        const auto pool = testing::atom_pool(pde.space, 1);
        int failures = 0;
        for (int trial = 0; trial < 100; ++trial) {
            GeneralizedVectorField g{pde.space, {}, {}, "random", {}};
            for (std::size_t i = 0; i < pde.space.p(); ++i) g.xi.push_back(testing::random_poly(rng, pool, 3, 2));
            for (std::size_t a = 0; a < pde.space.q(); ++a) g.phi.push_back(testing::random_poly(rng, pool, 3, 2));
            failures += point_decomposes(g, pde) ? 0 : 1;
        }
        v.check(failures == 0, pde.name + ": " + std::to_string(failures) + "/100 random fields fail");
    }
    v.check(catalog == 9, "catalog holds " + std::to_string(catalog) + " generators, expected 9");
    v.note(std::to_string(catalog) + " catalog + 200 random fields");
    return v;
}

template <class F>
GridField tabulate(const Grid& g, F f) {
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = g.axis(0).coordinate(static_cast<int>(i / g.stride(0)));
        const double y = g.axis(1).coordinate(static_cast<int>(i % g.stride(0)));
        out[i] = f(x, y);
    }
    return GridField(g, std::move(out));
}

struct Channel {
    const char* expr;
    std::function<double(double, double)> exact;
};

// max error of a derivative channel of u = sin(2 pi x) cos(2 pi y)
double channel_error(const Channel& ch, int n, AxisScheme scheme, bool periodic) {
    static const VarSpace s({"x", "y"}, {"u"});
    const Grid g({Axis::unit("x", n, periodic), Axis::unit("y", n, periodic)});
    const CompiledExpr c(parse(ch.expr, s), g, DiffScheme::uniform(2, scheme), s, {});
    const auto u = tabulate(g, [](double x, double y) { return std::sin(2 * kPi * x) * std::cos(2 * kPi * y); });
    const auto got = c.eval({{"u", u}});
    const auto want = tabulate(g, ch.exact);
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m = std::max(m, std::abs(got[i] - want[i]));
    return m;
}

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Verdict criterion4() {
    Verdict v;
    const double k = 2 * kPi;
    const std::vector<Channel> channels{
        {"u_x", [k](double x, double y) { return k * std::cos(k * x) * std::cos(k * y); }},
        {"u_y", [k](double x, double y) { return -k * std::sin(k * x) * std::sin(k * y); }},
        {"u_xx", [k](double x, double y) { return -k * k * std::sin(k * x) * std::cos(k * y); }},
        {"u_xy", [k](double x, double y) { return -k * k * std::cos(k * x) * std::sin(k * y); }},
    };
    double lo = 1e9, hi = -1e9;
    for (const auto& ch : channels)
        for (bool periodic : {true, false}) {
            // 128 -> 256 intervals: coarser bounded u_xx is still dominated by
            // the one-sided boundary stencil
            const int n = periodic ? 128 : 129;
            const double order = std::log2(channel_error(ch, n, AxisScheme::CentralFD2, periodic) /
                                           channel_error(ch, 2 * n - (periodic ? 0 : 1), AxisScheme::CentralFD2, periodic));
            lo = std::min(lo, order);
            hi = std::max(hi, order);
            v.check(order >= 1.9 && order <= 2.1, std::string(ch.expr) + (periodic ? " periodic" : " bounded") +
                                                      ": order " + fmt(order));
        }
    v.note("FD2 orders in [" + fmt(lo) + ", " + fmt(hi) + "]");

    double spectral = 0.0;
    for (const auto& ch : channels)
        for (int n : {32, 64}) spectral = std::max(spectral, channel_error(ch, n, AxisScheme::Spectral, true));
    v.check(spectral <= 1e-8, "spectral error " + fmt(spectral));
    v.note("spectral max error " + fmt(spectral, 2));

    std::mt19937_64 rng(404);
    double worst = 0.0;
    const auto square = [](int n, bool periodic) {
        return Grid({Axis::unit("x", n, periodic), Axis::unit("y", n, periodic)});
    };
    for (const auto& [grid, scheme] :
         {std::pair{Grid({Axis::unit("x", 32, true), Axis::unit("t", 25, false)}), DiffScheme::burgers()},
          std::pair{square(21, false), DiffScheme::darcy()}, std::pair{square(16, true), DiffScheme::darcy()},
          std::pair{square(24, false), DiffScheme::uniform(2, AxisScheme::CentralFD4)}}) {
        const DerivativeApplier D(grid, scheme);
        for (const auto& J : multi_indices_up_to(2, 3)) {
            const auto u = gaussian(rng, grid.size()), w = gaussian(rng, grid.size());
            const double rel = std::abs(dot(w, D.apply(J, u)) - dot(D.apply_adjoint(J, w), u)) /
                               (std::sqrt(dot(w, w) * dot(u, u)));
            worst = std::max(worst, rel);
        }
        // the compiled adjoint of a linear operator is its transpose
        const VarSpace s({grid.axis(0).name, grid.axis(1).name}, {"u"});
        const std::string lin = "u_xx - 2*u_x + 3*u + " + grid.axis(1).name + "*u_" + grid.axis(1).name;
        const CompiledExpr L(parse(lin, s), grid, scheme, s, {});
        const GridField u(grid, gaussian(rng, grid.size())), w(grid, gaussian(rng, grid.size()));
        const auto Lu = L.eval({{"u", u}});
        const auto LTw = L.adjoint_grad({{"u", u}}, w, "u");
        const double rel = std::abs(dot(w.values, Lu.values) - dot(LTw.values, u.values)) /
                           std::sqrt(dot(w.values, w.values) * dot(u.values, u.values));
        worst = std::max(worst, rel);
    }
    v.check(worst <= 1e-10, "adjoint identity violated by " + fmt(worst));
    v.note("adjoint max rel " + fmt(worst, 2));
    return v;
}

Verdict criterion5() {
    Verdict v;
    const double t0 = wall_seconds();
    NetConfig cfg = ExperimentConfig::desk("darcy", Method::Baseline).net;
    cfg.width = 4;
    cfg.modes1 = cfg.modes2 = 4;
    cfg.head_width = 8;
    OperatorNet net(cfg, 55);
    std::mt19937_64 rng(56);
    Tensor x(1, cfg.in_channels, 16, 16), w(1, cfg.out_channels, 16, 16);
    x.data = gaussian(rng, x.size());
    w.data = gaussian(rng, w.size());
    Tape tape;
    net.forward(x, &tape);
    const auto grad = net.backward(tape, w);

    OperatorNet probe = net;
    const auto loss = [&] { return dot(probe.forward(x).data, w.data); };
    const double eps = 1e-5;
    double worst = 0.0;
    std::size_t failures = 0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
        const double saved = probe.params()[k];
        probe.params()[k] = saved + eps;
        const double up = loss();
        probe.params()[k] = saved - eps;
        const double dn = loss();
        probe.params()[k] = saved;
        const double fd = (up - dn) / (2 * eps);
        const double err = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-4});
        worst = std::max(worst, err);
        failures += err > 1e-4 ? 1 : 0;
    }
    v.check(failures == 0, std::to_string(failures) + " of " + std::to_string(grad.size()) + " gradients off");
    v.note(std::to_string(grad.size()) + " params, worst rel " + fmt(worst, 2));
    const double dt = wall_seconds() - t0;
    v.check(dt < 60.0, "runtime " + fmt(dt) + " s >= 60 s");
    return v;
}

Verdict criterion6() {
    Verdict v;
    const Grid g = darcy_grid(129);
    std::vector<double> ones(g.size(), 1.0);
    const auto sol = solve_darcy(g, ones, ones);
    const double center = sol.u[64 * 129 + 64];
    v.check(std::abs(center - 0.0737) <= 0.0005, "Darcy center " + fmt(center, 6));
    v.note("center " + fmt(center, 6));

    const Grid line({Axis::unit("x", 256, true)});
    const auto u0 = sample_grf(line, GrfSpec{GrfSpec::Kind::SquaredExponential, 0.1, 2.0, 1.0, 4});
    const int nt = 26;
    const auto coarse = solve_burgers(u0.values, nt, 0.01, 1);
    const auto fine = solve_burgers(u0.values, nt, 0.01, 2);
    std::vector<double> a, b;
    for (int j = 0; j < 256; ++j) {
        a.push_back(coarse.trajectory[static_cast<std::size_t>(j * nt + nt - 1)]);
        b.push_back(fine.trajectory[static_cast<std::size_t>(j * nt + nt - 1)]);
    }
    const double self = relative_l2(a, b);
    v.check(self <= 1e-4, "Burgers step-halving difference " + fmt(self));
    v.note("self-convergence " + fmt(self, 2));

    const auto still = solve_burgers(std::vector<double>(128, 0.7), 20, 0.01);
    double drift = 0.0;
    for (double u : still.trajectory) drift = std::max(drift, std::abs(u - 0.7));
    v.check(drift <= 1e-12, "constant state drifts by " + fmt(drift));
    return v;
}

// Bit-identity of final parameters and of every shared history entry.
std::string trajectory_mismatch(const ExperimentResult& a, const ExperimentResult& b) {
    if (a.model.net.params() != b.model.net.params()) return "parameters differ";
    const auto& ha = a.report.history.epochs;
    const auto& hb = b.report.history.epochs;
    if (ha.size() != hb.size()) return "epoch counts differ";
    for (std::size_t e = 0; e < ha.size(); ++e) {
        if (ha[e].total != hb[e].total) return "epoch " + std::to_string(e) + " totals differ";
        for (const auto& tb : hb[e].terms)
            for (const auto& ta : ha[e].terms)
                if (ta.name == tb.name && ta.value != tb.value)
                    return "epoch " + std::to_string(e) + " term " + ta.name + " differs";
    }
    return "";
}

Verdict criterion7() {
    Verdict v;
    const auto compare = [&](const std::string& label, const ExperimentConfig& cfg, const std::string& pde) {
        const auto& base = desk_run(desk(pde, Method::Baseline, 0)).result;
        const std::string why = trajectory_mismatch(desk_run(cfg).result, base);
        v.check(why.empty(), label + ": " + why);
    };
    for (const std::string pde : {"burgers", "darcy"}) {
        auto c = desk(pde, Method::EvolutionarySymmetry, 0);
        c.loss.gamma = 0.0;
        compare("(a) " + pde + " evolutionary gamma=0", c, pde);
    }
    compare("(b) darcy point_symmetry", desk("darcy", Method::PointSymmetry, 0), "darcy");
    auto c = desk("burgers", Method::PointSymmetry, 0);
    c.loss.generators = {"v1", "v2", "v4"};
    compare("(c) burgers point_symmetry {v1,v2,v4}", c, "burgers");
    // control: a live term does move the trajectory
    const std::string control = trajectory_mismatch(desk_run(desk("burgers", Method::EvolutionarySymmetry, 0)).result,
                                                    desk_run(desk("burgers", Method::Baseline, 0)).result);
    v.check(!control.empty(), "control: evolutionary run identical to baseline");
    return v;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Verdict criterion8() {
    Verdict v;
    double total_cpu = 0.0, worst_cpu = 0.0;
    std::map<std::string, std::map<Method, std::vector<double>>> eqn;
    const std::map<std::string, std::vector<Method>> grid{
        {"burgers", {Method::Baseline, Method::PointSymmetry, Method::EvolutionarySymmetry}},
        {"darcy", {Method::Baseline, Method::EvolutionarySymmetry}}};
    for (const auto& [pde, methods] : grid)
        for (std::uint64_t seed = 0; seed < 3; ++seed)
            for (Method m : methods) {
                const Cell& cell = desk_run(desk(pde, m, seed));
                eqn[pde][m].push_back(cell.result.report.test.eqn_error);
                total_cpu += cell.cpu;
                worst_cpu = std::max(worst_cpu, cell.cpu);
                v.check(cell.cpu <= 300.0, pde + " " + to_string(m) + " seed " + std::to_string(seed) + " took " +
                                               fmt(cell.cpu) + " cpu-s");
            }
    const auto wins = [](const std::vector<double>& a, const std::vector<double>& b) {
        int n = 0;
        for (std::size_t i = 0; i < a.size(); ++i) n += a[i] <= b[i] ? 1 : 0;
        return n;
    };
    auto& b = eqn["burgers"];
    const double evo = median3(b[Method::EvolutionarySymmetry]), point = median3(b[Method::PointSymmetry]);
    v.check(evo <= point, "Burgers median eqn error evolutionary " + fmt(evo) + " > point " + fmt(point));
    const int bw = wins(b[Method::EvolutionarySymmetry], b[Method::Baseline]);
    v.check(bw >= 2, "Burgers evolutionary <= baseline in " + std::to_string(bw) + "/3 seeds");
    auto& d = eqn["darcy"];
    const int dw = wins(d[Method::EvolutionarySymmetry], d[Method::Baseline]);
    v.check(dw >= 2, "Darcy evolutionary <= baseline in " + std::to_string(dw) + "/3 seeds");
    v.check(total_cpu <= 45 * 60.0, "grid took " + fmt(total_cpu) + " cpu-s");
    v.note("Burgers median eqn evo " + fmt(evo, 3) + " point " + fmt(point, 3) + " base " +
           fmt(median3(b[Method::Baseline]), 3) + ", evo<=base " + std::to_string(bw) + "/3");
    std::string dd = "Darcy eqn evo/base";
    for (std::size_t i = 0; i < 3; ++i)
        dd += " " + fmt(d[Method::EvolutionarySymmetry][i], 3) + "/" + fmt(d[Method::Baseline][i], 3);
    v.note(dd);
    v.note("grid " + fmt(total_cpu / 60, 3) + " cpu-min, worst cell " + fmt(worst_cpu, 3) + " cpu-s");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

Verdict criterion9() {
    Verdict v;
    // zero-shot at half and double of the 32-point training grid
    for (const std::string pde : {"burgers", "darcy"})
        for (Method m : {Method::Baseline, Method::PointSymmetry, Method::EvolutionarySymmetry}) {
            const auto& rep = desk_run(desk(pde, m, 0)).result.report;
            v.check(rep.resolutions.size() == 2, pde + " " + to_string(m) + ": missing resolution blocks");
            for (const auto& r : rep.resolutions)
                v.check(std::isfinite(r.test.l2) && std::isfinite(r.test.eqn_error),
                        pde + " " + to_string(m) + " at " + r.grid + ": non-finite metrics");
        }

    const std::vector<double> levels{0.0, 0.01, 0.05, 0.1};
    const std::vector<Method> methods{Method::EvolutionarySymmetry, Method::Baseline};
    const double t0 = cpu_seconds();
    const auto rows = ablate_noise(desk("darcy", Method::EvolutionarySymmetry, 0), levels, methods);
    std::cerr << "  [darcy noise ablation] " << fmt(cpu_seconds() - t0, 3) << " cpu-s\n";
    v.check(rows.size() == levels.size() * methods.size(), "ablation table has " + std::to_string(rows.size()) + " rows");

    // gaps per definition, and the emitted table agrees with the reports
    const auto lines = split(ablation_csv(rows), '\n');
    double worst = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i].report;
        worst = std::max(worst, std::abs(r.generalization_gap - (r.test.l2 - r.train.l2)));
        worst = std::max(worst, std::abs(r.stability_gap - (r.test.eqn_error - r.train.eqn_error)));
        const auto f = split(lines.at(i + 1), ',');
        const double csv[6] = {std::stod(f.at(4)), std::stod(f.at(5)), std::stod(f.at(6)),
                               std::stod(f.at(7)), std::stod(f.at(8)), std::stod(f.at(9))};
        const double rep[6] = {r.train.l2, r.test.l2, r.train.eqn_error, r.test.eqn_error, r.generalization_gap,
                               r.stability_gap};
        for (int k = 0; k < 6; ++k) worst = std::max(worst, std::abs(csv[k] - rep[k]));
        worst = std::max(worst, std::abs(csv[4] - (csv[1] - csv[0])));
        worst = std::max(worst, std::abs(csv[5] - (csv[3] - csv[2])));
    }
    v.check(worst <= 1e-12, "gap inconsistency " + fmt(worst));

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        std::string trace = to_string(methods[mi]) + " train eqn";
        for (std::size_t li = 0; li < levels.size(); ++li) {
            const auto& row = rows[li * methods.size() + mi];
            trace += " " + fmt(row.report.train.eqn_error, 7);
            if (li > 0) {
                const double prev = rows[(li - 1) * methods.size() + mi].report.train.eqn_error;
                v.check(row.report.train.eqn_error > prev, to_string(methods[mi]) + ": train eqn error not increasing " +
                                                               fmt(prev, 7) + " -> " + fmt(row.report.train.eqn_error, 7) +
                                                               " at noise " + fmt(levels[li]));
            }
        }
        v.note(trace);
    }
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Verdict criterion10() {
    Verdict v;
    const fs::path work = fs::temp_directory_path() / "symflow_acceptance";
    fs::remove_all(work);
    const std::vector<std::string> artifacts{"resolved.cfg", "metrics.csv", "summary.json", "model.bin", "eval.json"};
    for (const auto& entry : fs::directory_iterator(fs::path(SYMFLOW_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".cfg") continue;
        const std::string name = entry.path().stem().string();
        std::map<std::string, std::string> first;
        for (int pass = 0; pass < 2; ++pass) {
            const fs::path dir = work / (name + "_" + std::to_string(pass));
            fs::create_directories(dir);
            const std::string cli = std::string("cd '") + dir.string() + "' && '" + SYMFLOW_CLI + "' ";
            const std::string cfg = "'" + entry.path().string() + "'";
            const int rc_train = std::system((cli + "train " + cfg + " > log.txt 2>&1").c_str());
            const int rc_eval = std::system((cli + "eval " + cfg + " >> log.txt 2>&1").c_str());
            std::cerr << "  [" << name << " run " << pass << "] exit " << rc_train << "/" << rc_eval << "\n";
            v.check(rc_train == 0 && rc_eval == 0, name + ": CLI failed, see " + (dir / "log.txt").string());
            const RunConfig rc = RunConfig::load(entry.path());
            for (const auto& a : artifacts) {
                const fs::path p = dir / rc.out_dir / a;
                v.check(fs::exists(p), name + ": missing " + a);
                const std::string bytes = slurp(p);
                if (pass == 0)
                    first[a] = bytes;
                else
                    v.check(bytes == first[a], name + ": " + a + " differs between runs");
            }
        }
        v.note(name + " reproduced");
    }
    v.check(!v.notes.empty() || !v.failures.empty(), "no shipped configs found");
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, Verdict (*)()>> all{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0, ran = 0;
    for (const auto& [id, fn] : all) {
        if (!only.empty() && !only.count(id)) continue;
        std::cerr << "criterion " << id << " ...\n";
        const double w0 = wall_seconds(), c0 = cpu_seconds();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v.failures.push_back(std::string("exception: ") + e.what());
        }
        ++ran;
        std::ostringstream line;
        line << "criterion " << std::setw(2) << id << ": " << (v.failures.empty() ? "PASS" : "FAIL") << "  ("
             << fmt(wall_seconds() - w0, 3) << " s wall, " << fmt(cpu_seconds() - c0, 3) << " s cpu)";
        for (const auto& n : v.notes) line << "\n    " << n;
        for (const auto& f : v.failures) line << "\n    FAILED: " << f;
        if (!v.failures.empty()) ++failed;
        std::cout << line.str() << std::endl;
    }
    std::cout << "acceptance: " << (ran - failed) << "/" << ran << " criteria passed, " << fmt(cpu_seconds() / 60, 3)
              << " cpu-min" << std::endl;
    return failed == 0 ? 0 : 1;
}
