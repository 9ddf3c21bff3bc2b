#include "symflow/datasets.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>

namespace symflow {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr double kPi = std::numbers::pi;

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct ComplexBuffer {
    explicit ComplexBuffer(std::size_t n) : data(fftw_alloc_complex(n)), size(n) {
        if (!data) throw std::bad_alloc();
    }
    ~ComplexBuffer() { fftw_free(data); }
    ComplexBuffer(const ComplexBuffer&) = delete;
    ComplexBuffer& operator=(const ComplexBuffer&) = delete;
    fftw_complex* data;
    std::size_t size;
};

struct RealBuffer {
    explicit RealBuffer(std::size_t n) : data(fftw_alloc_real(n)), size(n) {
        if (!data) throw std::bad_alloc();
    }
    ~RealBuffer() { fftw_free(data); }
    RealBuffer(const RealBuffer&) = delete;
    RealBuffer& operator=(const RealBuffer&) = delete;
    double* data;
    std::size_t size;
};

struct Plan {
    fftw_plan p = nullptr;
    Plan() = default;
    explicit Plan(fftw_plan q) : p(q) {
        if (!p) throw std::runtime_error("FFTW planning failed");
    }
    ~Plan() {
        if (p) {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(p);
        }
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
};

// signed wavenumber of DFT index j on m points
int signed_index(int j, int m) { return j <= m / 2 ? j : j - m; }

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(master ^ splitmix64(stream)) + index);
}

// ---------------------------------------------------------------------------

void GrfSpec::validate() const {
    if (kind == Kind::SquaredExponential && !(length_scale > 0.0)) throw std::invalid_argument("GRF length scale must be positive");
    if (kind == Kind::PowerSpectrum && !(decay > 0.0)) throw std::invalid_argument("GRF decay must be positive");
    if (!(variance >= 0.0)) throw std::invalid_argument("GRF variance must be non-negative");
}

nlohmann::json GrfSpec::to_json() const {
    nlohmann::json j;
    if (kind == Kind::SquaredExponential) {
        j["kind"] = "squared_exponential";
        j["length_scale"] = length_scale;
    } else {
        j["kind"] = "power_spectrum";
        j["decay"] = decay;
    }
    j["variance"] = variance;
    j["seed"] = seed;
    return j;
}

GrfSpec GrfSpec::from_json(const nlohmann::json& j) {
    GrfSpec s;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "squared_exponential") {
        s.kind = Kind::SquaredExponential;
        s.length_scale = j.at("length_scale").get<double>();
    } else if (kind == "power_spectrum") {
        s.kind = Kind::PowerSpectrum;
        s.decay = j.at("decay").get<double>();
    } else {
        throw std::invalid_argument("unknown GRF kind " + kind);
    }
    s.variance = j.at("variance").get<double>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
    return s;
}

GridField sample_grf(const Grid& grid, const GrfSpec& spec) {
    spec.validate();
    if (spec.variance == 0.0) return GridField::constant(grid, 0.0);

    const std::size_t rank = grid.rank();
    std::vector<int> m(rank);
    for (std::size_t a = 0; a < rank; ++a) m[a] = grid.axis(a).periodic ? grid.axis(a).n : 2 * (grid.axis(a).n - 1);
    std::size_t M = 1;
    for (int v : m) M *= static_cast<std::size_t>(v);

    auto multi = [&](std::size_t flat, std::vector<int>& idx) {
        for (std::size_t a = rank; a-- > 0;) {
            idx[a] = static_cast<int>(flat % static_cast<std::size_t>(m[a]));
            flat /= static_cast<std::size_t>(m[a]);
        }
    };

    ComplexBuffer buf(M);
    std::vector<double> lambda(M);
    std::vector<int> idx(rank);
    {
        std::unique_lock lock(planner_mutex());
        Plan plan(fftw_plan_dft(static_cast<int>(rank), m.data(), buf.data, buf.data, FFTW_FORWARD, FFTW_ESTIMATE));
        lock.unlock();

        if (spec.kind == GrfSpec::Kind::SquaredExponential) {
            for (std::size_t f = 0; f < M; ++f) {
                multi(f, idx);
                double r2 = 0.0;
                for (std::size_t a = 0; a < rank; ++a) {
                    double d = std::min(idx[a], m[a] - idx[a]) * grid.axis(a).spacing;
                    r2 += d * d;
                }
                buf.data[f][0] = spec.variance * std::exp(-r2 / (2.0 * spec.length_scale * spec.length_scale));
                buf.data[f][1] = 0.0;
            }
            fftw_execute(plan.p);
            for (std::size_t f = 0; f < M; ++f) lambda[f] = std::max(buf.data[f][0], 0.0);
        } else {
            double total = 0.0;
            for (std::size_t f = 0; f < M; ++f) {
                multi(f, idx);
                double k2 = 0.0;
                for (std::size_t a = 0; a < rank; ++a) {
                    double xi = signed_index(idx[a], m[a]) / (m[a] * grid.axis(a).spacing);
                    k2 += xi * xi;
                }
                lambda[f] = std::pow(4.0 * kPi * kPi * k2 + 9.0, -spec.decay);
                total += lambda[f];
            }
            double scale = spec.variance * static_cast<double>(M) / total;
            for (auto& l : lambda) l *= scale;
        }

        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<double> normal;
        for (std::size_t f = 0; f < M; ++f) {
            double s = std::sqrt(lambda[f] / static_cast<double>(M));
            buf.data[f][0] = s * normal(rng);
            buf.data[f][1] = s * normal(rng);
        }
        fftw_execute(plan.p);
    }

    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t f = 0;
        for (std::size_t a = 0; a < rank; ++a) {
            auto k = (i / grid.stride(a)) % static_cast<std::size_t>(grid.axis(a).n);
            f = f * static_cast<std::size_t>(m[a]) + k;
        }
        out[i] = buf.data[f][0];
    }
    return GridField(grid, std::move(out));
}

const GridField& Dataset::input(std::size_t sample, const std::string& name) const {
    auto it = std::find(input_names.begin(), input_names.end(), name);
    if (it == input_names.end()) throw std::invalid_argument("dataset has no input " + name);
    return samples.at(sample).inputs.at(static_cast<std::size_t>(it - input_names.begin()));
}

// ---------------------------------------------------------------------------
// Burgers

BurgersSolution solve_burgers(std::span<const double> u0, int nt, double nu, int refine) {
    const int n = static_cast<int>(u0.size());
    if (n < 8) throw std::invalid_argument("solve_burgers: need at least 8 points");
    if (nt < 2 || refine < 1) throw std::invalid_argument("solve_burgers: bad time sampling");
    const int nk = n / 2 + 1;
    const int kc = n / 3;

    RealBuffer phys(static_cast<std::size_t>(n));
    ComplexBuffer spec(static_cast<std::size_t>(nk));
    Plan fwd, inv;
    {
        std::lock_guard lock(planner_mutex());
        fwd.p = fftw_plan_dft_r2c_1d(n, phys.data, spec.data, FFTW_ESTIMATE);
        inv.p = fftw_plan_dft_c2r_1d(n, spec.data, phys.data, FFTW_ESTIMATE);
    }
    if (!fwd.p || !inv.p) throw std::runtime_error("FFTW planning failed");

    using C = std::complex<double>;
    std::vector<double> kappa(static_cast<std::size_t>(nk));
    std::vector<char> keep(static_cast<std::size_t>(nk));
    for (int k = 0; k < nk; ++k) {
        kappa[k] = 2.0 * kPi * k;
        keep[k] = k <= kc;
    }
    auto to_spec = [&](const std::vector<double>& u, std::vector<C>& out) {
        std::copy(u.begin(), u.end(), phys.data);
        fftw_execute(fwd.p);
        for (int k = 0; k < nk; ++k) out[k] = keep[k] ? C(spec.data[k][0], spec.data[k][1]) : C(0.0, 0.0);
    };
    auto to_phys = [&](const std::vector<C>& uh, std::vector<double>& out) {
        for (int k = 0; k < nk; ++k) {
            spec.data[k][0] = uh[k].real();
            spec.data[k][1] = uh[k].imag();
        }
        fftw_execute(inv.p);
        for (int j = 0; j < n; ++j) out[j] = phys.data[j] / n;
    };

    std::vector<C> uh(static_cast<std::size_t>(nk)), wh(static_cast<std::size_t>(nk));
    std::vector<double> u(u0.begin(), u0.end()), w(static_cast<std::size_t>(n));
    to_spec(u, uh);
    to_phys(uh, u);

    auto rhs = [&](const std::vector<C>& in, std::vector<C>& out) {
        to_phys(in, u);
        for (int j = 0; j < n; ++j) w[j] = 0.5 * u[j] * u[j];
        to_spec(w, wh);
        for (int k = 0; k < nk; ++k) out[k] = keep[k] ? C(0.0, -kappa[k]) * wh[k] - nu * kappa[k] * kappa[k] * in[k] : C(0.0, 0.0);
    };

    double umax = 0.0;
    for (double v : u) umax = std::max(umax, std::abs(v));
    const double kmax = 2.0 * kPi * kc;
    double dt_limit = 2.78 / std::max(nu * kmax * kmax, 1e-300);
    if (umax > 0.0) dt_limit = std::min(dt_limit, 2.8 / (umax * kmax));
    dt_limit *= 0.5;
    const double interval = 1.0 / (nt - 1);
    const int steps = static_cast<int>(std::ceil(interval / dt_limit)) * refine;
    const double dt = interval / steps;

    BurgersSolution sol;
    sol.steps_per_interval = steps;
    sol.trajectory.assign(static_cast<std::size_t>(n) * nt, 0.0);
    auto record = [&](int it) {
        to_phys(uh, u);
        double e = 0.0;
        for (int j = 0; j < n; ++j) {
            sol.trajectory[static_cast<std::size_t>(j) * nt + it] = u[j];
            e += u[j] * u[j];
        }
        sol.energy.push_back(e / n);
    };

    std::vector<C> k1(nk), k2(nk), k3(nk), k4(nk), tmp(nk);
    record(0);
    for (int it = 1; it < nt; ++it) {
        for (int s = 0; s < steps; ++s) {
            rhs(uh, k1);
            for (int k = 0; k < nk; ++k) tmp[k] = uh[k] + 0.5 * dt * k1[k];
            rhs(tmp, k2);
            for (int k = 0; k < nk; ++k) tmp[k] = uh[k] + 0.5 * dt * k2[k];
            rhs(tmp, k3);
            for (int k = 0; k < nk; ++k) tmp[k] = uh[k] + dt * k3[k];
            rhs(tmp, k4);
            for (int k = 0; k < nk; ++k) uh[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        record(it);
    }
    return sol;
}

Grid burgers_grid(int nx, int nt) { return Grid({Axis::unit("x", nx, true), Axis::unit("t", nt, false)}); }

namespace {

bool trajectory_ok(const BurgersSolution& sol) {
    for (double v : sol.trajectory)
        if (!std::isfinite(v)) return false;
    for (std::size_t k = 1; k < sol.energy.size(); ++k)
        if (!(sol.energy[k] <= sol.energy[k - 1] * (1.0 + 1e-12) + 1e-300)) return false;
    return true;
}

}  // namespace

Dataset gen_burgers(const BurgersOptions& opts) {
    if (opts.n_samples < 0) throw std::invalid_argument("gen_burgers: negative sample count");
    const Grid grid = burgers_grid(opts.nx, opts.nt);
    const int npts = opts.solver_points > 0 ? opts.solver_points : opts.nx * ((256 + opts.nx - 1) / opts.nx);
    if (npts % opts.nx != 0) throw std::invalid_argument("gen_burgers: solver points must be a multiple of nx");
    const int stride = npts / opts.nx;
    const Grid solver_grid({Axis::unit("x", npts, true)});

    Dataset ds;
    ds.pde = "burgers";
    ds.grid = grid;
    ds.input_names = {"u0", "x", "t"};
    const GridField xs = GridField::coordinate(grid, 0), ts = GridField::coordinate(grid, 1);
    nlohmann::json resampled = nlohmann::json::array();

    for (int i = 0; i < opts.n_samples; ++i) {
        std::uint64_t seed = derive_seed(opts.seed, 1, static_cast<std::uint64_t>(i));
        BurgersSolution sol;
        for (int attempt = 0;; ++attempt) {
            if (attempt == 16) throw std::runtime_error("gen_burgers: no stable sample after 16 draws");
            GrfSpec ic = opts.ic;
            ic.seed = seed;
            GridField u0 = sample_grf(solver_grid, ic);
            sol = solve_burgers(u0.values, opts.nt, opts.nu);
            if (trajectory_ok(sol)) break;
            std::cerr << "gen_burgers: sample " << i << " unstable with seed " << seed << ", redrawing\n";
            resampled.push_back({{"sample", i}, {"seed", seed}});
            seed = derive_seed(seed, 1, static_cast<std::uint64_t>(attempt) + 1);
        }
        std::vector<double> target(grid.size()), u0b(grid.size());
        for (int ix = 0; ix < opts.nx; ++ix)
            for (int it = 0; it < opts.nt; ++it) {
                std::size_t dst = static_cast<std::size_t>(ix) * opts.nt + it;
                target[dst] = sol.trajectory[static_cast<std::size_t>(ix * stride) * opts.nt + it];
                u0b[dst] = sol.trajectory[static_cast<std::size_t>(ix * stride) * opts.nt];
            }
        ds.samples.push_back(Sample{{GridField(grid, std::move(u0b)), xs, ts}, GridField(grid, std::move(target)), seed});
    }
    ds.meta = {{"generator", "pseudospectral RK4, 2/3 dealiasing"},
               {"nu", opts.nu},
               {"ic", opts.ic.to_json()},
               {"master_seed", opts.seed},
               {"solver_points", npts},
               {"resampled", resampled},
               {"noise", 0.0}};
    return ds;
}

// ---------------------------------------------------------------------------
// Darcy

namespace {

struct DarcyOperator {
    int nx, ny;
    std::size_t sx;  // stride of axis 0
    double ihx2, ihy2;
    std::vector<double> kx_face, ky_face;  // face between (i,j) and (i+1,j) / (i,j+1)

    DarcyOperator(const Grid& g, std::span<const double> k) {
        if (g.rank() != 2 || g.axis(0).periodic || g.axis(1).periodic)
            throw std::invalid_argument("Darcy solver needs a 2D non-periodic grid");
        if (k.size() != g.size()) throw std::invalid_argument("permeability has the wrong size");
        nx = g.axis(0).n;
        ny = g.axis(1).n;
        sx = g.stride(0);
        ihx2 = 1.0 / (g.axis(0).spacing * g.axis(0).spacing);
        ihy2 = 1.0 / (g.axis(1).spacing * g.axis(1).spacing);
        auto hm = [](double a, double b) { return 2.0 * a * b / (a + b); };
        kx_face.assign(g.size(), 0.0);
        ky_face.assign(g.size(), 0.0);
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j) {
                std::size_t p = i * sx + j;
                if (!(k[p] > 0.0)) throw std::invalid_argument("permeability must be positive");
                if (i + 1 < nx) kx_face[p] = hm(k[p], k[p + sx]);
                if (j + 1 < ny) ky_face[p] = hm(k[p], k[p + 1]);
            }
    }

    bool interior(int i, int j) const { return i > 0 && j > 0 && i < nx - 1 && j < ny - 1; }

    // y = A x on interior points; boundary entries of x are treated as 0.
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        auto val = [&](int i, int j) { return interior(i, j) ? x[i * sx + j] : 0.0; };
        for (int i = 1; i < nx - 1; ++i)
            for (int j = 1; j < ny - 1; ++j) {
                std::size_t p = i * sx + j;
                double c = x[p];
                y[p] = ihx2 * (kx_face[p] * (c - val(i + 1, j)) + kx_face[p - sx] * (c - val(i - 1, j))) +
                       ihy2 * (ky_face[p] * (c - val(i, j + 1)) + ky_face[p - 1] * (c - val(i, j - 1)));
            }
    }

    double diag(std::size_t p) const { return ihx2 * (kx_face[p] + kx_face[p - sx]) + ihy2 * (ky_face[p] + ky_face[p - 1]); }
};

double interior_dot(const DarcyOperator& A, const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (int i = 1; i < A.nx - 1; ++i)
        for (int j = 1; j < A.ny - 1; ++j) s += a[i * A.sx + j] * b[i * A.sx + j];
    return s;
}

}  // namespace

double darcy_residual(const Grid& grid, std::span<const double> k, std::span<const double> f, std::span<const double> u) {
    DarcyOperator A(grid, k);
    std::vector<double> x(u.begin(), u.end()), y(grid.size(), 0.0), b(f.begin(), f.end());
    A.apply(x, y);
    std::vector<double> r(grid.size(), 0.0);
    for (std::size_t p = 0; p < r.size(); ++p) r[p] = y[p] - b[p];
    return std::sqrt(interior_dot(A, r, r) / interior_dot(A, b, b));
}

DarcySolution solve_darcy(const Grid& grid, std::span<const double> k, std::span<const double> f, double tol, int max_iter) {
    DarcyOperator A(grid, k);
    if (f.size() != grid.size()) throw std::invalid_argument("source has the wrong size");
    const std::size_t N = grid.size();
    std::vector<double> b(N, 0.0), x(N, 0.0), r(N, 0.0), z(N, 0.0), p(N, 0.0), q(N, 0.0), dinv(N, 0.0);
    for (int i = 1; i < A.nx - 1; ++i)
        for (int j = 1; j < A.ny - 1; ++j) {
            std::size_t s = i * A.sx + j;
            b[s] = f[s];
            dinv[s] = 1.0 / A.diag(s);
        }
    const double bnorm = std::sqrt(interior_dot(A, b, b));
    DarcySolution sol;
    if (bnorm == 0.0) {
        sol.u = x;
        return sol;
    }
    r = b;
    for (std::size_t s = 0; s < N; ++s) z[s] = dinv[s] * r[s];
    p = z;
    double rz = interior_dot(A, r, z);
    int it = 0;
    for (; it < max_iter; ++it) {
        if (std::sqrt(interior_dot(A, r, r)) <= tol * bnorm) break;
        A.apply(p, q);
        double alpha = rz / interior_dot(A, p, q);
        for (std::size_t s = 0; s < N; ++s) {
            x[s] += alpha * p[s];
            r[s] -= alpha * q[s];
            z[s] = dinv[s] * r[s];
        }
        double rz_new = interior_dot(A, r, z);
        double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t s = 0; s < N; ++s) p[s] = z[s] + beta * p[s];
    }
    sol.iterations = it;
    sol.relative_residual = darcy_residual(grid, k, f, x);
    if (!(sol.relative_residual <= tol * 1.5))
        throw std::runtime_error("Darcy CG did not reach tolerance within " + std::to_string(max_iter) + " iterations");
    sol.u = std::move(x);
    return sol;
}

Grid darcy_grid(int n) { return Grid({Axis::unit("x", n, false), Axis::unit("y", n, false)}); }

Dataset gen_darcy(const DarcyOptions& opts) {
    if (opts.n_samples < 0) throw std::invalid_argument("gen_darcy: negative sample count");
    const Grid grid = darcy_grid(opts.n);
    Dataset ds;
    ds.pde = "darcy";
    ds.grid = grid;
    ds.input_names = {"k", "x", "y"};
    const GridField xs = GridField::coordinate(grid, 0), ys = GridField::coordinate(grid, 1);
    const std::vector<double> f(grid.size(), 1.0);
    for (int i = 0; i < opts.n_samples; ++i) {
        GrfSpec spec = opts.k_spec;
        spec.seed = derive_seed(opts.seed, 2, static_cast<std::uint64_t>(i));
        GridField g = sample_grf(grid, spec);
        std::vector<double> k(grid.size());
        for (std::size_t p = 0; p < k.size(); ++p) k[p] = g[p] >= 0.0 ? opts.k_hi : opts.k_lo;
        auto sol = solve_darcy(grid, k, f);
        ds.samples.push_back(Sample{{GridField(grid, std::move(k)), xs, ys}, GridField(grid, std::move(sol.u)), spec.seed});
    }
    ds.meta = {{"generator", "5-point conservative FD, harmonic faces, Jacobi-PCG rtol 1e-10"},
               {"k_spec", opts.k_spec.to_json()},
               {"k_hi", opts.k_hi},
               {"k_lo", opts.k_lo},
               {"f", 1.0},
               {"master_seed", opts.seed},
               {"noise", 0.0}};
    return ds;
}

// ---------------------------------------------------------------------------

Dataset add_noise(const Dataset& ds, double level, std::uint64_t seed) {
    if (!(level >= 0.0)) throw std::invalid_argument("noise level must be non-negative");
    Dataset out = ds;
    out.meta["noise"] = level;
    out.meta["noise_seed"] = seed;
    out.meta["noise_model"] = "target += level * std(target) * N(0,1), per-sample std, targets only";
    if (level == 0.0) return out;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        auto& t = out.samples[i].target.values;
        double mean = 0.0;
        for (double v : t) mean += v;
        mean /= static_cast<double>(t.size());
        double var = 0.0;
        for (double v : t) var += (v - mean) * (v - mean);
        double sd = std::sqrt(var / static_cast<double>(t.size()));
        std::mt19937_64 rng(derive_seed(seed, 3, i));
        std::normal_distribution<double> normal;
        for (double& v : t) v += level * sd * normal(rng);
    }
    return out;
}

Grid downsample(const Grid& grid, int factor) {
    if (factor < 1) throw std::invalid_argument("downsample factor must be positive");
    std::vector<Axis> axes;
    for (const auto& a : grid.axes()) {
        int span = a.periodic ? a.n : a.n - 1;
        if (span % factor != 0)
            throw std::invalid_argument("axis " + a.name + " of " + std::to_string(a.n) + " points is not divisible by " +
                                        std::to_string(factor));
        axes.push_back(Axis{a.name, span / factor + (a.periodic ? 0 : 1), a.spacing * factor, a.periodic});
    }
    return Grid(std::move(axes));
}

std::vector<double> downsample(const Grid& grid, std::span<const double> field, int factor) {
    Grid coarse = downsample(grid, factor);
    std::vector<double> out(coarse.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t src = 0;
        for (std::size_t a = 0; a < grid.rank(); ++a) {
            auto k = (i / coarse.stride(a)) % static_cast<std::size_t>(coarse.axis(a).n);
            src += k * static_cast<std::size_t>(factor) * grid.stride(a);
        }
        out[i] = field[src];
    }
    return out;
}

Dataset downsample(const Dataset& ds, int factor) {
    Dataset out;
    out.pde = ds.pde;
    out.grid = downsample(ds.grid, factor);
    out.input_names = ds.input_names;
    out.meta = ds.meta;
    out.meta["downsample_factor"] = ds.meta.value("downsample_factor", 1) * factor;
    for (const auto& s : ds.samples) {
        Sample c;
        c.seed = s.seed;
        for (const auto& f : s.inputs) c.inputs.emplace_back(out.grid, downsample(ds.grid, f.values, factor));
        c.target = GridField(out.grid, downsample(ds.grid, s.target.values, factor));
        out.samples.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'M', 'F', 'L', 'O', 'W', '1'};

}  // namespace

void write_container(const std::filesystem::path& path, const nlohmann::json& header, std::span<const double> payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::string text = header.dump();
    const std::uint64_t len = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size_bytes()));
    if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

std::pair<nlohmann::json, std::vector<double>> read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto total = std::filesystem::file_size(path);
    char magic[8];
    std::uint64_t len = 0;
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error(path.string() + ": bad magic");
    if (!in.read(reinterpret_cast<char*>(&len), 8) || len > total - 16)
        throw std::runtime_error(path.string() + ": corrupt header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": corrupt header: " + e.what());
    }
    const auto rest = total - 16 - len;
    if (rest % sizeof(double) != 0) throw std::runtime_error(path.string() + ": payload is not a whole number of float64");
    std::vector<double> payload(rest / sizeof(double));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(rest));
    if (!in) throw std::runtime_error(path.string() + ": truncated payload");
    return {std::move(header), std::move(payload)};
}

nlohmann::json grid_to_json(const Grid& grid) {
    nlohmann::json axes = nlohmann::json::array();
    for (const auto& a : grid.axes()) axes.push_back({{"name", a.name}, {"n", a.n}, {"spacing", a.spacing}, {"periodic", a.periodic}});
    return axes;
}

Grid grid_from_json(const nlohmann::json& j) {
    std::vector<Axis> axes;
    for (const auto& a : j)
        axes.push_back(Axis{a.at("name").get<std::string>(), a.at("n").get<int>(), a.at("spacing").get<double>(),
                            a.at("periodic").get<bool>()});
    return Grid(std::move(axes));
}

void save(const Dataset& ds, const std::filesystem::path& path) {
    nlohmann::json h;
    h["schema"] = 1;
    h["kind"] = "dataset";
    h["pde"] = ds.pde;
    h["grid"] = grid_to_json(ds.grid);
    h["samples"] = ds.samples.size();
    auto channels = ds.input_names;
    channels.push_back("target");
    h["channels"] = channels;
    std::vector<std::uint64_t> seeds;
    for (const auto& s : ds.samples) seeds.push_back(s.seed);
    h["sample_seeds"] = seeds;
    h["meta"] = ds.meta;

    std::vector<double> payload;
    payload.reserve(ds.samples.size() * channels.size() * ds.grid.size());
    for (const auto& s : ds.samples) {
        if (s.inputs.size() != ds.input_names.size()) throw std::invalid_argument("sample has the wrong number of inputs");
        for (const auto& f : s.inputs) payload.insert(payload.end(), f.values.begin(), f.values.end());
        payload.insert(payload.end(), s.target.values.begin(), s.target.values.end());
    }
    write_container(path, h, payload);
}

Dataset load(const std::filesystem::path& path) {
    auto [h, payload] = read_container(path);
    Dataset ds;
    try {
        if (h.at("kind").get<std::string>() != "dataset") throw std::runtime_error(path.string() + " is not a dataset");
        if (h.at("schema").get<int>() != 1) throw std::runtime_error(path.string() + ": unsupported schema");
        ds.pde = h.at("pde").get<std::string>();
        ds.grid = grid_from_json(h.at("grid"));
        auto channels = h.at("channels").get<std::vector<std::string>>();
        if (channels.empty() || channels.back() != "target") throw std::runtime_error(path.string() + ": bad channel list");
        ds.input_names.assign(channels.begin(), channels.end() - 1);
        const auto n = h.at("samples").get<std::size_t>();
        auto seeds = h.at("sample_seeds").get<std::vector<std::uint64_t>>();
        ds.meta = h.at("meta");
        const std::size_t N = ds.grid.size();
        if (payload.size() != n * channels.size() * N || seeds.size() != n)
            throw std::runtime_error(path.string() + ": payload size does not match header");
        auto it = payload.begin();
        for (std::size_t i = 0; i < n; ++i) {
            Sample s;
            s.seed = seeds[i];
            for (std::size_t c = 0; c + 1 < channels.size(); ++c, it += static_cast<std::ptrdiff_t>(N))
                s.inputs.emplace_back(ds.grid, std::vector<double>(it, it + static_cast<std::ptrdiff_t>(N)));
            s.target = GridField(ds.grid, std::vector<double>(it, it + static_cast<std::ptrdiff_t>(N)));
            it += static_cast<std::ptrdiff_t>(N);
            ds.samples.push_back(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": corrupt header: " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return ds;
}

}  // namespace symflow
