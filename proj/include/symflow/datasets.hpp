#pragma once

// Desk-scale Burgers and Darcy datasets: Gaussian random fields, reference
// solvers, noise injection and the SYMFLOW1 container format.

#include "symflow/grid.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace symflow {

/// Counter-based seed derivation: independent of execution order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

struct GrfSpec {
    enum class Kind { SquaredExponential, PowerSpectrum };
    Kind kind = Kind::SquaredExponential;
    double length_scale = 0.1;  // SquaredExponential
    double decay = 2.0;         // PowerSpectrum: density (4 pi^2 |k|^2 + 9)^-decay
    double variance = 1.0;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument on length_scale <= 0, variance < 0 or decay <= 0.
    void validate() const;
    nlohmann::json to_json() const;
    static GrfSpec from_json(const nlohmann::json& j);
};

/// Zero-mean stationary Gaussian field by circulant embedding. Periodic axes
/// are sampled directly; each non-periodic axis of n points is embedded in a
/// periodic axis of 2(n-1) points and cropped.
GridField sample_grf(const Grid& grid, const GrfSpec& spec);

struct Sample {
    std::vector<GridField> inputs;  // aligned with Dataset::input_names
    GridField target;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::string pde;
    Grid grid;
    std::vector<std::string> input_names;
    std::vector<Sample> samples;
    nlohmann::json meta = nlohmann::json::object();

    const GridField& input(std::size_t sample, const std::string& name) const;
};

// ---------------------------------------------------------------------------
// Burgers

struct BurgersSolution {
    std::vector<double> trajectory;  // x-major on the solver grid: n_points x nt
    std::vector<double> energy;      // (1/n) sum u^2 per output time
    int steps_per_interval = 0;
};

/// Dealiased pseudospectral RK4 for u_t + u u_x = nu u_xx on the periodic
/// unit interval, sampled at nt equispaced times in [0, 1]. u0 is projected
/// onto the retained modes first. `refine` multiplies the step count.
BurgersSolution solve_burgers(std::span<const double> u0, int nt, double nu, int refine = 1);

struct BurgersOptions {
    int n_samples = 1;
    int nx = 128, nt = 100;
    double nu = 0.01;
    GrfSpec ic{GrfSpec::Kind::SquaredExponential, 0.1, 2.0, 1.0, 0};
    std::uint64_t seed = 0;
    /// Solver points per period; 0 picks the smallest multiple of nx >= 256.
    int solver_points = 0;
};

Grid burgers_grid(int nx, int nt);

/// Inputs u0 (broadcast over t), x, t; target u(x, t). A sample whose
/// trajectory is non-finite or gains energy is redrawn with the next seed.
Dataset gen_burgers(const BurgersOptions& opts);

// ---------------------------------------------------------------------------
// Darcy

struct DarcySolution {
    std::vector<double> u;
    double relative_residual = 0.0;
    int iterations = 0;
};

/// -div(k grad u) = f on a non-periodic grid, u = 0 on the boundary, by the
/// 5-point conservative scheme with harmonic-mean faces and Jacobi-
/// preconditioned CG. Throws std::runtime_error without convergence.
DarcySolution solve_darcy(const Grid& grid, std::span<const double> k, std::span<const double> f, double tol = 1e-10,
                          int max_iter = 20000);

/// ||A u - b|| / ||b|| for the same discrete system, over interior unknowns.
double darcy_residual(const Grid& grid, std::span<const double> k, std::span<const double> f, std::span<const double> u);

struct DarcyOptions {
    int n_samples = 1;
    int n = 61;
    GrfSpec k_spec{GrfSpec::Kind::PowerSpectrum, 0.1, 2.0, 1.0, 0};
    double k_hi = 12.0, k_lo = 3.0;
    std::uint64_t seed = 0;
};

Grid darcy_grid(int n);

/// Inputs k, x, y; target u. The source f is identically 1.
Dataset gen_darcy(const DarcyOptions& opts);

// ---------------------------------------------------------------------------

/// target += level * std(target) * N(0, 1) per point, with per-sample std.
/// Inputs are untouched; level 0 returns the dataset bit-exactly.
Dataset add_noise(const Dataset& ds, double level, std::uint64_t seed);

/// Every factor-th point; non-periodic axes keep both endpoints. Throws
/// std::invalid_argument unless n (periodic) or n-1 (non-periodic) is
/// divisible by factor on every axis.
Dataset downsample(const Dataset& ds, int factor);
Grid downsample(const Grid& grid, int factor);
std::vector<double> downsample(const Grid& grid, std::span<const double> field, int factor);

/// Container: "SYMFLOW1", u64 LE header length, JSON header, f64 LE payload.
/// Shared with model checkpoints.
void write_container(const std::filesystem::path& path, const nlohmann::json& header, std::span<const double> payload);
/// Throws std::runtime_error on a bad magic, header or payload size.
std::pair<nlohmann::json, std::vector<double>> read_container(const std::filesystem::path& path);

nlohmann::json grid_to_json(const Grid& grid);
Grid grid_from_json(const nlohmann::json& j);

void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

}  // namespace symflow
