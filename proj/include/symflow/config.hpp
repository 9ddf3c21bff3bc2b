#pragma once

// Run configuration files for the command-line tool.
//
// Grammar (INI): blank lines and lines starting with '#' or ';' are ignored;
// "[section]" opens a section; every other line is "key = value". Keys before
// the first section are top-level. Lists are comma-separated. Unknown
// sections, unknown keys and duplicate keys are errors.
//
//   pde = burgers | darcy        seed = <u64>        out_dir = <path>
//   [data]   grid = AxB, seed, noise, nu, n_train, n_test, train_path, test_path
//   [loss]   method, gamma, generators, include_residual, w_data, w_aux,
//            w_residual, bypass_verify
//   [train]  epochs, batch_size, lr, lr_decay, decay_every, seed
//   [net]    width, blocks, modes1, modes2, head_width
//   [eval]   resolutions
//   [ablate] noise_levels, methods, order, threads
//
// Missing keys take the desk defaults for the chosen pde and method; data and
// train seeds default to the top-level seed.

#include "symflow/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace symflow {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "runs/default";
    ExperimentConfig experiment;
    std::string train_path, test_path;  // empty: generate
    std::vector<double> noise_levels{0.0, 0.01, 0.05, 0.1};
    std::vector<Method> ablate_methods{Method::EvolutionarySymmetry, Method::Baseline};
    std::vector<std::string> ablate_order;
    int threads = 1;

    /// Throws ConfigError with the origin and offending key or line.
    static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
    static RunConfig load(const std::filesystem::path& path);
    /// Every key, defaults included, in the grammar above; parse(to_text())
    /// reproduces the configuration.
    std::string to_text() const;
};

}  // namespace symflow
