#pragma once

// Loss assembly from symbolic prolongations, training, metrics and the
// experiment grids (zero-shot resolution, generator and noise ablations).
//
// Objective per batch, every term a mean over samples:
//   w_data * relL2(u, y) + w_aux * aux(u) + w_residual * |R[u]|^2
//     + (gamma / G) * sum_i |S_i[u]|^2
// where aux is the initial-slice MSE (Burgers) or the boundary MSE against
// 0 (Darcy), R is the residual and S_i are the compiled prolongation actions
// of the G selected generators. PDE-derived terms average over the interior
// mask. Terms that are provably zero or carry weight 0 never touch the
// gradient, so such runs are bit-identical to the run without them.

#include "symflow/catalog.hpp"
#include "symflow/datasets.hpp"
#include "symflow/grid.hpp"
#include "symflow/operator_net.hpp"
#include "symflow/symmetry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace symflow {

enum class Method { Baseline, PointSymmetry, EvolutionarySymmetry };
std::string to_string(Method m);
/// Accepts "baseline", "point_symmetry", "evolutionary_symmetry".
Method method_from_string(const std::string& s);

struct LossConfig {
    Method method = Method::Baseline;
    double gamma = 0.1;
    std::vector<std::string> generators;
    bool include_residual = false;
    double w_data = 1.0;
    double w_aux = 1.0;  // initial slice (Burgers) or boundary (Darcy)
    double w_residual = 1.0;

    /// Baseline uses no generators; Burgers symmetry methods use v1..v5 and
    /// Darcy symmetry methods the linear subalgebra. The residual term is on
    /// for Darcy and off for Burgers.
    static LossConfig defaults(const std::string& pde, Method m);
    /// Throws std::invalid_argument on a negative weight or a baseline with
    /// generators.
    void validate() const;
    nlohmann::json to_json() const;
    static LossConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 5;
    double lr = 3e-3;
    double lr_decay = 0.5;  // multiplied in every decay_every epochs
    int decay_every = 25;
    std::uint64_t seed = 0;
    int n_train = 25;
    int n_test = 25;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

enum class TermKind { Data, Aux, Residual, Symmetry };
std::string to_string(TermKind k);

/// One compiled PDE-derived objective term.
struct LossTerm {
    std::string name;       // "residual" or "sym:<generator>"
    TermKind kind = TermKind::Residual;
    std::string generator;  // empty for the residual
    Expr expr;              // normalized symbolic action
    std::shared_ptr<const CompiledExpr> compiled;
    double weight = 0.0;
    bool provably_zero = false;
    /// Set when expr = c * residual with c free of jet variables; c is then
    /// compiled for the per-epoch pointwise check.
    std::optional<Expr> residual_cofactor;
    std::shared_ptr<const CompiledExpr> cofactor_compiled;
};

/// Generator by name among the catalog fields of `pde`, including the
/// instantiated Darcy fields. Throws std::invalid_argument if absent.
GeneralizedVectorField find_training_generator(const PDESystem& pde, const std::string& name);

/// Residual term (if enabled) followed by one term per selected generator,
/// weighted gamma / (number of generators). Throws std::invalid_argument for
/// unknown generators, formal fields and orders the scheme cannot support.
std::vector<LossTerm> build_loss_terms(const PDESystem& pde, const LossConfig& cfg, const Grid& grid,
                                       const DiffScheme& scheme, const std::map<std::string, double>& params);

/// is_symmetry over the selected generators, in the field kind the method
/// trains with.
std::vector<SymmetryReport> verify_generators(const PDESystem& pde, const LossConfig& cfg);

/// How a dataset binds to the PDE: output channel, constant slots, scheme and
/// parameter values.
struct PdeBinding {
    PDESystem pde;
    std::string output = "u";
    std::map<std::string, double> constants;  // e.g. f = 1 for Darcy
    std::map<std::string, double> params;     // e.g. nu for Burgers
    DiffScheme scheme;
};
/// Throws std::invalid_argument on an unknown PDE name.
PdeBinding binding_for(const Dataset& ds);

/// Per-channel affine normalization fitted on a training set.
struct Normalizer {
    std::vector<double> in_mean, in_std;
    double out_mean = 0.0, out_std = 1.0;

    static Normalizer fit(const Dataset& ds);
    nlohmann::json to_json() const;
    static Normalizer from_json(const nlohmann::json& j);
};

struct Model {
    OperatorNet net;
    Normalizer norm;

    /// Normalized inputs of the listed samples as a (B, C, n1, n2) tensor.
    Tensor inputs(const Dataset& ds, const std::vector<std::size_t>& idx) const;
    /// Physical-unit predictions, one field per sample.
    std::vector<std::vector<double>> predict(const Dataset& ds) const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;
    static Model load(const std::filesystem::path& path, nlohmann::json* extra = nullptr);
};

struct TermRecord {
    std::string name;
    double weight = 0.0;
    double value = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    std::vector<TermRecord> terms;
    double total = 0.0;  // mean of batch objectives
    /// Max over cofactor-checked terms of max|S - c R| / max(1, max|c R|) on
    /// the first batch; 0 when no term is checked.
    double cofactor_deviation = 0.0;
};

struct History {
    std::vector<EpochRecord> epochs;

    /// epoch,term,weight,value with a trailing "total" row per epoch.
    std::string to_csv() const;
};

/// Thrown on a non-finite objective; what() carries the epoch dump.
struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    Model model;
    History history;
    std::vector<LossTerm> terms;
};

/// Deterministic per (configs, dataset). Throws std::invalid_argument when
/// the dataset does not bind to the PDE or the net's channels.
TrainResult train(const Dataset& dataset, const LossConfig& loss, const TrainConfig& tc, NetConfig net);

struct SplitMetrics {
    double l2 = 0.0;         // mean per-sample relative L2
    double eqn_error = 0.0;  // mean per-sample interior residual RMS
};

/// Metrics of given predictions against a dataset.
SplitMetrics evaluate_predictions(const Dataset& ds, const std::vector<std::vector<double>>& predictions);
SplitMetrics evaluate(const Model& model, const Dataset& ds);

struct ResolutionMetrics {
    std::string grid;
    SplitMetrics test;
};

struct MetricsReport {
    SplitMetrics train, test;
    double generalization_gap = 0.0;  // test.l2 - train.l2
    double stability_gap = 0.0;       // test.eqn_error - train.eqn_error
    std::vector<ResolutionMetrics> resolutions;
    nlohmann::json config;
    History history;
    std::size_t parameter_count = 0;
    double flops_per_sample = 0.0;
    bool verify_bypassed = false;

    /// Versioned summary; contains no timestamps.
    nlohmann::json to_json() const;
};

/// One desk experiment: data generation, optional noise, training, metrics.
struct ExperimentConfig {
    std::string pde = "burgers";
    int n1 = 32, n2 = 25;  // Burgers nx x nt, Darcy n x n
    std::uint64_t data_seed = 0;
    double noise = 0.0;
    double nu = 0.01;
    LossConfig loss;
    TrainConfig train;
    NetConfig net;
    std::vector<int> resolutions;  // first-axis sizes for zero-shot evaluation
    bool bypass_verify = false;

    static ExperimentConfig desk(const std::string& pde, Method m);
    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Training split seed stream 10, test split 11, both from data_seed.
Dataset experiment_dataset(const ExperimentConfig& cfg, bool test_split, int n1, int n_samples);
/// The second-axis size paired with first-axis size n1 (Burgers keeps the
/// t/x point ratio, Darcy is square).
int paired_size(const ExperimentConfig& cfg, int n1);

struct ExperimentResult {
    MetricsReport report;
    Model model;
};

/// Throws std::runtime_error when a symmetry method's generators fail
/// verification and bypass_verify is off.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
/// Same, on given splits; cfg.noise is not applied.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& train_ds, const Dataset& test_ds);
/// Zero-shot metrics of `model` on freshly generated test sets.
std::vector<ResolutionMetrics> evaluate_resolutions(const Model& model, const ExperimentConfig& cfg,
                                                    const std::vector<int>& resolutions);

struct AblationRow {
    std::string label;
    std::vector<std::string> generators;
    double noise = 0.0;
    Method method = Method::Baseline;
    MetricsReport report;
};

/// Rows for generator prefixes of size 0..|order|, all with cfg's seeds.
std::vector<AblationRow> ablate_generators(const ExperimentConfig& cfg, const std::vector<std::string>& order,
                                           int threads = 1);
/// Rows level-major, method-minor.
std::vector<AblationRow> ablate_noise(const ExperimentConfig& cfg, const std::vector<double>& levels,
                                      const std::vector<Method>& methods, int threads = 1);
/// label,generators,noise,method,train_l2,test_l2,train_eqn,test_eqn,gen_gap,stab_gap
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace symflow
