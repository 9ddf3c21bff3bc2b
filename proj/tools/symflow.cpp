// symflow: symbolic tools, data generation, training, evaluation, ablations.
// Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.

#include "symflow/catalog.hpp"
#include "symflow/config.hpp"
#include "symflow/datasets.hpp"
#include "symflow/symmetry.hpp"
#include "symflow/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace symflow;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class F>
auto as_usage(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    } catch (const ParseError& e) {
        throw UsageError(e.what());
    }
}

PDESystem pde_arg(const std::string& name, std::optional<double> nu) {
    return as_usage([&] {
        if (name == "burgers") return burgers(nu);
        if (nu) throw std::invalid_argument("--nu applies to burgers only");
        return pde_by_name(name);
    });
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

std::string derivative_name(const MultiIndex& J, const VarSpace& space) {
    std::string s;
    for (std::size_t i = 0; i < J.counts.size(); ++i) s.append(static_cast<std::size_t>(J.counts[i]), space.independent()[i][0]);
    return s;
}

/// "c * D_J[R0] + ..." or std::nullopt when no cofactor witness was found.
std::optional<std::string> witness_text(const Expr& target, const PDESystem& pde, const std::vector<std::string>& harmonic) {
    if (target.is_zero()) return "0 (identically zero)";
    CofactorOptions opts;
    opts.harmonic = harmonic;
    const auto dec = cofactor_decompose(target, pde, opts);
    if (!dec) return std::nullopt;
    std::string out;
    for (const auto& [key, c] : dec->coefficients) {
        if (!out.empty()) out += " + ";
        const std::string r = "R" + std::to_string(key.residual);
        out += "(" + print(c, pde.space) + ") * " + (key.J.empty() ? r : "D_" + derivative_name(key.J, pde.space) + "[" + r + "]");
    }
    return out;
}

json witness_json(const std::optional<CofactorDecomposition>& dec, const VarSpace& space) {
    if (!dec) return nullptr;
    json out = json::array();
    for (const auto& [key, c] : dec->coefficients)
        out.push_back({{"residual", key.residual}, {"D", derivative_name(key.J, space)}, {"coefficient", print(c, space)}});
    return out;
}

GeneralizedVectorField custom_field(const PDESystem& pde, const std::string& name, const std::string& xi,
                                    const std::string& phi) {
    return as_usage([&] {
        GeneralizedVectorField v{pde.space, {}, {}, name, {}};
        for (const auto& s : split(xi, ';')) v.xi.push_back(parse(s, pde.space));
        for (const auto& s : split(phi, ';')) v.phi.push_back(parse(s, pde.space));
        v.validate();
        return v;
    });
}

int cmd_prolong(const std::string& pde_name, const std::string& gen, bool evolutionary, std::optional<double> nu) {
    const PDESystem pde = pde_arg(pde_name, nu);
    const auto v = as_usage([&] { return find_training_generator(pde, gen); });
    const Expr& delta = pde.residuals.at(0);
    Expr action = evolutionary ? prolong_apply_evolutionary(characteristic(v), delta) : prolong_apply_point(v, delta);
    if (!v.harmonic.empty()) action = harmonic_reduce(action, v.harmonic);
    std::cout << print(action, pde.space) << '\n';
    if (const auto w = witness_text(action, pde, v.harmonic))
        std::cout << "witness: " << *w << '\n';
    else
        std::cout << "witness: none found (not shown to vanish on-shell)\n";
    return 0;
}

int cmd_verify(const std::string& pde_name, bool evolutionary, std::optional<double> nu, const std::string& field,
               const std::string& xi, const std::string& phi) {
    const PDESystem pde = pde_arg(pde_name, nu);
    std::vector<GeneralizedVectorField> fields;
    if (!field.empty()) {
        fields.push_back(custom_field(pde, field, xi, phi));
    } else {
        fields = pde.generators;
        if (pde.name == "darcy")
            for (auto& v : darcy_instantiated_generators()) fields.push_back(std::move(v));
    }
    json records = json::array();
    bool ok = true;
    for (const auto& v : fields) {
        const SymmetryReport r = evolutionary ? is_symmetry(characteristic(v), pde) : is_symmetry(v, pde);
        ok = ok && r.status == SymmetryStatus::Certified;
        json targets = json::array(), witnesses = json::array();
        for (const auto& t : r.targets) targets.push_back(print(t, pde.space));
        for (const auto& w : r.witnesses) witnesses.push_back(witness_json(w, pde.space));
        records.push_back({{"field", r.field},
                           {"kind", evolutionary ? "evolutionary" : "point"},
                           {"status", to_string(r.status)},
                           {"detail", r.detail},
                           {"targets", targets},
                           {"witnesses", witnesses}});
    }
    std::cout << json{{"pde", pde.name}, {"all_certified", ok}, {"records", records}}.dump(2) << '\n';
    return ok ? 0 : 1;
}

std::pair<int, int> grid_arg(const std::string& s) {
    const auto parts = split(s, 'x');
    try {
        std::size_t p0 = 0, p1 = 0;
        if (parts.size() == 2) {
            const int a = std::stoi(parts[0], &p0), b = std::stoi(parts[1], &p1);
            if (p0 == parts[0].size() && p1 == parts[1].size()) return {a, b};
        }
    } catch (const std::exception&) {
    }
    throw UsageError("--grid expects AxB, got '" + s + "'");
}

int cmd_gen_data(const std::string& pde, int n, const std::string& grid, std::uint64_t seed, double noise,
                 std::optional<double> nu, const std::string& out) {
    const auto [a, b] = grid_arg(grid);
    if (noise < 0) throw UsageError("--noise must be >= 0");
    Dataset ds;
    if (pde == "burgers") {
        BurgersOptions o;
        o.n_samples = n;
        o.nx = a;
        o.nt = b;
        o.seed = seed;
        if (nu) o.nu = *nu;
        ds = as_usage([&] { return gen_burgers(o); });
    } else if (pde == "darcy") {
        if (a != b) throw UsageError("darcy grids are square");
        if (nu) throw UsageError("--nu applies to burgers only");
        DarcyOptions o;
        o.n_samples = n;
        o.n = a;
        o.seed = seed;
        ds = as_usage([&] { return gen_darcy(o); });
    } else {
        throw UsageError("unknown PDE '" + pde + "' (expected burgers or darcy)");
    }
    if (noise > 0) ds = add_noise(ds, noise, derive_seed(seed, 12, 0));
    save(ds, out);
    std::cout << "wrote " << ds.samples.size() << " " << ds.pde << " samples on " << ds.grid.describe() << " to " << out
              << '\n';
    return 0;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

RunConfig load_config(const std::string& path) {
    RunConfig c = RunConfig::load(path);
    std::filesystem::create_directories(c.out_dir);
    write_text(c.out_dir / "resolved.cfg", c.to_text());
    return c;
}

/// Training and test splits named in the config, or generated from it.
std::pair<Dataset, Dataset> splits(const RunConfig& c) {
    const ExperimentConfig& x = c.experiment;
    Dataset tr, te;
    if (c.train_path.empty()) {
        tr = experiment_dataset(x, false, x.n1, x.train.n_train);
        if (x.noise > 0) tr = add_noise(tr, x.noise, derive_seed(x.data_seed, 12, 0));
    } else {
        tr = load(c.train_path);
    }
    te = c.test_path.empty() ? experiment_dataset(x, true, x.n1, x.train.n_test) : load(c.test_path);
    return {std::move(tr), std::move(te)};
}

int cmd_train(const std::string& path, bool bypass) {
    RunConfig c = load_config(path);
    if (bypass) {
        c.experiment.bypass_verify = true;
        write_text(c.out_dir / "resolved.cfg", c.to_text());
    }
    const auto [tr, te] = splits(c);
    const ExperimentResult r = run_experiment(c.experiment, tr, te);
    write_text(c.out_dir / "metrics.csv", r.report.history.to_csv());
    write_text(c.out_dir / "summary.json", r.report.to_json().dump(2) + "\n");
    r.model.save(c.out_dir / "model.bin", {{"config", c.experiment.to_json()}});
    std::cout << c.experiment.pde << " " << to_string(c.experiment.loss.method) << ": train l2 " << r.report.train.l2
              << ", test l2 " << r.report.test.l2 << ", test eqn error " << r.report.test.eqn_error << "\nwrote "
              << (c.out_dir / "summary.json").string() << '\n';
    return 0;
}

int cmd_eval(const std::string& path, const std::string& checkpoint, const std::string& resolutions) {
    RunConfig c = load_config(path);
    std::vector<int> res;
    if (!resolutions.empty())
        for (const auto& s : split(resolutions, ',')) {
            std::size_t p = 0;
            int v = 0;
            try {
                v = std::stoi(s, &p);
            } catch (const std::exception&) {
                p = 0;
            }
            if (p != s.size() || v < 4) throw UsageError("--resolutions expects sizes >= 4, got '" + resolutions + "'");
            res.push_back(v);
        }
    const auto ckpt = checkpoint.empty() ? c.out_dir / "model.bin" : std::filesystem::path(checkpoint);
    const Model model = Model::load(ckpt);
    const auto [tr, te] = splits(c);
    MetricsReport rep;
    rep.train = evaluate(model, tr);
    rep.test = evaluate(model, te);
    rep.generalization_gap = rep.test.l2 - rep.train.l2;
    rep.stability_gap = rep.test.eqn_error - rep.train.eqn_error;
    rep.resolutions = evaluate_resolutions(model, c.experiment, res);
    rep.config = c.experiment.to_json();
    rep.parameter_count = model.net.parameter_count();
    rep.flops_per_sample = model.net.flops_per_sample(c.experiment.n1, c.experiment.n2);
    json j = rep.to_json();
    j["kind"] = "evaluation";
    j["checkpoint"] = ckpt.filename().string();
    for (const char* k : {"epochs", "final_terms", "max_cofactor_deviation", "verify_bypassed"}) j.erase(k);
    write_text(c.out_dir / "eval.json", j.dump(2) + "\n");
    std::cout << "test l2 " << rep.test.l2 << ", test eqn error " << rep.test.eqn_error << '\n';
    for (const auto& r : rep.resolutions)
        std::cout << r.grid << ": l2 " << r.test.l2 << ", eqn error " << r.test.eqn_error << '\n';
    return 0;
}

int cmd_ablate(const std::string& path, const std::string& kind) {
    const RunConfig c = load_config(path);
    std::vector<AblationRow> rows;
    if (kind == "noise") {
        rows = ablate_noise(c.experiment, c.noise_levels, c.ablate_methods, c.threads);
    } else {
        if (c.experiment.loss.method == Method::Baseline) throw UsageError("generator ablation needs a symmetry method");
        rows = ablate_generators(c.experiment, c.ablate_order, c.threads);
    }
    write_text(c.out_dir / ("ablate_" + kind + ".csv"), ablation_csv(rows));
    write_text(c.out_dir / ("ablate_" + kind + ".json"), ablation_json(rows).dump(2) + "\n");
    std::cout << ablation_csv(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"symflow: Lie-symmetry regularized neural operators"};
    app.require_subcommand(1);

    std::string pde, gen, field, xi, phi, out, config, checkpoint, resolutions, kind, grid;
    bool evolutionary = false, bypass = false;
    std::optional<double> nu;
    int n = 1;
    std::uint64_t seed = 0;
    double noise = 0;

    auto* prolong = app.add_subcommand("prolong", "print a prolongation action and its cofactor witness");
    prolong->add_option("pde", pde, "burgers or darcy")->required();
    prolong->add_option("generator", gen, "catalog generator name")->required();
    prolong->add_flag("--evolutionary", evolutionary, "act with the evolutionary representative");
    prolong->add_option("--nu", nu, "bind the Burgers viscosity");

    auto* verify = app.add_subcommand("verify", "certify catalog generators; exit 1 unless all are Certified");
    verify->add_option("pde", pde, "burgers or darcy")->required();
    verify->add_flag("--evolutionary", evolutionary, "check the evolutionary representatives");
    verify->add_option("--nu", nu, "bind the Burgers viscosity");
    auto* field_opt = verify->add_option("--field", field, "check this field instead of the catalog");
    verify->add_option("--xi", xi, "xi coefficients, ';'-separated")->needs(field_opt);
    verify->add_option("--phi", phi, "phi coefficients, ';'-separated")->needs(field_opt);

    auto* gen_data = app.add_subcommand("gen-data", "generate a dataset file");
    gen_data->add_option("--pde", pde, "burgers or darcy")->required();
    gen_data->add_option("--n", n, "sample count")->required()->check(CLI::PositiveNumber);
    gen_data->add_option("--grid", grid, "AxB: nx x nt (burgers) or n x n (darcy)")->required();
    gen_data->add_option("--seed", seed, "master seed");
    gen_data->add_option("--noise", noise, "relative target noise level");
    gen_data->add_option("--nu", nu, "Burgers viscosity");
    gen_data->add_option("--out", out, "output path")->required();

    auto* train_cmd = app.add_subcommand("train", "train one configuration");
    train_cmd->add_option("config", config, "run config file")->required();
    train_cmd->add_flag("--bypass-verify", bypass, "train even if generator verification fails (recorded)");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained checkpoint");
    eval_cmd->add_option("config", config, "run config file")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint path (default: <out_dir>/model.bin)");
    eval_cmd->add_option("--resolutions", resolutions, "comma-separated zero-shot first-axis sizes");

    auto* ablate = app.add_subcommand("ablate", "run a noise or generator ablation");
    ablate->add_option("config", config, "run config file")->required();
    ablate->add_option("--kind", kind, "noise or generators")->required()->check(CLI::IsMember({"noise", "generators"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*prolong) return cmd_prolong(pde, gen, evolutionary, nu);
        if (*verify) return cmd_verify(pde, evolutionary, nu, field, xi, phi);
        if (*gen_data) return cmd_gen_data(pde, n, grid, seed, noise, nu, out);
        if (*train_cmd) return cmd_train(config, bypass);
        if (*eval_cmd) return cmd_eval(config, checkpoint, resolutions);
        if (*ablate) return cmd_ablate(config, kind);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
