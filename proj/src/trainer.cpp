#include "symflow/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace symflow {

namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool is_burgers(const std::string& pde) { return pde == "burgers"; }

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::Baseline: return "baseline";
        case Method::PointSymmetry: return "point_symmetry";
        case Method::EvolutionarySymmetry: return "evolutionary_symmetry";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "baseline") return Method::Baseline;
    if (s == "point_symmetry") return Method::PointSymmetry;
    if (s == "evolutionary_symmetry") return Method::EvolutionarySymmetry;
    throw std::invalid_argument("unknown method '" + s + "' (expected baseline, point_symmetry or evolutionary_symmetry)");
}

std::string to_string(TermKind k) {
    switch (k) {
        case TermKind::Data: return "data";
        case TermKind::Aux: return "aux";
        case TermKind::Residual: return "residual";
        case TermKind::Symmetry: return "symmetry";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Configs

LossConfig LossConfig::defaults(const std::string& pde, Method m) {
    LossConfig c;
    c.method = m;
    c.include_residual = !is_burgers(pde);
    if (m != Method::Baseline) {
        if (is_burgers(pde))
            c.generators = {"v1", "v2", "v3", "v4", "v5"};
        else
            c.generators = {"v2_h=x", "v2_h=y"};
    }
    return c;
}

void LossConfig::validate() const {
    require(gamma >= 0 && w_data >= 0 && w_aux >= 0 && w_residual >= 0, "loss weights must be >= 0");
    require(std::isfinite(gamma) && std::isfinite(w_data) && std::isfinite(w_aux) && std::isfinite(w_residual),
            "loss weights must be finite");
    require(method != Method::Baseline || generators.empty(), "baseline method takes no generators");
}

json LossConfig::to_json() const {
    return {{"method", to_string(method)}, {"gamma", gamma},       {"generators", generators},
            {"include_residual", include_residual}, {"w_data", w_data}, {"w_aux", w_aux},
            {"w_residual", w_residual}};
}

LossConfig LossConfig::from_json(const json& j) {
    LossConfig c;
    c.method = method_from_string(j.at("method").get<std::string>());
    c.gamma = j.at("gamma").get<double>();
    c.generators = j.at("generators").get<std::vector<std::string>>();
    c.include_residual = j.at("include_residual").get<bool>();
    c.w_data = j.at("w_data").get<double>();
    c.w_aux = j.at("w_aux").get<double>();
    c.w_residual = j.at("w_residual").get<double>();
    c.validate();
    return c;
}

void TrainConfig::validate() const {
    require(epochs > 0 && batch_size > 0 && n_train > 0 && n_test > 0 && decay_every > 0,
            "train counts must be positive");
    require(lr > 0 && std::isfinite(lr), "learning rate must be positive");
    require(lr_decay > 0 && lr_decay <= 1, "lr_decay must lie in (0, 1]");
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs}, {"batch_size", batch_size}, {"lr", lr},           {"lr_decay", lr_decay},
            {"decay_every", decay_every}, {"seed", seed},   {"n_train", n_train}, {"n_test", n_test}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lr = j.at("lr").get<double>();
    c.lr_decay = j.at("lr_decay").get<double>();
    c.decay_every = j.at("decay_every").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.n_train = j.at("n_train").get<int>();
    c.n_test = j.at("n_test").get<int>();
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Loss terms

GeneralizedVectorField find_training_generator(const PDESystem& pde, const std::string& name) {
    if (const auto* v = pde.find_generator(name)) return *v;
    if (pde.name == "darcy")
        for (const auto& v : darcy_instantiated_generators())
            if (v.name == name) return v;
    std::string known;
    for (const auto& v : pde.generators) known += (known.empty() ? "" : ", ") + v.name;
    throw std::invalid_argument("unknown generator '" + name + "' for " + pde.name + " (known: " + known + ")");
}

namespace {

/// c with e = c * residual_0 and c free of jet variables, if one exists.
std::optional<Expr> residual_multiple(const Expr& e, const PDESystem& pde) {
    if (e.is_zero() || pde.residuals.size() != 1) return std::nullopt;
    CofactorOptions opts;
    opts.max_order = 0;
    auto dec = cofactor_decompose(e, pde, opts);
    if (!dec || !dec->only_order_zero() || dec->coefficients.size() != 1) return std::nullopt;
    const Expr& c = dec->coefficients.begin()->second;
    for (const auto& coord : free_coords(c))
        if (!coord.is_independent()) return std::nullopt;
    for (const auto& [m, coef] : c.terms())
        for (const auto& f : m.factors)
            if (std::holds_alternative<FuncAtom>(f.atom)) return std::nullopt;
    return c;
}

}  // namespace

std::vector<LossTerm> build_loss_terms(const PDESystem& pde, const LossConfig& cfg, const Grid& grid,
                                       const DiffScheme& scheme, const std::map<std::string, double>& params) {
    cfg.validate();
    require(pde.residuals.size() == 1, "build_loss_terms: expected a single residual");
    const Expr& residual = pde.residuals[0];
    std::vector<LossTerm> out;
    if (cfg.include_residual) {
        LossTerm t;
        t.name = "residual";
        t.kind = TermKind::Residual;
        t.expr = residual;
        t.compiled = std::make_shared<CompiledExpr>(residual, grid, scheme, pde.space, params);
        t.weight = cfg.w_residual;
        out.push_back(std::move(t));
    }
    if (cfg.method == Method::Baseline) return out;
    const double w = cfg.generators.empty() ? 0.0 : cfg.gamma / static_cast<double>(cfg.generators.size());
    for (const auto& name : cfg.generators) {
        const auto v = find_training_generator(pde, name);
        require(v.harmonic.empty(), "generator '" + name + "' has formal functions; pick an instantiated field");
        LossTerm t;
        t.name = "sym:" + name;
        t.kind = TermKind::Symmetry;
        t.generator = name;
        t.expr = cfg.method == Method::PointSymmetry ? prolong_apply_point(v, residual)
                                                     : prolong_apply_evolutionary(characteristic(v), residual);
        t.provably_zero = t.expr.is_zero();
        t.weight = w;
        if (max_order(t.expr) > kMaxTotalOrder)
            throw std::invalid_argument("term " + t.name + " needs derivative order " + std::to_string(max_order(t.expr)) +
                                        " > " + std::to_string(kMaxTotalOrder));
        t.compiled = std::make_shared<CompiledExpr>(t.expr, grid, scheme, pde.space, params);
        if (auto c = residual_multiple(t.expr, pde)) {
            t.residual_cofactor = *c;
            t.cofactor_compiled = std::make_shared<CompiledExpr>(*c, grid, scheme, pde.space, params);
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<SymmetryReport> verify_generators(const PDESystem& pde, const LossConfig& cfg) {
    std::vector<SymmetryReport> out;
    for (const auto& name : cfg.generators) {
        const auto v = find_training_generator(pde, name);
        CofactorOptions opts;
        opts.harmonic = v.harmonic;
        if (cfg.method == Method::EvolutionarySymmetry)
            out.push_back(is_symmetry(characteristic(v), pde, opts));
        else
            out.push_back(is_symmetry(v, pde, opts));
    }
    return out;
}

PdeBinding binding_for(const Dataset& ds) {
    if (ds.pde != "burgers" && ds.pde != "darcy") throw std::invalid_argument("unknown PDE '" + ds.pde + "'");
    const bool b = is_burgers(ds.pde);
    const double nu = ds.meta.value("nu", 0.01);
    PdeBinding out{b ? burgers(nu) : darcy(),
                   "u",
                   b ? std::map<std::string, double>{} : std::map<std::string, double>{{"f", ds.meta.value("f", 1.0)}},
                   b ? std::map<std::string, double>{{"nu", nu}} : std::map<std::string, double>{},
                   b ? DiffScheme::burgers() : DiffScheme::darcy()};
    require(ds.grid.matches(out.pde.space), "dataset grid " + ds.grid.describe() + " does not match " + ds.pde);
    return out;
}

// ---------------------------------------------------------------------------
// Normalizer and model

Normalizer Normalizer::fit(const Dataset& ds) {
    require(!ds.samples.empty(), "Normalizer::fit: empty dataset");
    Normalizer n;
    const std::size_t C = ds.input_names.size();
    const auto stats = [](auto&& each) {
        double s = 0, s2 = 0, cnt = 0;
        each([&](double v) {
            s += v;
            cnt += 1;
        });
        const double mean = s / cnt;
        each([&](double v) { s2 += (v - mean) * (v - mean); });
        const double sd = std::sqrt(s2 / cnt);
        return std::pair{mean, sd > 1e-12 ? sd : 1.0};
    };
    for (std::size_t c = 0; c < C; ++c) {
        auto [m, s] = stats([&](auto&& f) {
            for (const auto& smp : ds.samples)
                for (double v : smp.inputs[c].values) f(v);
        });
        n.in_mean.push_back(m);
        n.in_std.push_back(s);
    }
    std::tie(n.out_mean, n.out_std) = stats([&](auto&& f) {
        for (const auto& smp : ds.samples)
            for (double v : smp.target.values) f(v);
    });
    return n;
}

json Normalizer::to_json() const {
    return {{"in_mean", in_mean}, {"in_std", in_std}, {"out_mean", out_mean}, {"out_std", out_std}};
}

Normalizer Normalizer::from_json(const json& j) {
    Normalizer n;
    n.in_mean = j.at("in_mean").get<std::vector<double>>();
    n.in_std = j.at("in_std").get<std::vector<double>>();
    n.out_mean = j.at("out_mean").get<double>();
    n.out_std = j.at("out_std").get<double>();
    return n;
}

Tensor Model::inputs(const Dataset& ds, const std::vector<std::size_t>& idx) const {
    const std::size_t C = ds.input_names.size();
    require(C == norm.in_mean.size() && static_cast<int>(C) == net.config().in_channels,
            "model expects " + std::to_string(net.config().in_channels) + " input channels");
    require(ds.grid.rank() == 2, "model inputs need a 2D grid");
    Tensor x(static_cast<int>(idx.size()), static_cast<int>(C), ds.grid.axis(0).n, ds.grid.axis(1).n);
    for (std::size_t b = 0; b < idx.size(); ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const auto& src = ds.samples.at(idx[b]).inputs[c].values;
            double* dst = x.channel(static_cast<int>(b), static_cast<int>(c));
            for (std::size_t p = 0; p < src.size(); ++p) dst[p] = (src[p] - norm.in_mean[c]) / norm.in_std[c];
        }
    return x;
}

std::vector<std::vector<double>> Model::predict(const Dataset& ds) const {
    std::vector<std::vector<double>> out;
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
        const Tensor y = net.forward(inputs(ds, {s}));
        std::vector<double> u(y.data.size());
        for (std::size_t p = 0; p < u.size(); ++p) u[p] = y.data[p] * norm.out_std + norm.out_mean;
        out.push_back(std::move(u));
    }
    return out;
}

void Model::save(const std::filesystem::path& path, const json& extra) const {
    json e = extra;
    e["normalizer"] = norm.to_json();
    net.save(path, e);
}

Model Model::load(const std::filesystem::path& path, json* extra) {
    json e;
    OperatorNet net = OperatorNet::load(path, &e);
    if (!e.contains("normalizer")) throw std::runtime_error("checkpoint " + path.string() + " has no normalizer");
    Model m{std::move(net), Normalizer::from_json(e.at("normalizer"))};
    if (extra) *extra = std::move(e);
    return m;
}

// ---------------------------------------------------------------------------
// Objective

std::string History::to_csv() const {
    std::ostringstream os;
    os << "epoch,term,weight,value\n";
    for (const auto& e : epochs) {
        for (const auto& t : e.terms) os << e.epoch << ',' << t.name << ',' << fmt(t.weight) << ',' << fmt(t.value) << '\n';
        os << e.epoch << ",total,1," << fmt(e.total) << '\n';
    }
    return os.str();
}

namespace {

/// Binds dataset fields to compiled-expression slots.
class SlotBinder {
  public:
    SlotBinder(const Dataset& ds, const PdeBinding& b) : ds_(ds), output_(b.output) {
        for (const auto& [name, v] : b.constants) constants_[name] = std::vector<double>(ds.grid.size(), v);
    }

    std::vector<std::span<const double>> bind(const CompiledExpr& e, std::size_t sample,
                                              std::span<const double> prediction, int* output_slot) const {
        std::vector<std::span<const double>> spans;
        if (output_slot) *output_slot = -1;
        for (std::size_t s = 0; s < e.slots().size(); ++s) {
            const auto& name = e.slots()[s];
            if (name == output_) {
                spans.push_back(prediction);
                if (output_slot) *output_slot = static_cast<int>(s);
            } else if (auto it = constants_.find(name); it != constants_.end()) {
                spans.emplace_back(it->second);
            } else {
                spans.emplace_back(ds_.input(sample, name).values);
            }
        }
        return spans;
    }

  private:
    const Dataset& ds_;
    std::string output_;
    std::map<std::string, std::vector<double>> constants_;
};

class Objective {
  public:
    Objective(const Dataset& ds, const LossConfig& cfg, std::vector<LossTerm> terms)
        : ds_(ds), binding_(binding_for(ds)), binder_(ds, binding_), terms_(std::move(terms)), mask_(ds.grid.interior_mask()) {
        burgers_ = is_burgers(ds.pde);
        names_ = {"data", burgers_ ? "initial" : "boundary"};
        weights_ = {cfg.w_data, cfg.w_aux};
        for (const auto& t : terms_) {
            names_.push_back(t.name);
            weights_.push_back(t.weight);
        }
        n_interior_ = static_cast<double>(std::count(mask_.begin(), mask_.end(), 1));
        residual_ = std::make_unique<CompiledExpr>(binding_.pde.residuals[0], ds.grid, binding_.scheme,
                                                   binding_.pde.space, binding_.params);
        const Grid& g = ds.grid;
        const int n0 = g.axis(0).n, n1 = g.axis(1).n;
        for (int i = 0; i < n0; ++i)
            for (int j = 0; j < n1; ++j) {
                const bool edge = burgers_ ? j == 0 : (i == 0 || j == 0 || i == n0 - 1 || j == n1 - 1);
                if (edge) aux_points_.push_back(static_cast<std::size_t>(i) * n1 + j);
            }
    }

    const std::vector<std::string>& names() const { return names_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<LossTerm>& terms() const { return terms_; }

    /// Term values (batch means) and d(objective)/d(prediction) per sample.
    std::vector<double> eval(const std::vector<std::size_t>& idx, const std::vector<std::vector<double>>& pred,
                             std::vector<std::vector<double>>* grad) const {
        const double inv_b = 1.0 / static_cast<double>(idx.size());
        std::vector<double> values(names_.size(), 0.0);
        if (grad) grad->assign(idx.size(), std::vector<double>(ds_.grid.size(), 0.0));
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto& p = pred[b];
            const auto& y = ds_.samples[idx[b]].target.values;
            auto* g = grad ? &(*grad)[b] : nullptr;

            double nd = 0, ny = 0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                nd += (p[i] - y[i]) * (p[i] - y[i]);
                ny += y[i] * y[i];
            }
            nd = std::sqrt(nd);
            ny = std::sqrt(ny);
            values[0] += inv_b * nd / ny;
            if (g && weights_[0] != 0.0 && nd > 0.0) {
                const double s = weights_[0] * inv_b / (nd * ny);
                for (std::size_t i = 0; i < p.size(); ++i) (*g)[i] += s * (p[i] - y[i]);
            }

            const auto* ref = burgers_ ? &ds_.input(idx[b], "u0").values : nullptr;
            const double inv_a = 1.0 / static_cast<double>(aux_points_.size());
            double aux = 0;
            for (std::size_t q : aux_points_) {
                const double d = p[q] - (ref ? (*ref)[q] : 0.0);
                aux += d * d;
                if (g && weights_[1] != 0.0) (*g)[q] += weights_[1] * inv_b * inv_a * 2.0 * d;
            }
            values[1] += inv_b * aux * inv_a;

            for (std::size_t t = 0; t < terms_.size(); ++t) {
                const auto& term = terms_[t];
                if (term.provably_zero) continue;
                int out_slot = -1;
                const auto spans = binder_.bind(*term.compiled, idx[b], p, &out_slot);
                const auto r = term.compiled->eval(spans);
                double ms = 0;
                for (std::size_t i = 0; i < r.size(); ++i)
                    if (mask_[i]) ms += r[i] * r[i];
                values[2 + t] += inv_b * ms / n_interior_;
                if (!g || term.weight == 0.0 || out_slot < 0) continue;
                std::vector<double> cot(r.size(), 0.0);
                const double s = term.weight * inv_b * 2.0 / n_interior_;
                for (std::size_t i = 0; i < r.size(); ++i)
                    if (mask_[i]) cot[i] = s * r[i];
                const auto gu = term.compiled->adjoint_grad(spans, cot, out_slot);
                for (std::size_t i = 0; i < gu.size(); ++i) (*g)[i] += gu[i];
            }
        }
        return values;
    }

    double total(const std::vector<double>& values) const {
        double s = 0;
        for (std::size_t t = 0; t < values.size(); ++t) s += weights_[t] * values[t];
        return s;
    }

    /// max over cofactor terms of max|S - c R| / max(1, max|c R|) on the batch.
    double cofactor_deviation(const std::vector<std::size_t>& idx, const std::vector<std::vector<double>>& pred) const {
        double worst = 0;
        for (const auto& term : terms_) {
            if (!term.cofactor_compiled) continue;
            for (std::size_t b = 0; b < idx.size(); ++b) {
                const auto s = term.compiled->eval(binder_.bind(*term.compiled, idx[b], pred[b], nullptr));
                const auto r = residual_->eval(binder_.bind(*residual_, idx[b], pred[b], nullptr));
                const auto c = term.cofactor_compiled->eval(binder_.bind(*term.cofactor_compiled, idx[b], pred[b], nullptr));
                double num = 0, den = 1;
                for (std::size_t i = 0; i < s.size(); ++i) {
                    num = std::max(num, std::abs(s[i] - c[i] * r[i]));
                    den = std::max(den, std::abs(c[i] * r[i]));
                }
                worst = std::max(worst, num / den);
            }
        }
        return worst;
    }

  private:
    const Dataset& ds_;
    PdeBinding binding_;
    SlotBinder binder_;
    std::vector<LossTerm> terms_;
    std::vector<char> mask_;
    double n_interior_ = 1;
    bool burgers_ = false;
    std::vector<std::string> names_;
    std::vector<double> weights_;
    std::unique_ptr<CompiledExpr> residual_;
    std::vector<std::size_t> aux_points_;
};

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng() % i]);
    return p;
}

}  // namespace

TrainResult train(const Dataset& ds, const LossConfig& loss, const TrainConfig& tc, NetConfig net) {
    loss.validate();
    tc.validate();
    require(!ds.samples.empty(), "train: empty dataset");
    const PdeBinding binding = binding_for(ds);
    net.in_channels = static_cast<int>(ds.input_names.size());
    net.out_channels = 1;
    net.validate();

    auto terms = build_loss_terms(binding.pde, loss, ds.grid, binding.scheme, binding.params);
    Objective obj(ds, loss, terms);
    Model model{OperatorNet(net, derive_seed(tc.seed, 30, 0)), Normalizer::fit(ds)};
    AdamState adam;
    History hist;

    const std::size_t n = ds.samples.size();
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(tc.batch_size), n);
    const double os = model.norm.out_std, om = model.norm.out_mean;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = tc.lr * std::pow(tc.lr_decay, epoch / tc.decay_every);
        const auto order = shuffled(n, derive_seed(tc.seed, 31, static_cast<std::uint64_t>(epoch)));
        std::vector<double> sums(obj.names().size(), 0.0);
        double total_sum = 0;
        int batches = 0;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        for (std::size_t start = 0; start < n; start += bs) {
            std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(std::min(n, start + bs)));
            Tape tape;
            const Tensor out = model.net.forward(model.inputs(ds, idx), &tape);
            const std::size_t P = out.plane();
            std::vector<std::vector<double>> pred(idx.size(), std::vector<double>(P));
            for (std::size_t b = 0; b < idx.size(); ++b)
                for (std::size_t p = 0; p < P; ++p) pred[b][p] = out.data[b * P + p] * os + om;
            std::vector<std::vector<double>> g;
            const auto values = obj.eval(idx, pred, &g);
            const double total = obj.total(values);
            if (!std::isfinite(total)) {
                std::ostringstream msg;
                msg << "non-finite objective at epoch " << epoch << ", batch " << batches << ", lr " << fmt(lr) << ":";
                for (std::size_t t = 0; t < values.size(); ++t)
                    msg << ' ' << obj.names()[t] << "=" << fmt(values[t]) << "(w=" << fmt(obj.weights()[t]) << ")";
                throw TrainingDiverged(msg.str());
            }
            if (batches == 0) rec.cofactor_deviation = obj.cofactor_deviation(idx, pred);
            Tensor seed(out.batch, out.channels, out.n1, out.n2);
            for (std::size_t b = 0; b < idx.size(); ++b)
                for (std::size_t p = 0; p < P; ++p) seed.data[b * P + p] = g[b][p] * os;
            const auto grad = model.net.backward(tape, seed);
            adam_step(model.net.params(), grad, adam, lr);
            for (std::size_t t = 0; t < values.size(); ++t) sums[t] += values[t];
            total_sum += total;
            ++batches;
        }
        for (std::size_t t = 0; t < sums.size(); ++t)
            rec.terms.push_back({obj.names()[t], obj.weights()[t], sums[t] / batches});
        rec.total = total_sum / batches;
        hist.epochs.push_back(std::move(rec));
    }
    return {std::move(model), std::move(hist), std::move(terms)};
}

// ---------------------------------------------------------------------------
// Metrics

SplitMetrics evaluate_predictions(const Dataset& ds, const std::vector<std::vector<double>>& predictions) {
    require(predictions.size() == ds.samples.size(), "evaluate: one prediction per sample required");
    require(!ds.samples.empty(), "evaluate: empty dataset");
    const PdeBinding binding = binding_for(ds);
    const CompiledExpr residual(binding.pde.residuals[0], ds.grid, binding.scheme, binding.pde.space, binding.params);
    const SlotBinder binder(ds, binding);
    SplitMetrics m;
    for (std::size_t s = 0; s < ds.samples.size(); ++s) {
        require(predictions[s].size() == ds.grid.size(), "evaluate: prediction size mismatch");
        m.l2 += relative_l2(predictions[s], ds.samples[s].target.values);
        const auto r = residual.eval(binder.bind(residual, s, predictions[s], nullptr));
        m.eqn_error += equation_error(ds.grid, r);
    }
    m.l2 /= static_cast<double>(ds.samples.size());
    m.eqn_error /= static_cast<double>(ds.samples.size());
    return m;
}

SplitMetrics evaluate(const Model& model, const Dataset& ds) { return evaluate_predictions(ds, model.predict(ds)); }

json MetricsReport::to_json() const {
    const auto split = [](const SplitMetrics& s) { return json{{"l2", s.l2}, {"eqn_error", s.eqn_error}}; };
    json res = json::array();
    for (const auto& r : resolutions) res.push_back({{"grid", r.grid}, {"test", split(r.test)}});
    json final_terms = json::object();
    double cofactor_max = 0;
    for (const auto& e : history.epochs) cofactor_max = std::max(cofactor_max, e.cofactor_deviation);
    if (!history.epochs.empty()) {
        for (const auto& t : history.epochs.back().terms) final_terms[t.name] = {{"weight", t.weight}, {"value", t.value}};
        final_terms["total"] = history.epochs.back().total;
    }
    return {{"schema", 1},
            {"kind", "metrics"},
            {"decisions",
             {"objective: w_data*relL2 + w_aux*aux + w_residual*|R|^2 + gamma/G*sum_i |S_i|^2, each a batch mean",
              "PDE-derived terms and equation error average over the interior mask",
              "equation error: mean over samples of the interior RMS of the compiled residual",
              "train metrics use the training targets as stored (noisy when noise > 0)",
              "generalization_gap = test.l2 - train.l2; stability_gap = test.eqn_error - train.eqn_error",
              "zero-shot test sets are regenerated per resolution from the test seed"}},
            {"config", config},
            {"train", split(train)},
            {"test", split(test)},
            {"generalization_gap", generalization_gap},
            {"stability_gap", stability_gap},
            {"resolutions", res},
            {"parameter_count", parameter_count},
            {"flops_per_sample", flops_per_sample},
            {"verify_bypassed", verify_bypassed},
            {"epochs", history.epochs.size()},
            {"final_terms", final_terms},
            {"max_cofactor_deviation", cofactor_max}};
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentConfig ExperimentConfig::desk(const std::string& pde, Method m) {
    ExperimentConfig c;
    c.pde = pde;
    c.loss = LossConfig::defaults(pde, m);
    c.net.width = 16;
    c.net.blocks = 3;
    c.net.head_width = 32;
    if (is_burgers(pde)) {
        c.n1 = 32;
        c.n2 = 25;
        c.net.modes1 = 8;
        c.net.modes2 = 6;
        c.train.n_train = 25;
        c.train.n_test = 25;
        c.resolutions = {16, 64};
    } else {
        c.n1 = c.n2 = 32;
        c.net.modes1 = c.net.modes2 = 8;
        c.train.n_train = 50;
        c.train.n_test = 25;
        c.train.batch_size = 10;
        c.resolutions = {16, 64};
    }
    return c;
}

void ExperimentConfig::validate() const {
    require(pde == "burgers" || pde == "darcy", "pde must be burgers or darcy");
    require(n1 >= 4 && n2 >= 4, "grid sizes must be >= 4");
    require(!is_burgers(pde) || nu > 0, "nu must be positive");
    require(pde == "burgers" || n1 == n2, "darcy grids are square");
    require(noise >= 0, "noise must be >= 0");
    for (int r : resolutions) require(r >= 4, "resolutions must be >= 4");
    loss.validate();
    train.validate();
    net.validate();
}

json ExperimentConfig::to_json() const {
    return {{"pde", pde},
            {"grid", {n1, n2}},
            {"data_seed", data_seed},
            {"noise", noise},
            {"nu", nu},
            {"loss", loss.to_json()},
            {"train", train.to_json()},
            {"net", net.to_json()},
            {"resolutions", resolutions},
            {"bypass_verify", bypass_verify}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.pde = j.at("pde").get<std::string>();
    c.n1 = j.at("grid").at(0).get<int>();
    c.n2 = j.at("grid").at(1).get<int>();
    c.data_seed = j.at("data_seed").get<std::uint64_t>();
    c.noise = j.at("noise").get<double>();
    c.nu = j.at("nu").get<double>();
    c.loss = LossConfig::from_json(j.at("loss"));
    c.train = TrainConfig::from_json(j.at("train"));
    c.net = NetConfig::from_json(j.at("net"));
    c.resolutions = j.at("resolutions").get<std::vector<int>>();
    c.bypass_verify = j.at("bypass_verify").get<bool>();
    c.validate();
    return c;
}

int paired_size(const ExperimentConfig& cfg, int n1) {
    if (!is_burgers(cfg.pde)) return n1;
    return static_cast<int>(std::lround(static_cast<double>(n1) * (cfg.n2 - 1) / cfg.n1)) + 1;
}

Dataset experiment_dataset(const ExperimentConfig& cfg, bool test_split, int n1, int n_samples) {
    const std::uint64_t seed = derive_seed(cfg.data_seed, test_split ? 11 : 10, 0);
    if (is_burgers(cfg.pde)) {
        BurgersOptions o;
        o.n_samples = n_samples;
        o.nx = n1;
        o.nt = paired_size(cfg, n1);
        o.nu = cfg.nu;
        o.seed = seed;
        return gen_burgers(o);
    }
    DarcyOptions o;
    o.n_samples = n_samples;
    o.n = n1;
    o.seed = seed;
    return gen_darcy(o);
}

std::vector<ResolutionMetrics> evaluate_resolutions(const Model& model, const ExperimentConfig& cfg,
                                                    const std::vector<int>& resolutions) {
    std::vector<ResolutionMetrics> out;
    for (int r : resolutions) {
        const Dataset ds = experiment_dataset(cfg, true, r, cfg.train.n_test);
        out.push_back({ds.grid.describe(), evaluate(model, ds)});
    }
    return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& train_ds, const Dataset& test_ds) {
    cfg.validate();
    require(train_ds.pde == cfg.pde && test_ds.pde == cfg.pde, "datasets do not match pde " + cfg.pde);
    bool bypassed = false;
    if (cfg.loss.method != Method::Baseline && !cfg.loss.generators.empty()) {
        const PDESystem pde = is_burgers(cfg.pde) ? burgers(cfg.nu) : darcy();
        for (const auto& r : verify_generators(pde, cfg.loss)) {
            if (r.status == SymmetryStatus::Certified) continue;
            if (!cfg.bypass_verify)
                throw std::runtime_error("generator " + r.field + " is " + to_string(r.status) + " for " + cfg.pde + ": " +
                                         r.detail + " (set bypass_verify to train anyway)");
            bypassed = true;
        }
    }

    TrainResult tr = train(train_ds, cfg.loss, cfg.train, cfg.net);
    MetricsReport rep;
    rep.train = evaluate(tr.model, train_ds);
    rep.test = evaluate(tr.model, test_ds);
    rep.generalization_gap = rep.test.l2 - rep.train.l2;
    rep.stability_gap = rep.test.eqn_error - rep.train.eqn_error;
    rep.resolutions = evaluate_resolutions(tr.model, cfg, cfg.resolutions);
    rep.config = cfg.to_json();
    rep.history = std::move(tr.history);
    rep.parameter_count = tr.model.net.parameter_count();
    rep.flops_per_sample = tr.model.net.flops_per_sample(cfg.n1, cfg.n2);
    rep.verify_bypassed = bypassed;
    return {std::move(rep), std::move(tr.model)};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    Dataset train_ds = experiment_dataset(cfg, false, cfg.n1, cfg.train.n_train);
    if (cfg.noise > 0) train_ds = add_noise(train_ds, cfg.noise, derive_seed(cfg.data_seed, 12, 0));
    return run_experiment(cfg, train_ds, experiment_dataset(cfg, true, cfg.n1, cfg.train.n_test));
}

namespace {

void run_rows(std::vector<AblationRow>& rows, const std::vector<ExperimentConfig>& cfgs, int threads) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            try {
                rows[i].report = run_experiment(cfgs[i]).report;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min<int>(threads, static_cast<int>(rows.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<AblationRow> ablate_generators(const ExperimentConfig& cfg, const std::vector<std::string>& order,
                                           int threads) {
    require(cfg.loss.method != Method::Baseline, "ablate_generators needs a symmetry method");
    const PDESystem pde = is_burgers(cfg.pde) ? burgers(cfg.nu) : darcy();
    for (const auto& g : order) (void)find_training_generator(pde, g);
    std::vector<AblationRow> rows;
    std::vector<ExperimentConfig> cfgs;
    for (std::size_t k = 0; k <= order.size(); ++k) {
        ExperimentConfig c = cfg;
        c.loss.generators.assign(order.begin(), order.begin() + static_cast<long>(k));
        AblationRow row;
        row.label = "generators=" + std::to_string(k);
        row.generators = c.loss.generators;
        row.noise = c.noise;
        row.method = c.loss.method;
        rows.push_back(std::move(row));
        cfgs.push_back(std::move(c));
    }
    run_rows(rows, cfgs, threads);
    return rows;
}

std::vector<AblationRow> ablate_noise(const ExperimentConfig& cfg, const std::vector<double>& levels,
                                      const std::vector<Method>& methods, int threads) {
    std::vector<AblationRow> rows;
    std::vector<ExperimentConfig> cfgs;
    for (double level : levels)
        for (Method m : methods) {
            ExperimentConfig c = cfg;
            c.noise = level;
            const LossConfig d = LossConfig::defaults(cfg.pde, m);
            c.loss.method = m;
            c.loss.generators = m == cfg.loss.method ? cfg.loss.generators : d.generators;
            if (m == Method::Baseline) c.loss.generators.clear();
            AblationRow row;
            std::ostringstream label;  // no commas: labels are CSV fields
            label << "noise=" << level << ':' << to_string(m);
            row.label = label.str();
            row.generators = c.loss.generators;
            row.noise = level;
            row.method = m;
            rows.push_back(std::move(row));
            cfgs.push_back(std::move(c));
        }
    run_rows(rows, cfgs, threads);
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "label,generators,noise,method,train_l2,test_l2,train_eqn,test_eqn,gen_gap,stab_gap\n";
    for (const auto& r : rows) {
        std::string gens;
        for (const auto& g : r.generators) gens += (gens.empty() ? "" : " ") + g;
        const auto& m = r.report;
        os << r.label << ',' << gens << ',' << fmt(r.noise) << ',' << to_string(r.method) << ',' << fmt(m.train.l2) << ','
           << fmt(m.test.l2) << ',' << fmt(m.train.eqn_error) << ',' << fmt(m.test.eqn_error) << ','
           << fmt(m.generalization_gap) << ',' << fmt(m.stability_gap) << '\n';
    }
    return os.str();
}

json ablation_json(const std::vector<AblationRow>& rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"label", r.label},
                       {"generators", r.generators},
                       {"noise", r.noise},
                       {"method", to_string(r.method)},
                       {"metrics", r.report.to_json()}});
    return {{"schema", 1}, {"kind", "ablation"}, {"rows", out}};
}

}  // namespace symflow
