#include "symflow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace symflow {

Axis Axis::unit(std::string name, int n, bool periodic) {
    if (n < 2) throw std::invalid_argument("axis " + name + ": need at least 2 points");
    return Axis{std::move(name), n, periodic ? 1.0 / n : 1.0 / (n - 1), periodic};
}

Grid::Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw std::invalid_argument("grid needs at least one axis");
    for (const auto& a : axes_) {
        if (a.n < 4) throw std::invalid_argument("axis " + a.name + ": need n >= 4");
        if (!(a.spacing > 0.0)) throw std::invalid_argument("axis " + a.name + ": spacing must be positive");
    }
    strides_.assign(axes_.size(), 1);
    for (std::size_t a = axes_.size() - 1; a > 0; --a) strides_[a - 1] = strides_[a] * static_cast<std::size_t>(axes_[a].n);
    size_ = strides_[0] * static_cast<std::size_t>(axes_[0].n);
}

bool Grid::matches(const VarSpace& space) const {
    if (space.p() != axes_.size()) return false;
    for (std::size_t a = 0; a < axes_.size(); ++a)
        if (space.independent()[a] != axes_[a].name) return false;
    return true;
}

std::vector<char> Grid::interior_mask() const {
    std::vector<char> mask(size_, 1);
    for (std::size_t i = 0; i < size_; ++i) {
        for (std::size_t a = 0; a < axes_.size(); ++a) {
            if (axes_[a].periodic) continue;
            auto k = static_cast<int>((i / strides_[a]) % static_cast<std::size_t>(axes_[a].n));
            if (k == 0 || k == axes_[a].n - 1) {
                mask[i] = 0;
                break;
            }
        }
    }
    return mask;
}

std::string Grid::describe() const {
    std::string out;
    for (std::size_t a = 0; a < axes_.size(); ++a) {
        if (a) out += ",";
        out += axes_[a].name + ":" + std::to_string(axes_[a].n) + (axes_[a].periodic ? "p" : "");
    }
    return out;
}

GridField::GridField(Grid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid.size()) throw std::invalid_argument("field size does not match grid");
    for (double x : values)
        if (!std::isfinite(x)) throw std::invalid_argument("field has a non-finite value");
}

GridField GridField::constant(const Grid& g, double c) { return GridField(g, std::vector<double>(g.size(), c)); }

GridField GridField::coordinate(const Grid& g, std::size_t a) {
    std::vector<double> v(g.size());
    const Axis& ax = g.axis(a);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = ax.coordinate(static_cast<int>((i / g.stride(a)) % static_cast<std::size_t>(ax.n)));
    return GridField(g, std::move(v));
}

DiffScheme DiffScheme::burgers() { return {{AxisScheme::Spectral, AxisScheme::CentralFD2}}; }
DiffScheme DiffScheme::darcy() { return {{AxisScheme::CentralFD2, AxisScheme::CentralFD2}}; }

// ---------------------------------------------------------------------------

void SparseMatrix::apply(const double* x, double* y, std::size_t stride_x, std::size_t stride_y) const {
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int k = row_start[r]; k < row_start[r + 1]; ++k) acc += val[k] * x[static_cast<std::size_t>(col[k]) * stride_x];
        y[static_cast<std::size_t>(r) * stride_y] = acc;
    }
}

SparseMatrix SparseMatrix::transpose() const {
    SparseMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.row_start.assign(static_cast<std::size_t>(cols) + 1, 0);
    for (int c : col) ++t.row_start[static_cast<std::size_t>(c) + 1];
    for (int r = 0; r < cols; ++r) t.row_start[r + 1] += t.row_start[r];
    t.col.resize(col.size());
    t.val.resize(val.size());
    std::vector<int> fill(t.row_start.begin(), t.row_start.end() - 1);
    for (int r = 0; r < rows; ++r) {
        for (int k = row_start[r]; k < row_start[r + 1]; ++k) {
            int dst = fill[col[k]]++;
            t.col[dst] = r;
            t.val[dst] = val[k];
        }
    }
    return t;
}

std::vector<std::vector<double>> fornberg_weights(double z, std::span<const double> x, int m) {
    const std::size_t n = x.size();
    std::vector<std::vector<double>> c(static_cast<std::size_t>(m) + 1, std::vector<double>(n, 0.0));
    double c1 = 1.0, c4 = x[0] - z;
    c[0][0] = 1.0;
    for (std::size_t i = 1; i < n; ++i) {
        int mn = std::min(static_cast<int>(i), m);
        double c2 = 1.0, c5 = c4;
        c4 = x[i] - z;
        for (std::size_t j = 0; j < i; ++j) {
            double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    return c;
}

namespace {

SparseMatrix from_rows(int n, const std::vector<std::vector<std::pair<int, double>>>& rows) {
    SparseMatrix m;
    m.rows = m.cols = n;
    m.row_start.push_back(0);
    for (const auto& row : rows) {
        for (const auto& [c, v] : row) {
            if (v == 0.0) continue;
            m.col.push_back(c);
            m.val.push_back(v);
        }
        m.row_start.push_back(static_cast<int>(m.col.size()));
    }
    return m;
}

// Circulant spectral derivative with the Nyquist mode dropped for odd orders.
SparseMatrix spectral_matrix(const Axis& axis, int order) {
    const int n = axis.n;
    const double length = axis.spacing * n;
    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    const int top = (n % 2 == 0) ? n / 2 - 1 : (n - 1) / 2;
    for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        for (int m = 1; m <= top; ++m) {
            double kappa = 2.0 * std::numbers::pi * m / length;
            double theta = 2.0 * std::numbers::pi * m * r / n;
            double s = std::pow(kappa, order);
            switch (order % 4) {
                case 1: acc -= 2.0 * s * std::sin(theta); break;
                case 2: acc -= 2.0 * s * std::cos(theta); break;
                case 3: acc += 2.0 * s * std::sin(theta); break;
                default: acc += 2.0 * s * std::cos(theta); break;
            }
        }
        if (n % 2 == 0 && order % 2 == 0) {
            double kappa = std::numbers::pi * n / length;
            double sign = (order % 4 == 0) ? 1.0 : -1.0;
            acc += sign * std::pow(kappa, order) * ((r % 2 == 0) ? 1.0 : -1.0);
        }
        c[static_cast<std::size_t>(r)] = acc / n;
    }
    std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) rows[j].emplace_back(l, c[static_cast<std::size_t>(((j - l) % n + n) % n)]);
    return from_rows(n, rows);
}

SparseMatrix fd_matrix(const Axis& axis, int order, int accuracy) {
    const int n = axis.n;
    const int central = 2 * ((order + 1) / 2) - 1 + accuracy;
    const int half = central / 2;
    const int window = order + accuracy;
    std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(n));
    std::vector<double> offsets;
    for (int i = 0; i < n; ++i) {
        offsets.clear();
        std::vector<int> cols;
        if (axis.periodic) {
            if (central > n) throw std::invalid_argument("axis " + axis.name + " too short for stencil");
            for (int o = -half; o <= half; ++o) {
                offsets.push_back(o * axis.spacing);
                cols.push_back(((i + o) % n + n) % n);
            }
        } else if (i - half >= 0 && i + half <= n - 1) {
            for (int o = -half; o <= half; ++o) {
                offsets.push_back(o * axis.spacing);
                cols.push_back(i + o);
            }
        } else {
            if (window > n) throw std::invalid_argument("axis " + axis.name + " too short for boundary closure");
            int start = std::clamp(i - window / 2, 0, n - window);
            for (int j = start; j < start + window; ++j) {
                offsets.push_back((j - i) * axis.spacing);
                cols.push_back(j);
            }
        }
        auto w = fornberg_weights(0.0, offsets, order);
        for (std::size_t k = 0; k < cols.size(); ++k) rows[i].emplace_back(cols[k], w[order][k]);
        std::sort(rows[i].begin(), rows[i].end());
    }
    return from_rows(n, rows);
}

}  // namespace

AxisOperator AxisOperator::build(const Axis& axis, AxisScheme scheme, int order) {
    if (order < 1 || order > kMaxAxisOrder)
        throw std::invalid_argument("derivative order " + std::to_string(order) + " unsupported on axis " + axis.name);
    AxisOperator op;
    switch (scheme) {
        case AxisScheme::Spectral:
            if (!axis.periodic) throw std::invalid_argument("spectral scheme on non-periodic axis " + axis.name);
            op.forward = spectral_matrix(axis, order);
            break;
        case AxisScheme::CentralFD2: op.forward = fd_matrix(axis, order, 2); break;
        case AxisScheme::CentralFD4: op.forward = fd_matrix(axis, order, 4); break;
    }
    op.adjoint = op.forward.transpose();
    return op;
}

// ---------------------------------------------------------------------------

DerivativeApplier::DerivativeApplier(Grid grid, DiffScheme scheme) : grid_(std::move(grid)), scheme_(std::move(scheme)) {
    if (scheme_.axes.size() != grid_.rank()) throw std::invalid_argument("scheme rank does not match grid");
    ops_.resize(grid_.rank());
    for (std::size_t a = 0; a < grid_.rank(); ++a) {
        if (scheme_.axes[a] == AxisScheme::Spectral && !grid_.axis(a).periodic)
            throw std::invalid_argument("spectral scheme on non-periodic axis " + grid_.axis(a).name);
        for (int k = 1; k <= kMaxAxisOrder; ++k) {
            try {
                ops_[a].push_back(AxisOperator::build(grid_.axis(a), scheme_.axes[a], k));
            } catch (const std::invalid_argument&) {
                break;  // higher orders need wider stencils still
            }
        }
    }
}

const AxisOperator& DerivativeApplier::op(std::size_t axis, int order) const {
    if (order < 1 || static_cast<std::size_t>(order) > ops_.at(axis).size())
        throw std::invalid_argument("derivative order " + std::to_string(order) + " unsupported on axis " +
                                    grid_.axis(axis).name);
    return ops_[axis][static_cast<std::size_t>(order) - 1];
}

void DerivativeApplier::along_axis(std::size_t axis, const SparseMatrix& m, const double* in, double* out) const {
    const std::size_t n = static_cast<std::size_t>(grid_.axis(axis).n);
    const std::size_t stride = grid_.stride(axis);
    const std::size_t outer = grid_.size() / (n * stride);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t q = 0; q < stride; ++q) {
            std::size_t base = o * n * stride + q;
            m.apply(in + base, out + base, stride, stride);
        }
}

std::vector<double> DerivativeApplier::apply(const MultiIndex& J, std::span<const double> in) const {
    if (in.size() != grid_.size()) throw std::invalid_argument("field size does not match grid");
    std::vector<double> cur(in.begin(), in.end()), next(in.size());
    for (std::size_t a = 0; a < grid_.rank(); ++a) {
        if (J.counts.at(a) == 0) continue;
        along_axis(a, op(a, J.counts[a]).forward, cur.data(), next.data());
        cur.swap(next);
    }
    return cur;
}

std::vector<double> DerivativeApplier::apply_adjoint(const MultiIndex& J, std::span<const double> in) const {
    if (in.size() != grid_.size()) throw std::invalid_argument("field size does not match grid");
    std::vector<double> cur(in.begin(), in.end()), next(in.size());
    for (std::size_t a = grid_.rank(); a-- > 0;) {
        if (J.counts.at(a) == 0) continue;
        along_axis(a, op(a, J.counts[a]).adjoint, cur.data(), next.data());
        cur.swap(next);
    }
    return cur;
}

// ---------------------------------------------------------------------------

CompiledExpr::CompiledExpr(const Expr& e, const Grid& grid, const DiffScheme& scheme, const VarSpace& space,
                           const std::map<std::string, double>& params)
    : applier_(grid, scheme) {
    if (!grid.matches(space)) throw std::invalid_argument("grid axes " + grid.describe() + " do not match the variable space");

    std::map<std::pair<int, MultiIndex>, int> node_ids;
    std::set<int> used_alpha;
    for (const auto& [m, c] : e.terms())
        for (const auto& f : m.factors)
            if (const auto* jc = std::get_if<JetCoord>(&f.atom); jc && !jc->is_independent()) {
                if (jc->J.order() > kMaxTotalOrder)
                    throw std::invalid_argument("derivative " + coord_name(*jc, space) + " exceeds supported order");
                node_ids.emplace(std::make_pair(jc->index, jc->J), 0);
                used_alpha.insert(jc->index);
            }
    std::map<int, int> slot_of;
    for (int alpha : used_alpha) {
        slot_of[alpha] = static_cast<int>(slots_.size());
        slots_.push_back(space.dependent()[static_cast<std::size_t>(alpha)]);
    }
    for (auto& [key, id] : node_ids) {
        id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{slot_of.at(key.first), key.second});
        node_names_.push_back(coord_name(JetCoord::dependent(key.first, key.second), space));
        for (std::size_t a = 0; a < grid.rank(); ++a)
            if (key.second.counts[a] > 0) {
                std::vector<double> probe(grid.size(), 0.0);
                MultiIndex single(grid.rank());
                single.counts[a] = key.second.counts[a];
                applier_.apply(single, probe);  // throws if the axis cannot carry this order
            }
    }

    std::set<int> used_axes;
    for (const auto& [m, c] : e.terms()) {
        Term t;
        t.coefficient = c.get_d();
        for (const auto& f : m.factors) {
            if (const auto* p = std::get_if<ParamAtom>(&f.atom)) {
                auto it = params.find(p->name);
                if (it == params.end()) throw std::invalid_argument("parameter " + p->name + " is not bound");
                t.coefficient *= std::pow(it->second, f.power);
            } else if (const auto* jc = std::get_if<JetCoord>(&f.atom)) {
                if (jc->is_independent()) {
                    t.coords.emplace_back(jc->index, f.power);
                    used_axes.insert(jc->index);
                } else {
                    t.nodes.emplace_back(node_ids.at({jc->index, jc->J}), f.power);
                }
            } else {
                throw std::invalid_argument("formal function " + std::get<FuncAtom>(f.atom).name +
                                            " must be instantiated before compiling");
            }
        }
        if (t.coefficient != 0.0) terms_.push_back(std::move(t));
    }
    coord_fields_.resize(grid.rank());
    for (int a : used_axes) coord_fields_[static_cast<std::size_t>(a)] = GridField::coordinate(grid, static_cast<std::size_t>(a)).values;
}

std::vector<std::vector<double>> CompiledExpr::node_values(std::span<const std::span<const double>> slot_values) const {
    if (slot_values.size() != slots_.size()) throw std::invalid_argument("wrong number of bound slots");
    std::vector<std::vector<double>> out;
    out.reserve(nodes_.size());
    for (const auto& node : nodes_) {
        auto in = slot_values[static_cast<std::size_t>(node.slot)];
        if (in.size() != grid().size()) throw std::invalid_argument("slot " + slots_[static_cast<std::size_t>(node.slot)] + " has the wrong size");
        if (node.J.empty()) out.emplace_back(in.begin(), in.end());
        else out.push_back(applier_.apply(node.J, in));
    }
    return out;
}

namespace {

double ipow(double x, int p) {
    double r = x;
    for (int k = 1; k < p; ++k) r *= x;
    return r;
}

}  // namespace

std::vector<double> CompiledExpr::eval(std::span<const std::span<const double>> slot_values) const {
    auto nv = node_values(slot_values);
    const std::size_t N = grid().size();
    std::vector<double> out(N, 0.0);
    for (const auto& t : terms_) {
        for (std::size_t i = 0; i < N; ++i) {
            double v = t.coefficient;
            for (const auto& [node, p] : t.nodes) v *= ipow(nv[static_cast<std::size_t>(node)][i], p);
            for (const auto& [axis, p] : t.coords) v *= ipow(coord_fields_[static_cast<std::size_t>(axis)][i], p);
            out[i] += v;
        }
    }
    return out;
}

std::vector<double> CompiledExpr::adjoint_grad(std::span<const std::span<const double>> slot_values,
                                               std::span<const double> cotangent, int slot) const {
    if (slot < 0 || static_cast<std::size_t>(slot) >= slots_.size()) throw std::invalid_argument("unknown slot");
    const std::size_t N = grid().size();
    if (cotangent.size() != N) throw std::invalid_argument("cotangent has the wrong size");
    auto nv = node_values(slot_values);
    std::vector<double> grad(N, 0.0), local(N);
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        if (nodes_[n].slot != slot) continue;
        std::fill(local.begin(), local.end(), 0.0);
        bool touched = false;
        for (const auto& t : terms_) {
            auto self = std::find_if(t.nodes.begin(), t.nodes.end(), [&](const auto& np) { return np.first == static_cast<int>(n); });
            if (self == t.nodes.end()) continue;
            touched = true;
            for (std::size_t i = 0; i < N; ++i) {
                double v = t.coefficient * self->second;
                for (const auto& [node, p] : t.nodes) {
                    int q = (node == static_cast<int>(n)) ? p - 1 : p;
                    if (q > 0) v *= ipow(nv[static_cast<std::size_t>(node)][i], q);
                }
                for (const auto& [axis, p] : t.coords) v *= ipow(coord_fields_[static_cast<std::size_t>(axis)][i], p);
                local[i] += v * cotangent[i];
            }
        }
        if (!touched) continue;
        if (nodes_[n].J.empty()) {
            for (std::size_t i = 0; i < N; ++i) grad[i] += local[i];
        } else {
            auto back = applier_.apply_adjoint(nodes_[n].J, local);
            for (std::size_t i = 0; i < N; ++i) grad[i] += back[i];
        }
    }
    return grad;
}

std::vector<std::span<const double>> CompiledExpr::bind(const Inputs& inputs) const {
    std::vector<std::span<const double>> out;
    for (const auto& s : slots_) {
        auto it = inputs.find(s);
        if (it == inputs.end()) throw std::invalid_argument("slot " + s + " is not bound");
        if (!(it->second.grid == grid())) throw std::invalid_argument("slot " + s + " lives on a different grid");
        out.emplace_back(it->second.values);
    }
    return out;
}

GridField CompiledExpr::eval(const Inputs& inputs) const {
    auto b = bind(inputs);
    return GridField(grid(), eval(b));
}

GridField CompiledExpr::adjoint_grad(const Inputs& inputs, const GridField& cotangent, const std::string& wrt) const {
    auto it = std::find(slots_.begin(), slots_.end(), wrt);
    if (it == slots_.end()) throw std::invalid_argument("unknown slot " + wrt);
    if (!(cotangent.grid == grid())) throw std::invalid_argument("cotangent lives on a different grid");
    auto b = bind(inputs);
    return GridField(grid(), adjoint_grad(b, cotangent.values, static_cast<int>(it - slots_.begin())));
}

std::string CompiledExpr::dump() const {
    std::ostringstream os;
    os << "grid " << grid().describe() << "\n";
    for (std::size_t s = 0; s < slots_.size(); ++s) os << "slot " << s << " " << slots_[s] << "\n";
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
        os << "node " << n << " " << node_names_[n] << " = D[";
        for (std::size_t a = 0; a < nodes_[n].J.counts.size(); ++a) os << (a ? "," : "") << nodes_[n].J.counts[a];
        os << "] slot " << nodes_[n].slot << "\n";
    }
    os.precision(17);
    for (const auto& t : terms_) {
        os << "term " << t.coefficient;
        for (const auto& [node, p] : t.nodes) os << " * n" << node << "^" << p;
        for (const auto& [axis, p] : t.coords) os << " * " << grid().axis(static_cast<std::size_t>(axis)).name << "^" << p;
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------

double relative_l2(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("relative_l2: size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
    }
    if (den == 0.0) throw std::invalid_argument("relative_l2: reference has zero norm");
    return std::sqrt(num / den);
}

double relative_l2(const GridField& a, const GridField& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("relative_l2: grids differ");
    return relative_l2(std::span<const double>(a.values), std::span<const double>(b.values));
}

double mean_sq(std::span<const double> a) {
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (double x : a) s += x * x;
    return s / static_cast<double>(a.size());
}

double mean_sq(const GridField& a) { return mean_sq(std::span<const double>(a.values)); }

double equation_error(const Grid& grid, std::span<const double> residual) {
    if (residual.size() != grid.size()) throw std::invalid_argument("equation_error: size mismatch");
    auto mask = grid.interior_mask();
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < residual.size(); ++i)
        if (mask[i]) {
            s += residual[i] * residual[i];
            ++count;
        }
    return count ? std::sqrt(s / static_cast<double>(count)) : 0.0;
}

}  // namespace symflow
