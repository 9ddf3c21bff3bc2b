#pragma once

// Uniform tensor-product grids, per-axis derivative operators and the
// lowering of symbolic expressions to differentiable grid programs.

#include "symflow/jet.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace symflow {

struct Axis {
    std::string name;
    int n = 0;
    double spacing = 0.0;
    bool periodic = false;

    /// Unit interval: h = 1/n when periodic, 1/(n-1) otherwise.
    static Axis unit(std::string name, int n, bool periodic);
    double coordinate(int i) const { return spacing * i; }
    bool operator==(const Axis&) const = default;
};

class Grid {
  public:
    Grid() = default;
    /// Throws std::invalid_argument unless every axis has n >= 4 and h > 0.
    explicit Grid(std::vector<Axis> axes);

    const std::vector<Axis>& axes() const noexcept { return axes_; }
    const Axis& axis(std::size_t a) const { return axes_.at(a); }
    std::size_t rank() const noexcept { return axes_.size(); }
    std::size_t size() const noexcept { return size_; }
    /// Row-major: the last axis is contiguous.
    std::size_t stride(std::size_t a) const { return strides_.at(a); }
    /// Same axes as `space.independent()`, by name and order.
    bool matches(const VarSpace& space) const;
    /// Points not touched by a boundary closure: index 0 and n-1 are removed
    /// along every non-periodic axis.
    std::vector<char> interior_mask() const;
    std::string describe() const;  // e.g. "x:32p,t:25"

    bool operator==(const Grid& other) const { return axes_ == other.axes_; }

  private:
    std::vector<Axis> axes_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

struct GridField {
    Grid grid;
    std::vector<double> values;

    GridField() = default;
    /// Throws std::invalid_argument on a size mismatch or non-finite value.
    GridField(Grid g, std::vector<double> v);
    static GridField constant(const Grid& g, double c);
    /// Coordinate of axis `a` broadcast over the grid.
    static GridField coordinate(const Grid& g, std::size_t a);

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

enum class AxisScheme { Spectral, CentralFD2, CentralFD4 };

struct DiffScheme {
    std::vector<AxisScheme> axes;

    /// Spectral in x, CentralFD2 in t.
    static DiffScheme burgers();
    /// CentralFD2 on both axes.
    static DiffScheme darcy();
    static DiffScheme uniform(std::size_t rank, AxisScheme s) { return {std::vector<AxisScheme>(rank, s)}; }
};

/// Compressed sparse row matrix with its transpose kept alongside.
struct SparseMatrix {
    int rows = 0, cols = 0;
    std::vector<int> row_start, col;
    std::vector<double> val;

    void apply(const double* x, double* y, std::size_t stride_x, std::size_t stride_y) const;
    SparseMatrix transpose() const;
};

/// d/dx^order on one axis, with its transpose.
struct AxisOperator {
    SparseMatrix forward, adjoint;

    /// Throws std::invalid_argument on Spectral over a non-periodic axis, or
    /// order outside [1, kMaxAxisOrder].
    static AxisOperator build(const Axis& axis, AxisScheme scheme, int order);
};

inline constexpr int kMaxAxisOrder = 4;
inline constexpr int kMaxTotalOrder = 4;

/// Fornberg finite-difference weights for derivatives 0..m at z over nodes x.
/// Result indexed [k][j].
std::vector<std::vector<double>> fornberg_weights(double z, std::span<const double> x, int m);

/// Applies D_J (per-axis operators composed in axis order) or its transpose
/// to `in` on `grid`.
class DerivativeApplier {
  public:
    DerivativeApplier() = default;
    DerivativeApplier(Grid grid, DiffScheme scheme);
    const Grid& grid() const noexcept { return grid_; }
    const DiffScheme& scheme() const noexcept { return scheme_; }
    std::vector<double> apply(const MultiIndex& J, std::span<const double> in) const;
    std::vector<double> apply_adjoint(const MultiIndex& J, std::span<const double> in) const;

  private:
    const AxisOperator& op(std::size_t axis, int order) const;
    void along_axis(std::size_t axis, const SparseMatrix& m, const double* in, double* out) const;

    Grid grid_;
    DiffScheme scheme_;
    // ops_[axis][order - 1]
    std::vector<std::vector<AxisOperator>> ops_;
};

/// A polynomial in derivative channels lowered onto a grid. Immutable after
/// construction; eval and gradient are pure.
class CompiledExpr {
  public:
    struct Node {
        int slot = 0;  // index into slots()
        MultiIndex J;
    };
    /// A monomial: coefficient times a product of node or coordinate powers.
    struct Term {
        double coefficient = 0.0;
        std::vector<std::pair<int, int>> nodes;   // (node, power)
        std::vector<std::pair<int, int>> coords;  // (axis, power)
    };
    using Inputs = std::map<std::string, GridField>;

    /// Throws std::invalid_argument on: grid axes differing from the space,
    /// an unbound parameter, a formal function, a scheme unsupported on an
    /// axis, or derivative order above kMaxTotalOrder.
    CompiledExpr(const Expr& e, const Grid& grid, const DiffScheme& scheme, const VarSpace& space,
                 const std::map<std::string, double>& params);

    const Grid& grid() const noexcept { return applier_.grid(); }
    /// Names of the dependent fields the expression reads.
    const std::vector<std::string>& slots() const noexcept { return slots_; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<Term>& terms() const noexcept { return terms_; }
    bool is_zero() const noexcept { return terms_.empty(); }

    /// Throws std::invalid_argument when a slot is unbound or mis-sized.
    GridField eval(const Inputs& inputs) const;
    std::vector<double> eval(std::span<const std::span<const double>> slot_values) const;

    /// d<cotangent, eval(inputs)>/d inputs[wrt].
    GridField adjoint_grad(const Inputs& inputs, const GridField& cotangent, const std::string& wrt) const;
    std::vector<double> adjoint_grad(std::span<const std::span<const double>> slot_values,
                                     std::span<const double> cotangent, int slot) const;

    /// Text listing of slots, nodes and terms.
    std::string dump() const;

  private:
    std::vector<std::vector<double>> node_values(std::span<const std::span<const double>> slot_values) const;
    std::vector<std::span<const double>> bind(const Inputs& inputs) const;

    DerivativeApplier applier_;
    std::vector<std::string> slots_;
    std::vector<std::string> node_names_;
    std::vector<Node> nodes_;
    std::vector<Term> terms_;
    std::vector<std::vector<double>> coord_fields_;
};

/// ||a - b|| / ||b|| in the discrete 2-norm. Throws std::invalid_argument on
/// size mismatch or ||b|| = 0.
double relative_l2(std::span<const double> a, std::span<const double> b);
double relative_l2(const GridField& a, const GridField& b);
/// (1/N) sum a^2.
double mean_sq(std::span<const double> a);
double mean_sq(const GridField& a);
/// sqrt of the mean square of `residual` over grid.interior_mask().
double equation_error(const Grid& grid, std::span<const double> residual);

}  // namespace symflow
