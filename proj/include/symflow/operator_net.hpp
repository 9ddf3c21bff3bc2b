#pragma once

// A small Fourier neural operator over 2D fields with a reverse-mode tape.
//
// Layout: every tensor is (batch, channels, n1, n2), row-major. The network is
//   lift (pointwise affine) -> blocks -> head (pointwise, GELU, pointwise),
// where each block computes SpectralConv(h) + Pointwise(h), followed by GELU
// on every block except the last.
//
// SpectralConv keeps modes k2 in [0, m2) and k1 in [-(m1-1), m1-1]:
//   X_k = sum_j x_j exp(-i theta_kj),  Y_k = sum_in W_k X_k,
//   y_j = (1/N) sum_k c_k Re(Y_k exp(i theta_kj)),  c_k = (k2 == 0 ? 1 : 2).
// The 1/N normalization makes the layer act identically on band-limited
// inputs at every resolution with n1 >= 2 m1 and n2 >= 2 m2.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace symflow {

struct Tensor {
    int batch = 0, channels = 0, n1 = 0, n2 = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int b, int c, int n1_, int n2_, double fill = 0.0);
    std::size_t plane() const noexcept { return static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2); }
    std::size_t size() const noexcept { return data.size(); }
    double* channel(int b, int c) { return data.data() + (static_cast<std::size_t>(b) * channels + c) * plane(); }
    const double* channel(int b, int c) const { return data.data() + (static_cast<std::size_t>(b) * channels + c) * plane(); }
    bool same_shape(const Tensor& o) const { return batch == o.batch && channels == o.channels && n1 == o.n1 && n2 == o.n2; }
};

struct NetConfig {
    int in_channels = 3;
    int out_channels = 1;
    int width = 24;
    int blocks = 4;
    int modes1 = 12;
    int modes2 = 12;
    int head_width = 48;

    /// Throws std::invalid_argument on a non-positive entry.
    void validate() const;
    nlohmann::json to_json() const;
    static NetConfig from_json(const nlohmann::json& j);
};

/// Records one forward pass. Values live on the tape; backward closures run in
/// reverse recording order, each exactly once.
class Tape {
  public:
    int add(Tensor value);
    const Tensor& value(int id) const { return values_.at(static_cast<std::size_t>(id)); }
    /// Gradient buffer of node `id`, zero-filled on first access.
    Tensor& grad(int id);
    void record(std::function<void(Tape&)> backward) { ops_.push_back(std::move(backward)); }
    std::vector<double>& param_grad() { return param_grad_; }
    bool empty() const noexcept { return values_.empty(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t op_count() const noexcept { return ops_.size(); }

    /// Seeds d(loss)/d(value(out)) and sweeps. Throws std::logic_error on an
    /// empty tape or a second sweep.
    void backward(int out, const Tensor& seed);

  private:
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<std::function<void(Tape&)>> ops_;
    std::vector<double> param_grad_;
    bool swept_ = false;
};

struct ParamGroup {
    std::string name;
    std::size_t offset = 0, size = 0;
};

class OperatorNet {
  public:
    /// Linear weights ~ U(-1/sqrt(in), 1/sqrt(in)); spectral weights
    /// (real and imaginary parts) ~ U(0, 1) / (in * out); biases 0.
    OperatorNet(const NetConfig& cfg, std::uint64_t seed);

    const NetConfig& config() const noexcept { return cfg_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::vector<double>& params() noexcept { return theta_; }
    const std::vector<double>& params() const noexcept { return theta_; }
    const std::vector<ParamGroup>& groups() const noexcept { return groups_; }
    const ParamGroup& group(const std::string& name) const;
    std::size_t parameter_count() const noexcept { return theta_.size(); }
    /// Rough multiply-add count of one forward pass for one sample.
    double flops_per_sample(int n1, int n2) const;

    /// Throws std::invalid_argument on a channel mismatch or when the grid
    /// cannot carry the retained modes (n1 < 2 m1 or n2 < 2 m2).
    Tensor forward(const Tensor& input, Tape* tape = nullptr) const;
    /// Same weights applied to a grid of any supported size.
    Tensor eval_at_resolution(const Tensor& input) const { return forward(input); }
    /// Parameter gradient of <output_grad, forward(input)> for the pass
    /// recorded on `tape`, laid out like params().
    std::vector<double> backward(Tape& tape, const Tensor& output_grad) const;

    void save(const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object()) const;
    /// Throws std::runtime_error on a malformed checkpoint.
    static OperatorNet load(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

  private:
    std::size_t add_group(const std::string& name, std::size_t size);

    NetConfig cfg_;
    std::uint64_t seed_ = 0;
    std::vector<double> theta_;
    std::vector<ParamGroup> groups_;
};

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

/// One bias-corrected Adam update in place.
void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace symflow
