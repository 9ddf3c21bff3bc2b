#include "symflow/operator_net.hpp"

#include "symflow/datasets.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

namespace symflow {

using cd = std::complex<double>;

Tensor::Tensor(int b, int c, int n1_, int n2_, double fill) : batch(b), channels(c), n1(n1_), n2(n2_) {
    if (b < 0 || c < 0 || n1_ < 0 || n2_ < 0) throw std::invalid_argument("negative tensor dimension");
    data.assign(static_cast<std::size_t>(b) * c * n1_ * n2_, fill);
}

void NetConfig::validate() const {
    for (int v : {in_channels, out_channels, width, blocks, modes1, modes2, head_width})
        if (v <= 0) throw std::invalid_argument("network configuration entries must be positive");
}

nlohmann::json NetConfig::to_json() const {
    return {{"in_channels", in_channels}, {"out_channels", out_channels}, {"width", width},       {"blocks", blocks},
            {"modes1", modes1},           {"modes2", modes2},             {"head_width", head_width}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
    NetConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.out_channels = j.at("out_channels").get<int>();
    c.width = j.at("width").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.modes1 = j.at("modes1").get<int>();
    c.modes2 = j.at("modes2").get<int>();
    c.head_width = j.at("head_width").get<int>();
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

int Tape::add(Tensor value) {
    values_.push_back(std::move(value));
    grads_.emplace_back();
    return static_cast<int>(values_.size()) - 1;
}

Tensor& Tape::grad(int id) {
    Tensor& g = grads_.at(static_cast<std::size_t>(id));
    if (g.data.empty() && !values_[id].data.empty()) {
        const Tensor& v = values_[id];
        g = Tensor(v.batch, v.channels, v.n1, v.n2);
    }
    return g;
}

void Tape::backward(int out, const Tensor& seed) {
    if (values_.empty()) throw std::logic_error("backward without a recorded forward pass");
    if (swept_) throw std::logic_error("tape already swept");
    if (!seed.same_shape(value(out))) throw std::invalid_argument("seed shape does not match the output");
    swept_ = true;
    grad(out) = seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
}

// ---------------------------------------------------------------------------

namespace {

struct Twiddles {
    int n1, n2, m1, m2, K1;
    std::vector<double> c1, s1, c2, s2;  // [k1idx * n1 + j1], [k2 * n2 + j2]

    Twiddles(int n1_, int n2_, int m1_, int m2_) : n1(n1_), n2(n2_), m1(m1_), m2(m2_), K1(2 * m1_ - 1) {
        const double tau = 2.0 * std::numbers::pi;
        c1.resize(static_cast<std::size_t>(K1) * n1);
        s1.resize(c1.size());
        for (int k = 0; k < K1; ++k)
            for (int j = 0; j < n1; ++j) {
                double th = tau * ((k - (m1 - 1)) * static_cast<double>(j)) / n1;
                c1[k * n1 + j] = std::cos(th);
                s1[k * n1 + j] = std::sin(th);
            }
        c2.resize(static_cast<std::size_t>(m2) * n2);
        s2.resize(c2.size());
        for (int k = 0; k < m2; ++k)
            for (int j = 0; j < n2; ++j) {
                double th = tau * (static_cast<double>(k) * j) / n2;
                c2[k * n2 + j] = std::cos(th);
                s2[k * n2 + j] = std::sin(th);
            }
    }
    std::size_t modes() const { return static_cast<std::size_t>(K1) * m2; }

    // X[k1idx * m2 + k2] = sum_j x_j exp(-i theta)
    void analysis(const double* x, cd* X) const {
        std::vector<cd> A(static_cast<std::size_t>(n1) * m2);
        for (int j1 = 0; j1 < n1; ++j1)
            for (int k2 = 0; k2 < m2; ++k2) {
                double re = 0.0, im = 0.0;
                const double* row = x + static_cast<std::size_t>(j1) * n2;
                for (int j2 = 0; j2 < n2; ++j2) {
                    re += row[j2] * c2[k2 * n2 + j2];
                    im -= row[j2] * s2[k2 * n2 + j2];
                }
                A[j1 * m2 + k2] = cd(re, im);
            }
        for (int k1 = 0; k1 < K1; ++k1)
            for (int k2 = 0; k2 < m2; ++k2) {
                cd acc = 0.0;
                for (int j1 = 0; j1 < n1; ++j1) acc += A[j1 * m2 + k2] * cd(c1[k1 * n1 + j1], -s1[k1 * n1 + j1]);
                X[k1 * m2 + k2] = acc;
            }
    }

    // y_j += sum_k w_k2 Re(Y_k exp(i theta))
    void synthesis(const cd* Y, const std::vector<double>& w, double* y) const {
        std::vector<cd> B(static_cast<std::size_t>(n1) * m2);
        for (int j1 = 0; j1 < n1; ++j1)
            for (int k2 = 0; k2 < m2; ++k2) {
                cd acc = 0.0;
                for (int k1 = 0; k1 < K1; ++k1) acc += Y[k1 * m2 + k2] * cd(c1[k1 * n1 + j1], s1[k1 * n1 + j1]);
                B[j1 * m2 + k2] = acc * w[k2];
            }
        for (int j1 = 0; j1 < n1; ++j1) {
            double* row = y + static_cast<std::size_t>(j1) * n2;
            for (int j2 = 0; j2 < n2; ++j2) {
                double acc = 0.0;
                for (int k2 = 0; k2 < m2; ++k2) {
                    const cd& b = B[j1 * m2 + k2];
                    acc += b.real() * c2[k2 * n2 + j2] - b.imag() * s2[k2 * n2 + j2];
                }
                row[j2] += acc;
            }
        }
    }
};

struct Linear {
    std::size_t w, b;  // offsets into theta
    int in, out;
};

// y = W x + b, pointwise over the grid
int linear(Tape& T, const std::vector<double>& theta, int x_id, const Linear& L) {
    const Tensor& x = T.value(x_id);
    if (x.channels != L.in) throw std::invalid_argument("channel mismatch in pointwise layer");
    Tensor y(x.batch, L.out, x.n1, x.n2);
    const std::size_t P = x.plane();
    const double* W = theta.data() + L.w;
    const double* bias = theta.data() + L.b;
    for (int b = 0; b < x.batch; ++b)
        for (int o = 0; o < L.out; ++o) {
            double* yo = y.channel(b, o);
            for (std::size_t p = 0; p < P; ++p) yo[p] = bias[o];
            for (int i = 0; i < L.in; ++i) {
                const double wi = W[o * L.in + i];
                const double* xi = x.channel(b, i);
                for (std::size_t p = 0; p < P; ++p) yo[p] += wi * xi[p];
            }
        }
    int y_id = T.add(std::move(y));
    T.record([x_id, y_id, L, &theta](Tape& t) {
        const Tensor& x = t.value(x_id);
        const Tensor& gy = t.grad(y_id);
        Tensor& gx = t.grad(x_id);
        auto& pg = t.param_grad();
        const std::size_t P = x.plane();
        const double* W = theta.data() + L.w;
        for (int b = 0; b < x.batch; ++b)
            for (int o = 0; o < L.out; ++o) {
                const double* g = gy.channel(b, o);
                double sb = 0.0;
                for (std::size_t p = 0; p < P; ++p) sb += g[p];
                pg[L.b + o] += sb;
                for (int i = 0; i < L.in; ++i) {
                    const double* xi = x.channel(b, i);
                    double* gxi = gx.channel(b, i);
                    const double wi = W[o * L.in + i];
                    double sw = 0.0;
                    for (std::size_t p = 0; p < P; ++p) {
                        sw += g[p] * xi[p];
                        gxi[p] += wi * g[p];
                    }
                    pg[L.w + static_cast<std::size_t>(o) * L.in + i] += sw;
                }
            }
    });
    return y_id;
}

struct Spectral {
    std::size_t re, im;  // offsets; layout [in][out][k1idx][k2]
    int in, out;
};

int spectral(Tape& T, const std::vector<double>& theta, int x_id, const Spectral& S, int m1, int m2) {
    const Tensor& x = T.value(x_id);
    auto tw = std::make_shared<Twiddles>(x.n1, x.n2, m1, m2);
    const std::size_t K = tw->modes();
    const double N = static_cast<double>(x.plane());
    std::vector<double> wfwd(static_cast<std::size_t>(m2));
    for (int k2 = 0; k2 < m2; ++k2) wfwd[k2] = (k2 == 0 ? 1.0 : 2.0) / N;

    auto X = std::make_shared<std::vector<cd>>(static_cast<std::size_t>(x.batch) * S.in * K);
    for (int b = 0; b < x.batch; ++b)
        for (int i = 0; i < S.in; ++i) tw->analysis(x.channel(b, i), X->data() + (static_cast<std::size_t>(b) * S.in + i) * K);

    Tensor y(x.batch, S.out, x.n1, x.n2);
    std::vector<cd> Y(K);
    for (int b = 0; b < x.batch; ++b)
        for (int o = 0; o < S.out; ++o) {
            std::fill(Y.begin(), Y.end(), cd(0.0));
            for (int i = 0; i < S.in; ++i) {
                const cd* Xi = X->data() + (static_cast<std::size_t>(b) * S.in + i) * K;
                const std::size_t w0 = (static_cast<std::size_t>(i) * S.out + o) * K;
                for (std::size_t k = 0; k < K; ++k) Y[k] += cd(theta[S.re + w0 + k], theta[S.im + w0 + k]) * Xi[k];
            }
            tw->synthesis(Y.data(), wfwd, y.channel(b, o));
        }
    int y_id = T.add(std::move(y));
    T.record([x_id, y_id, S, tw, X, wfwd, &theta](Tape& t) {
        const Tensor& gy = t.grad(y_id);
        Tensor& gx = t.grad(x_id);
        auto& pg = t.param_grad();
        const std::size_t K = tw->modes();
        const std::vector<double> ones(static_cast<std::size_t>(tw->m2), 1.0);
        std::vector<cd> GY(static_cast<std::size_t>(S.out) * K), GX(K);
        for (int b = 0; b < gy.batch; ++b) {
            for (int o = 0; o < S.out; ++o) {
                cd* g = GY.data() + static_cast<std::size_t>(o) * K;
                tw->analysis(gy.channel(b, o), g);
                for (std::size_t k = 0; k < K; ++k) g[k] *= wfwd[k % static_cast<std::size_t>(tw->m2)];
            }
            for (int i = 0; i < S.in; ++i) {
                const cd* Xi = X->data() + (static_cast<std::size_t>(b) * S.in + i) * K;
                std::fill(GX.begin(), GX.end(), cd(0.0));
                for (int o = 0; o < S.out; ++o) {
                    const cd* g = GY.data() + static_cast<std::size_t>(o) * K;
                    const std::size_t w0 = (static_cast<std::size_t>(i) * S.out + o) * K;
                    for (std::size_t k = 0; k < K; ++k) {
                        cd dW = g[k] * std::conj(Xi[k]);
                        pg[S.re + w0 + k] += dW.real();
                        pg[S.im + w0 + k] += dW.imag();
                        GX[k] += g[k] * std::conj(cd(theta[S.re + w0 + k], theta[S.im + w0 + k]));
                    }
                }
                tw->synthesis(GX.data(), ones, gx.channel(b, i));
            }
        }
    });
    return y_id;
}

int add(Tape& T, int a_id, int b_id) {
    Tensor y = T.value(a_id);
    const Tensor& b = T.value(b_id);
    for (std::size_t p = 0; p < y.size(); ++p) y.data[p] += b.data[p];
    int y_id = T.add(std::move(y));
    T.record([a_id, b_id, y_id](Tape& t) {
        const Tensor& gy = t.grad(y_id);
        for (int id : {a_id, b_id}) {
            Tensor& g = t.grad(id);
            for (std::size_t p = 0; p < g.size(); ++p) g.data[p] += gy.data[p];
        }
    });
    return y_id;
}

int gelu(Tape& T, int x_id) {
    Tensor y = T.value(x_id);
    for (double& v : y.data) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    int y_id = T.add(std::move(y));
    T.record([x_id, y_id](Tape& t) {
        const Tensor& x = t.value(x_id);
        const Tensor& gy = t.grad(y_id);
        Tensor& gx = t.grad(x_id);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t p = 0; p < x.size(); ++p) {
            double v = x.data[p];
            double d = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)) + v * std::exp(-0.5 * v * v) * inv_sqrt_2pi;
            gx.data[p] += d * gy.data[p];
        }
    });
    return y_id;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t OperatorNet::add_group(const std::string& name, std::size_t size) {
    std::size_t offset = theta_.size();
    groups_.push_back(ParamGroup{name, offset, size});
    theta_.resize(offset + size, 0.0);
    return offset;
}

OperatorNet::OperatorNet(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    cfg_.validate();
    const std::size_t K = static_cast<std::size_t>(2 * cfg_.modes1 - 1) * cfg_.modes2;
    const auto w = static_cast<std::size_t>(cfg_.width);
    add_group("lift.W", w * cfg_.in_channels);
    add_group("lift.b", w);
    for (int l = 0; l < cfg_.blocks; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        add_group(p + "spec.re", w * w * K);
        add_group(p + "spec.im", w * w * K);
        add_group(p + "skip.W", w * w);
        add_group(p + "skip.b", w);
    }
    add_group("head1.W", static_cast<std::size_t>(cfg_.head_width) * w);
    add_group("head1.b", static_cast<std::size_t>(cfg_.head_width));
    add_group("head2.W", static_cast<std::size_t>(cfg_.out_channels) * cfg_.head_width);
    add_group("head2.b", static_cast<std::size_t>(cfg_.out_channels));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto fill_linear = [&](const std::string& name, int fan_in) {
        const auto& g = group(name);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t k = 0; k < g.size; ++k) theta_[g.offset + k] = bound * (2.0 * unit(rng) - 1.0);
    };
    fill_linear("lift.W", cfg_.in_channels);
    for (int l = 0; l < cfg_.blocks; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        const double scale = 1.0 / (static_cast<double>(cfg_.width) * cfg_.width);
        for (const char* part : {"spec.re", "spec.im"}) {
            const auto& g = group(p + part);
            for (std::size_t k = 0; k < g.size; ++k) theta_[g.offset + k] = scale * unit(rng);
        }
        fill_linear(p + "skip.W", cfg_.width);
    }
    fill_linear("head1.W", cfg_.width);
    fill_linear("head2.W", cfg_.head_width);
}

const ParamGroup& OperatorNet::group(const std::string& name) const {
    for (const auto& g : groups_)
        if (g.name == name) return g;
    throw std::invalid_argument("no parameter group " + name);
}

double OperatorNet::flops_per_sample(int n1, int n2) const {
    const double P = static_cast<double>(n1) * n2, w = cfg_.width;
    const double K1 = 2.0 * cfg_.modes1 - 1, m2 = cfg_.modes2;
    double spec = 2.0 * w * (P * m2 + n1 * m2 * K1) * 2.0 + w * w * K1 * m2 * 4.0;
    double f = P * w * cfg_.in_channels + cfg_.blocks * (spec + P * w * w) + P * (w * cfg_.head_width + cfg_.head_width * cfg_.out_channels);
    return 2.0 * f;
}

Tensor OperatorNet::forward(const Tensor& input, Tape* tape) const {
    if (input.channels != cfg_.in_channels) throw std::invalid_argument("input has the wrong number of channels");
    if (input.n1 < 2 * cfg_.modes1 || input.n2 < 2 * cfg_.modes2)
        throw std::invalid_argument("grid " + std::to_string(input.n1) + "x" + std::to_string(input.n2) +
                                    " cannot carry " + std::to_string(cfg_.modes1) + "x" + std::to_string(cfg_.modes2) + " modes");
    Tape local;
    Tape& T = tape ? *tape : local;
    if (!T.empty()) throw std::logic_error("forward needs a fresh tape");
    T.param_grad().assign(theta_.size(), 0.0);

    auto lin = [&](const std::string& prefix, int in, int out) {
        return Linear{group(prefix + ".W").offset, group(prefix + ".b").offset, in, out};
    };
    int x = T.add(input);
    x = linear(T, theta_, x, lin("lift", cfg_.in_channels, cfg_.width));
    for (int l = 0; l < cfg_.blocks; ++l) {
        const std::string p = "block" + std::to_string(l);
        Spectral S{group(p + ".spec.re").offset, group(p + ".spec.im").offset, cfg_.width, cfg_.width};
        int s = spectral(T, theta_, x, S, cfg_.modes1, cfg_.modes2);
        int k = linear(T, theta_, x, lin(p + ".skip", cfg_.width, cfg_.width));
        x = add(T, s, k);
        if (l + 1 < cfg_.blocks) x = gelu(T, x);
    }
    x = linear(T, theta_, x, lin("head1", cfg_.width, cfg_.head_width));
    x = gelu(T, x);
    x = linear(T, theta_, x, lin("head2", cfg_.head_width, cfg_.out_channels));
    return T.value(x);
}

std::vector<double> OperatorNet::backward(Tape& tape, const Tensor& output_grad) const {
    if (tape.empty()) throw std::logic_error("backward without a recorded forward pass");
    // forward records the output last
    tape.backward(static_cast<int>(tape.size()) - 1, output_grad);
    return tape.param_grad();
}

void OperatorNet::save(const std::filesystem::path& path, const nlohmann::json& extra) const {
    nlohmann::json h;
    h["schema"] = 1;
    h["kind"] = "checkpoint";
    h["architecture"] = cfg_.to_json();
    h["seed"] = seed_;
    h["parameter_count"] = theta_.size();
    h["extra"] = extra;
    write_container(path, h, theta_);
}

OperatorNet OperatorNet::load(const std::filesystem::path& path, nlohmann::json* extra) {
    auto [h, payload] = read_container(path);
    try {
        if (h.at("kind").get<std::string>() != "checkpoint") throw std::runtime_error(path.string() + " is not a checkpoint");
        OperatorNet net(NetConfig::from_json(h.at("architecture")), h.at("seed").get<std::uint64_t>());
        if (payload.size() != net.theta_.size() || h.at("parameter_count").get<std::size_t>() != payload.size())
            throw std::runtime_error(path.string() + ": parameter count does not match the architecture");
        net.theta_ = std::move(payload);
        if (extra) *extra = h.value("extra", nlohmann::json::object());
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": corrupt checkpoint header: " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void adam_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (grad.size() != theta.size()) throw std::invalid_argument("gradient size does not match parameters");
    if (state.m.empty()) {
        state.m.assign(theta.size(), 0.0);
        state.v.assign(theta.size(), 0.0);
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < theta.size(); ++k) {
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * grad[k];
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * grad[k] * grad[k];
        theta[k] -= lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + eps);
    }
}

}  // namespace symflow
