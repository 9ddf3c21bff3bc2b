#include "symflow/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <list>
#include <map>
#include <set>
#include <sstream>

namespace symflow {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>> kKeys = {
    {"", {"pde", "seed", "out_dir"}},
    {"data", {"grid", "seed", "noise", "nu", "n_train", "n_test", "train_path", "test_path"}},
    {"loss", {"method", "gamma", "generators", "include_residual", "w_data", "w_aux", "w_residual", "bypass_verify"}},
    {"train", {"epochs", "batch_size", "lr", "lr_decay", "decay_every", "seed"}},
    {"net", {"width", "blocks", "modes1", "modes2", "head_width"}},
    {"eval", {"resolutions"}},
    {"ablate", {"noise_levels", "methods", "order", "threads"}},
};

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v, auto&& f) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + f(v[i]);
    return out;
}

class Reader {
  public:
    Reader(const pt::ptree& tree, std::string origin) : tree_(tree), origin_(std::move(origin)) {}

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError(origin_ + ": " + (key.empty() ? "" : "'" + key + "': ") + what);
    }

    const std::string* raw(const std::string& path) const {
        const auto node = tree_.get_child_optional(pt::ptree::path_type(path, '.'));
        if (!node) return nullptr;
        values_.push_back(trim(node->data()));
        return &values_.back();
    }

    template <class T>
    void number(const std::string& path, T& out) const {
        const std::string* s = raw(path);
        if (!s) return;
        T v{};
        const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
        if (ec != std::errc() || p != s->data() + s->size()) fail(path, "expected a number, got '" + *s + "'");
        out = v;
    }

    void flag(const std::string& path, bool& out) const {
        const std::string* s = raw(path);
        if (!s) return;
        if (*s == "true")
            out = true;
        else if (*s == "false")
            out = false;
        else
            fail(path, "expected true or false, got '" + *s + "'");
    }

    void text(const std::string& path, std::string& out) const {
        if (const std::string* s = raw(path)) out = *s;
    }

    template <class T>
    void numbers(const std::string& path, std::vector<T>& out) const {
        const std::string* s = raw(path);
        if (!s) return;
        out.clear();
        for (const auto& item : split_list(*s)) {
            T v{};
            const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            if (item.empty() || ec != std::errc() || p != item.data() + item.size())
                fail(path, "expected a list of numbers, got '" + *s + "'");
            out.push_back(v);
        }
    }

    void words(const std::string& path, std::vector<std::string>& out) const {
        if (const std::string* s = raw(path)) out = split_list(*s);
    }

  private:
    const pt::ptree& tree_;
    std::string origin_;
    mutable std::list<std::string> values_;
};

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            if (kKeys.at("").count(name) || (!name.empty() && kKeys.count(name))) continue;
            throw ConfigError(origin + ": unknown top-level key '" + name + "'");
        }
        const auto sec = kKeys.find(name);
        if (name.empty() || sec == kKeys.end()) throw ConfigError(origin + ": unknown section [" + name + "]");
        for (const auto& [key, leaf] : node)
            if (!sec->second.count(key)) throw ConfigError(origin + ": unknown key '" + key + "' in [" + name + "]");
    }

    const Reader r(tree, origin);
    RunConfig c;
    std::string pde = "burgers", method = "baseline";
    r.text("pde", pde);
    r.text("loss.method", method);
    if (pde != "burgers" && pde != "darcy") r.fail("pde", "expected burgers or darcy, got '" + pde + "'");
    Method m{};
    try {
        m = method_from_string(method);
    } catch (const std::invalid_argument& e) {
        r.fail("loss.method", e.what());
    }
    ExperimentConfig& x = c.experiment;
    x = ExperimentConfig::desk(pde, m);

    r.number("seed", c.seed);
    x.data_seed = x.train.seed = c.seed;
    std::string out_dir = c.out_dir.string();
    r.text("out_dir", out_dir);
    c.out_dir = out_dir;

    if (const std::string* g = r.raw("data.grid")) {
        const auto xpos = g->find('x');
        int a = 0, b = 0;
        const auto [p1, e1] = std::from_chars(g->data(), g->data() + (xpos == std::string::npos ? 0 : xpos), a);
        const auto [p2, e2] =
            xpos == std::string::npos ? std::from_chars_result{nullptr, std::errc::invalid_argument}
                                      : std::from_chars(g->data() + xpos + 1, g->data() + g->size(), b);
        if (e1 != std::errc() || e2 != std::errc() || p2 != g->data() + g->size() || p1 != g->data() + xpos)
            r.fail("data.grid", "expected AxB, got '" + *g + "'");
        x.n1 = a;
        x.n2 = b;
    }
    r.number("data.seed", x.data_seed);
    r.number("data.noise", x.noise);
    r.number("data.nu", x.nu);
    r.number("data.n_train", x.train.n_train);
    r.number("data.n_test", x.train.n_test);
    r.text("data.train_path", c.train_path);
    r.text("data.test_path", c.test_path);

    r.number("loss.gamma", x.loss.gamma);
    r.words("loss.generators", x.loss.generators);
    r.flag("loss.include_residual", x.loss.include_residual);
    r.number("loss.w_data", x.loss.w_data);
    r.number("loss.w_aux", x.loss.w_aux);
    r.number("loss.w_residual", x.loss.w_residual);
    r.flag("loss.bypass_verify", x.bypass_verify);

    r.number("train.epochs", x.train.epochs);
    r.number("train.batch_size", x.train.batch_size);
    r.number("train.lr", x.train.lr);
    r.number("train.lr_decay", x.train.lr_decay);
    r.number("train.decay_every", x.train.decay_every);
    r.number("train.seed", x.train.seed);

    r.number("net.width", x.net.width);
    r.number("net.blocks", x.net.blocks);
    r.number("net.modes1", x.net.modes1);
    r.number("net.modes2", x.net.modes2);
    r.number("net.head_width", x.net.head_width);

    r.numbers("eval.resolutions", x.resolutions);

    r.numbers("ablate.noise_levels", c.noise_levels);
    std::vector<std::string> methods;
    r.words("ablate.methods", methods);
    if (r.raw("ablate.methods")) {
        c.ablate_methods.clear();
        for (const auto& s : methods) try {
                c.ablate_methods.push_back(method_from_string(s));
            } catch (const std::invalid_argument& e) {
                r.fail("ablate.methods", e.what());
            }
    }
    c.ablate_order = x.loss.generators;
    r.words("ablate.order", c.ablate_order);
    r.number("ablate.threads", c.threads);

    try {
        x.validate();
    } catch (const std::invalid_argument& e) {
        r.fail("", e.what());
    }
    if (c.threads < 1) r.fail("ablate.threads", "must be >= 1");
    for (double v : c.noise_levels)
        if (v < 0) r.fail("ablate.noise_levels", "levels must be >= 0");
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::string RunConfig::to_text() const {
    const ExperimentConfig& x = experiment;
    const auto id = [](const std::string& s) { return s; };
    const auto num = [](auto v) { return std::to_string(v); };
    std::ostringstream os;
    os << "pde = " << x.pde << "\nseed = " << seed << "\nout_dir = " << out_dir.string() << "\n\n";
    os << "[data]\ngrid = " << x.n1 << 'x' << x.n2 << "\nseed = " << x.data_seed << "\nnoise = " << fmt(x.noise)
       << "\nnu = " << fmt(x.nu) << "\nn_train = " << x.train.n_train << "\nn_test = " << x.train.n_test
       << "\ntrain_path = " << train_path << "\ntest_path = " << test_path << "\n\n";
    os << "[loss]\nmethod = " << to_string(x.loss.method) << "\ngamma = " << fmt(x.loss.gamma)
       << "\ngenerators = " << join(x.loss.generators, id)
       << "\ninclude_residual = " << (x.loss.include_residual ? "true" : "false") << "\nw_data = " << fmt(x.loss.w_data)
       << "\nw_aux = " << fmt(x.loss.w_aux) << "\nw_residual = " << fmt(x.loss.w_residual)
       << "\nbypass_verify = " << (x.bypass_verify ? "true" : "false") << "\n\n";
    os << "[train]\nepochs = " << x.train.epochs << "\nbatch_size = " << x.train.batch_size << "\nlr = " << fmt(x.train.lr)
       << "\nlr_decay = " << fmt(x.train.lr_decay) << "\ndecay_every = " << x.train.decay_every
       << "\nseed = " << x.train.seed << "\n\n";
    os << "[net]\nwidth = " << x.net.width << "\nblocks = " << x.net.blocks << "\nmodes1 = " << x.net.modes1
       << "\nmodes2 = " << x.net.modes2 << "\nhead_width = " << x.net.head_width << "\n\n";
    os << "[eval]\nresolutions = " << join(x.resolutions, num) << "\n\n";
    os << "[ablate]\nnoise_levels = " << join(noise_levels, fmt)
       << "\nmethods = " << join(ablate_methods, [](Method m) { return to_string(m); })
       << "\norder = " << join(ablate_order, id) << "\nthreads = " << threads << "\n";
    return os.str();
}

}  // namespace symflow
