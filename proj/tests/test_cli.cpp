#include "symflow/config.hpp"
#include "symflow/datasets.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace symflow;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

fs::path scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "symflow_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Run run(const std::string& args) {
    const fs::path log = scratch() / "out.txt";
    const std::string cmd = std::string(SYMFLOW_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// `data_extra` lands inside [data].
fs::path tiny_config(const std::string& name, const std::string& data_extra = "") {
    const fs::path p = scratch() / (name + ".cfg");
    std::ofstream f(p);
    f << "pde = burgers\nseed = 5\nout_dir = " << (scratch() / name).string()
      << "\n[data]\ngrid = 16x13\nn_train = 4\nn_test = 2\n"
      << data_extra
      << "[loss]\nmethod = evolutionary_symmetry\n"
         "[train]\nepochs = 2\nbatch_size = 2\n[net]\nwidth = 4\nblocks = 2\nmodes1 = 4\nmodes2 = 3\nhead_width = 8\n"
         "[eval]\nresolutions =\n";
    return p;
}

}  // namespace

TEST_CASE("prolong prints normalized actions with witnesses", "[cli]") {
    auto r = run("prolong burgers v1 --evolutionary");
    REQUIRE(r.code == 0);
    REQUIRE_THAT(r.out, ContainsSubstring("-u_xt + nu*u_xxx - u*u_xx - u_x^2\n"));
    REQUIRE_THAT(r.out, ContainsSubstring("witness: (-1) * D_x[R0]"));

    r = run("prolong burgers v1");
    REQUIRE(r.code == 0);
    REQUIRE(r.out.rfind("0\n", 0) == 0);

    r = run("prolong darcy v2_h=x --evolutionary");
    REQUIRE(r.code == 0);
    REQUIRE_THAT(r.out, ContainsSubstring("witness: (1) * D_y[R0]"));

    r = run("prolong burgers v3 --nu 0.5");
    REQUIRE_THAT(r.out, ContainsSubstring("witness: (-3) * R0"));
}

TEST_CASE("usage errors exit with 2", "[cli]") {
    REQUIRE(run("prolong burgers v9").code == 2);
    REQUIRE(run("prolong heat v1").code == 2);
    REQUIRE(run("").code == 2);
    REQUIRE(run("frobnicate").code == 2);
    REQUIRE(run("gen-data --pde darcy --n 2 --grid 16 --out x.bin").code == 2);
    REQUIRE(run("ablate cfg --kind colours").code == 2);
    REQUIRE(run("verify burgers --field bad --xi \"0;0\" --phi \"u_x +\"").code == 2);
    REQUIRE(run("train /nonexistent.cfg").code == 2);
    const fs::path bad = scratch() / "bad.cfg";
    std::ofstream(bad) << "pde = burgers\n[train]\nepohcs = 3\n";
    const auto r = run("train " + bad.string());
    REQUIRE(r.code == 2);
    REQUIRE_THAT(r.out, ContainsSubstring("unknown key 'epohcs'"));
}

TEST_CASE("verify reports every catalog field and fails on a non-symmetry", "[cli]") {
    auto r = run("verify burgers");
    REQUIRE(r.code == 0);
    auto j = nlohmann::json::parse(r.out);
    REQUIRE(j.at("records").size() == 5);
    for (const auto& rec : j.at("records")) REQUIRE(rec.at("status") == "Certified");

    r = run("verify darcy --evolutionary");
    REQUIRE(r.code == 0);
    j = nlohmann::json::parse(r.out);
    REQUIRE(j.at("records").size() == 10);

    r = run("verify burgers --field du --xi \"0;0\" --phi \"1\"");
    REQUIRE(r.code == 1);
    j = nlohmann::json::parse(r.out);
    REQUIRE(j.at("all_certified") == false);
    REQUIRE(j.at("records")[0].at("status") != "Certified");
    REQUIRE(j.at("records")[0].at("targets")[0] == "u_x");
}

TEST_CASE("gen-data writes a loadable dataset", "[cli]") {
    const fs::path out = scratch() / "d.bin";
    const auto r = run("gen-data --pde darcy --n 3 --grid 16x16 --seed 2 --noise 0.05 --out " + out.string());
    REQUIRE(r.code == 0);
    const Dataset ds = load(out);
    REQUIRE(ds.samples.size() == 3);
    REQUIRE(ds.grid.describe() == "x:16,y:16");
    REQUIRE(ds.meta.at("noise") == 0.05);
}

TEST_CASE("train, eval and ablate produce deterministic artifacts", "[cli]") {
    const fs::path cfg = tiny_config("run");
    const fs::path dir = scratch() / "run";
    REQUIRE(run("train " + cfg.string()).code == 0);
    const std::string summary = slurp(dir / "summary.json");
    const std::string csv = slurp(dir / "metrics.csv");
    const std::string model = slurp(dir / "model.bin");
    REQUIRE(RunConfig::load(dir / "resolved.cfg").to_text() == RunConfig::load(cfg).to_text());
    REQUIRE(run("train " + cfg.string()).code == 0);
    REQUIRE(slurp(dir / "summary.json") == summary);
    REQUIRE(slurp(dir / "metrics.csv") == csv);
    REQUIRE(slurp(dir / "model.bin") == model);
    REQUIRE(nlohmann::json::parse(summary).at("verify_bypassed") == false);

    auto r = run("eval " + cfg.string() + " --resolutions 8,32");
    REQUIRE(r.code == 0);
    const auto ev = nlohmann::json::parse(slurp(dir / "eval.json"));
    REQUIRE(ev.at("resolutions").size() == 2);
    REQUIRE(ev.at("resolutions")[1].at("grid") == "x:32p,t:25");
    REQUIRE(ev.at("test") == nlohmann::json::parse(summary).at("test"));
    REQUIRE(run("eval " + cfg.string() + " --resolutions 8,x").code == 2);
    REQUIRE(run("eval " + cfg.string() + " --checkpoint " + (scratch() / "none.bin").string()).code == 1);

    r = run("ablate " + cfg.string() + " --kind noise");
    REQUIRE(r.code == 0);
    const auto table = nlohmann::json::parse(slurp(dir / "ablate_noise.json"));
    REQUIRE(table.at("rows").size() == 8);
    const std::string acsv = slurp(dir / "ablate_noise.csv");
    REQUIRE(std::count(acsv.begin(), acsv.end(), '\n') == 9);

    r = run("ablate " + cfg.string() + " --kind generators");
    REQUIRE(r.code == 0);
    REQUIRE(nlohmann::json::parse(slurp(dir / "ablate_generators.json")).at("rows").size() == 6);
}

TEST_CASE("bypass flag is recorded in the resolved config and report", "[cli]") {
    const fs::path cfg = tiny_config("bypass");
    REQUIRE(run("train " + cfg.string() + " --bypass-verify").code == 0);
    const auto dir = scratch() / "bypass";
    REQUIRE(RunConfig::load(dir / "resolved.cfg").experiment.bypass_verify);
    REQUIRE(nlohmann::json::parse(slurp(dir / "summary.json")).at("config").at("bypass_verify") == true);
}

TEST_CASE("train reads dataset files named in the config", "[cli]") {
    const fs::path tr = scratch() / "tr.bin", te = scratch() / "te.bin";
    REQUIRE(run("gen-data --pde burgers --n 4 --grid 16x13 --seed 1 --out " + tr.string()).code == 0);
    REQUIRE(run("gen-data --pde burgers --n 2 --grid 16x13 --seed 2 --out " + te.string()).code == 0);
    const fs::path cfg = tiny_config(
        "files", "train_path = " + tr.string() + "\ntest_path = " + te.string() + "\n");
    REQUIRE(run("train " + cfg.string()).code == 0);
    const auto s = nlohmann::json::parse(slurp(scratch() / "files" / "summary.json"));
    REQUIRE(std::isfinite(s.at("test").at("l2").get<double>()));
}
