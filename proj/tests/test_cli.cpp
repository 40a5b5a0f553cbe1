#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mfglab/cli.hpp"

using namespace mfglab;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    static const fs::path dir = [] {
        spdlog::set_level(spdlog::level::warn);
        fs::path d = fs::temp_directory_path() / "mfglab_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string write_cfg(const std::string& name, const Json& doc) {
    const fs::path p = scratch() / (name + ".json");
    std::ofstream(p) << doc.dump(1);
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

int run(const std::string& cfg, const std::string& out, std::string* msg = nullptr) {
    std::ostringstream diag;
    RunOptions o;
    o.out = (scratch() / out).string();
    o.workers = 1;
    const int code = run_experiment(cfg, o, diag);
    if (msg) *msg = diag.str();
    return code;
}

Json forward_cfg() {
    return Json::parse(R"({
        "kind": "forward",
        "grid": {"dim": 2, "n_cells": 16}
    })");
}

Json partial_cfg() {
    return Json::parse(R"({
        "kind": "partial-reconstruct",
        "grid": {"n_cells": 8},
        "hidden": {"r": {"base": 1.0, "bumps": [{"center": [0.5, 0.5, 0.5], "width": 0.02, "amplitude": 0.5}]}},
        "cone": {"lambda_prime": [1, 0, 0], "eps0": 0.25, "h": 0.25, "count": 3, "cutoff": 1}
    })");
}

}  // namespace

TEST_CASE("minimal forward run writes all-zero solution fields") {
    REQUIRE(run(write_cfg("fwd", forward_cfg()), "fwd") == 0);
    for (const char* f : {"u.csv", "m.csv"}) {
        auto field = read_field_csv((scratch() / "fwd" / f).string());
        CHECK(field.values.size() == 17 * 17);
        CHECK(field.values.cwiseAbs().maxCoeff() == 0.0);
    }
    std::ifstream is(scratch() / "fwd" / "convergence.csv");
    std::string head;
    std::getline(is, head);
    CHECK(head == "x,y");
}

TEST_CASE("configuration errors exit with 2 and name the key") {
    Json doc = forward_cfg();
    doc["grid"].erase("n_cells");
    std::string msg;
    CHECK(run(write_cfg("no_cells", doc), "no_cells", &msg) == 2);
    CHECK(msg.find("grid.n_cells") != std::string::npos);

    doc = forward_cfg();
    doc.erase("kind");
    CHECK(run(write_cfg("no_kind", doc), "no_kind", &msg) == 2);
    CHECK(msg.find("kind") != std::string::npos);

    doc = forward_cfg();
    doc["coefficients"] = {{"k", {{"bumps", {{{"width", 0.1}}}}}}};
    CHECK(run(write_cfg("bad_bump", doc), "bad_bump", &msg) == 2);
    CHECK(msg.find("coefficients.k.bumps[0].center") != std::string::npos);

    const fs::path junk = scratch() / "junk.json";
    std::ofstream(junk) << "{ not json";
    CHECK(run(junk.string(), "junk", &msg) == 2);
    CHECK(run((scratch() / "missing.json").string(), "missing", &msg) == 2);
}

TEST_CASE("verify") {
    std::ostringstream os;
    CHECK(verify_experiment(write_cfg("v_ok", forward_cfg()), os) == 0);
    CHECK(os.str().find("config hash") != std::string::npos);

    Json doc = forward_cfg();
    doc["boundary"] = {{"f", 0.01}, {"g", 0.01}, {"amplitude", 10.0}};
    std::ostringstream o2;
    CHECK(verify_experiment(write_cfg("v_amp", doc), o2) == 2);
    CHECK(o2.str().find("solver.delta") != std::string::npos);

    Json cone = partial_cfg();
    std::ostringstream o3;
    CHECK(verify_experiment(write_cfg("v_cone_ok", cone), o3) == 0);
    cone["cone"]["lambda_prime"] = {1, 1, 0};
    std::ostringstream o4;
    CHECK(verify_experiment(write_cfg("v_cone", cone), o4) == 2);
    CHECK(o4.str().find("cone.lambda_prime") != std::string::npos);

    Json low = Json::parse(R"({"kind": "reconstruct", "grid": {"n_cells": 8}, "hidden": {},
                               "reconstruction": {"slot": "r", "h": 0.125}})");
    std::ostringstream o5;
    CHECK(verify_experiment(write_cfg("v_floor", low), o5) == 2);
    low["reconstruction"]["slot"] = "q";
    low["reconstruction"]["h"] = 0.25;
    std::ostringstream o6;
    CHECK(verify_experiment(write_cfg("v_slot", low), o6) == 2);
}

TEST_CASE("config hash ignores key order") {
    const auto a = ExperimentConfig::parse(Json::parse(R"({"kind": "forward", "grid": {"n_cells": 8, "dim": 2}})"));
    const auto b = ExperimentConfig::parse(Json::parse(R"({"grid": {"dim": 2, "n_cells": 8}, "kind": "forward"})"));
    const auto c = ExperimentConfig::parse(Json::parse(R"({"grid": {"dim": 2, "n_cells": 9}, "kind": "forward"})"));
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
    CHECK(a.hash().size() == 64);
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("field and trace specs") {
    auto g = make_grid(3, 4);
    auto f = make_field(g, Json::parse(R"({"base": 1, "bumps": [{"center": [0, 0, 0], "width": 0.5, "amplitude": 2}]})"), "f");
    CHECK(f.values[0].real() == doctest::Approx(3.0));
    const int far = g->node({4, 4, 4});
    CHECK(f.values[far].real() == doctest::Approx(1.0 + 2.0 * std::exp(-3.0 / 0.5)));
    auto t = make_trace(g, Json::parse(R"({"cos": {"freq": [1, 0, 0], "amplitude": 0.5, "base": 1}})"), "t");
    CHECK(t.values[0].real() == doctest::Approx(1.5));
    CHECK_THROWS_AS(make_field(g, Json("x"), "f"), ConfigError);

    const fs::path p = scratch() / "field.csv";
    write_field_csv(p.string(), f);
    auto back = make_field(g, Json{{"file", p.string()}}, "f");
    CHECK((back.values - f.values).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK_THROWS_AS(make_field(make_grid(3, 5), Json{{"file", p.string()}}, "f"), ConfigError);
}

TEST_CASE("runs are deterministic and the manifest lists every output") {
    Json fwd = forward_cfg();
    fwd["grid"]["n_cells"] = 8;
    fwd["boundary"] = {{"f", {{"cos", {{"freq", {1, 0, 0}}, {"amplitude", 0.02}}}}}, {"g", 0.03}};
    Json dn = Json::parse(R"({"kind": "dnmap", "grid": {"n_cells": 6}, "dn": {"max_freq": 1},
                              "noise": {"sigma": 0.01, "seed": 12345}})");
    Json rec = Json::parse(R"({"kind": "reconstruct", "grid": {"n_cells": 8},
        "hidden": {"r": {"base": 1.0, "bumps": [{"center": [0.5, 0.5, 0.5], "width": 0.05, "amplitude": 0.3}]}},
        "reconstruction": {"slot": "r", "cutoff": 0, "h": 0.25}, "noise": {"sigma": 1e-3, "seed": 7}})");
    for (auto [name, doc] : std::vector<std::pair<std::string, Json>>{{"det_fwd", fwd}, {"det_dn", dn}, {"det_rec", rec}}) {
        CAPTURE(name);
        const auto cfg = write_cfg(name, doc);
        REQUIRE(run(cfg, name + "_a") == 0);
        REQUIRE(run(cfg, name + "_b") == 0);
        const Json man = Json::parse(slurp(scratch() / (name + "_a") / "manifest.json"));
        CHECK(man["config_hash"] == load_config(cfg).hash());
        CHECK(man["status"] == "ok");
        CHECK(!man["stages"].empty());
        std::set<std::string> listed;
        for (const auto& o : man["outputs"]) {
            const std::string file = o["file"];
            listed.insert(file);
            const std::string bytes = slurp(scratch() / (name + "_a") / file);
            CHECK(o["sha256"] == sha256_hex(bytes));
            CHECK(o["bytes"] == bytes.size());
            if (file.size() > 4 && file.substr(file.size() - 4) == ".csv")
                CHECK(bytes == slurp(scratch() / (name + "_b") / file));
        }
        for (const auto& e : fs::directory_iterator(scratch() / (name + "_a")))
            if (e.path().filename() != "manifest.json") CHECK(listed.count(e.path().filename().string()) == 1);
    }
}

TEST_CASE("noise depends on the seed and the data only") {
    auto g = make_grid(3, 4);
    DnOracle id = [](const VecC& d) { return d; };
    VecC a = VecC::Ones(g->boundary_count()), b = 2.0 * a;
    auto n1 = noisy_dn(id, 0.1, 1), n2 = noisy_dn(id, 0.1, 1), n3 = noisy_dn(id, 0.1, 2);
    CHECK(n1(a) == n2(a));
    CHECK(n1(a) != n3(a));
    CHECK(n1(b) != n1(a));
    CHECK(noisy_dn(id, 0.0, 1)(a) == a);
}

TEST_CASE("failed declared checks exit with 1") {
    Json rec = Json::parse(R"({"kind": "reconstruct", "grid": {"n_cells": 8},
        "hidden": {"r": {"base": 1.0, "bumps": [{"center": [0.5, 0.5, 0.5], "width": 0.05, "amplitude": 0.3}]}},
        "reconstruction": {"slot": "r", "cutoff": 0}, "checks": {"max_error": 1e-6}})");
    std::string msg;
    CHECK(run(write_cfg("chk", rec), "chk", &msg) == 1);
    const Json man = Json::parse(slurp(scratch() / "chk" / "manifest.json"));
    CHECK(man["checks"][0]["pass"] == false);

    Json fwd = forward_cfg();
    fwd["solver"] = {{"max_iter", 1}, {"tol", 1e-30}};
    fwd["boundary"] = {{"f", 0.05}, {"g", 0.05}};
    CHECK(run(write_cfg("nonconv", fwd), "nonconv", &msg) == 1);
    CHECK(msg.find("solve") != std::string::npos);
}

TEST_CASE("stored DN matrices drive the reconstruction") {
    Json dn = Json::parse(R"({"kind": "dnmap", "grid": {"n_cells": 8}, "dn": {"max_freq": 2, "slot": "m"}})");
    REQUIRE(run(write_cfg("store_dn", dn), "store_dn") == 0);
    Json rec = Json::parse(R"({"kind": "reconstruct", "grid": {"n_cells": 8}, "reconstruction": {"slot": "r", "cutoff": 1}})");
    rec["hidden"] = {{"dn_file", (scratch() / "store_dn" / "dn_m.csv").string()}, {"max_freq", 2}};
    REQUIRE(run(write_cfg("from_file", rec), "from_file") == 0);
    auto f = read_field_csv((scratch() / "from_file" / "recovered.csv").string());
    CHECK(f.values.cwiseAbs().maxCoeff() <= 1e-8);

    rec["hidden"]["max_freq"] = 3;
    std::string msg;
    CHECK(run(write_cfg("from_file_bad", rec), "from_file_bad", &msg) == 2);
}

TEST_CASE("other experiment kinds") {
    Json lin = Json::parse(R"({"kind": "linearize", "grid": {"dim": 2, "n_cells": 12},
        "linearize": {"f": [0.5, {"cos": {"freq": [0, 1, 0]}}], "g": [1.0, 0.5], "eps": [1e-2, 5e-3]},
        "checks": {"ratio": [1.7, 2.3]}})");
    CHECK(run(write_cfg("lin", lin), "lin") == 0);
    Json cgo = Json::parse(R"({"kind": "cgo-sweep", "grid": {"n_cells": 12},
        "cgo": {"c": 1.0, "h": [0.5, 0.25], "vanishing": {"eps0": 0.25}},
        "checks": {"strictly_decreasing": true}})");
    CHECK(run(write_cfg("cgo", cgo), "cgo") == 0);
    for (const char* f : {"decay.csv", "cgo_table.csv", "vanishing_decay.csv", "vanishing_table.csv"})
        CHECK(fs::exists(scratch() / "cgo" / f));
    Json part = partial_cfg();
    part["checks"] = {{"max_audit", 1e-8}};
    CHECK(run(write_cfg("part", part), "part") == 0);
    CHECK(fs::exists(scratch() / "part" / "audit.csv"));
    CHECK(fs::exists(scratch() / "part" / "cone_fourier.csv"));
}

TEST_CASE("command-line tool") {
    const std::string tool = MFGLAB_TOOL;
    auto code = [](const std::string& cmd) {
        const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    CHECK(code(tool + " verify " + write_cfg("t_ok", forward_cfg())) == 0);
    Json doc = forward_cfg();
    doc["grid"].erase("n_cells");
    CHECK(code(tool + " run " + write_cfg("t_bad", doc)) == 2);
    CHECK(code(tool + " run " + write_cfg("t_run", forward_cfg()) + " --workers 2 --out " + (scratch() / "t_out").string()) == 0);
    CHECK(fs::exists(scratch() / "t_out" / "manifest.json"));
    CHECK(code(tool + " bogus") == 2);
    CHECK(code("MFGLAB_LOG=debug " + tool + " verify " + write_cfg("t_ok2", forward_cfg())) == 0);
}

TEST_CASE("bundled bump recovery config") {
    std::string msg;
    std::ostringstream diag;
    RunOptions o;
    o.out = (scratch() / "bundled").string();
    const int code = run_experiment(std::string(MFGLAB_SOURCE_DIR) + "/configs/recover_r.cfg", o, diag);
    INFO(diag.str());
    REQUIRE(code == 0);
    std::ifstream is(scratch() / "bundled" / "metrics.csv");
    std::string line;
    double err = -1.0;
    while (std::getline(is, line))
        if (line.rfind("relative_error,", 0) == 0) err = std::stod(line.substr(15));
    CHECK(err >= 0.0);
    CHECK(err <= 0.30);
}
