#include "mfglab/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

namespace mfglab {

namespace {

const std::vector<std::string> kKinds{"forward", "dnmap", "linearize", "cgo-sweep", "reconstruct", "partial-reconstruct"};

double number(const Json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError(key + " must be a number");
    return j.get<double>();
}

Vec3 vec3(const Json& j, const std::string& key) {
    if (!j.is_array() || j.size() < 1 || j.size() > 3) throw ConfigError(key + " must be an array of up to 3 numbers");
    Vec3 v{0, 0, 0};
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = number(j[i], key);
    return v;
}

using PointFn = std::function<double(const Vec3&)>;

PointFn point_function(const Json& spec, const std::string& key) {
    if (spec.is_number()) {
        const double c = spec.get<double>();
        return [c](const Vec3&) { return c; };
    }
    if (!spec.is_object()) throw ConfigError(key + " must be a number or an object");
    if (spec.contains("constant")) {
        const double c = number(spec["constant"], key + ".constant");
        return [c](const Vec3&) { return c; };
    }
    if (spec.contains("cos")) {
        const Json& c = spec["cos"];
        const Vec3 f = vec3(c.value("freq", Json::array({0})), key + ".cos.freq");
        const double a = number(c.value("amplitude", Json(1.0)), key + ".cos.amplitude");
        const double b = number(c.value("base", Json(0.0)), key + ".cos.base");
        return [=](const Vec3& x) { return b + a * std::cos(2 * M_PI * (f[0] * x[0] + f[1] * x[1] + f[2] * x[2])); };
    }
    if (spec.contains("bumps") || spec.contains("base")) {
        const double base = number(spec.value("base", Json(0.0)), key + ".base");
        struct Bump {
            Vec3 c;
            double w, a;
        };
        std::vector<Bump> bumps;
        const Json list = spec.value("bumps", Json::array());
        if (!list.is_array()) throw ConfigError(key + ".bumps must be an array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string k = key + ".bumps[" + std::to_string(i) + "]";
            if (!list[i].contains("center")) throw ConfigError("missing key " + k + ".center");
            Bump b{vec3(list[i]["center"], k + ".center"), number(list[i].value("width", Json(0.02)), k + ".width"),
                   number(list[i].value("amplitude", Json(1.0)), k + ".amplitude")};
            if (!(b.w > 0)) throw ConfigError(k + ".width must be positive");
            bumps.push_back(b);
        }
        return [base, bumps](const Vec3& x) {
            double s = base;
            for (const Bump& b : bumps) {
                double r = 0;
                for (int j = 0; j < 3; ++j) r += (x[j] - b.c[j]) * (x[j] - b.c[j]);
                s += b.a * std::exp(-r / b.w);
            }
            return s;
        };
    }
    throw ConfigError(key + " has no recognized field form (constant, cos, bumps, file)");
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

ScalarField make_field(const GridPtr& g, const Json& spec, const std::string& key) {
    if (spec.is_object() && spec.contains("file")) {
        ScalarField f = read_field_csv(spec["file"].get<std::string>());
        if (f.grid->dim() != g->dim() || f.grid->n_cells() != g->n_cells())
            throw ConfigError(key + ".file was written on a different grid");
        f.grid = g;
        return f;
    }
    return ScalarField::sample(g, point_function(spec, key));
}

BoundaryTrace make_trace(const GridPtr& g, const Json& spec, const std::string& key) {
    if (spec.is_object() && spec.contains("file")) return trace(make_field(g, spec, key));
    return BoundaryTrace::sample(g, point_function(spec, key));
}

MfgCoefficients make_coefficients(const GridPtr& g, const Json& spec, const std::string& key) {
    MfgCoefficients c = MfgCoefficients::constant(g, 1.0, 1.0, 1.0);
    return override_coefficients(c, spec, key);
}

MfgCoefficients override_coefficients(const MfgCoefficients& base, const Json& spec, const std::string& key) {
    MfgCoefficients c = base;
    if (spec.is_null()) return c;
    if (!spec.is_object()) throw ConfigError(key + " must be an object");
    const GridPtr& g = base.grid();
    if (spec.contains("v")) c.v = number(spec["v"], key + ".v");
    if (spec.contains("k")) c.k = make_field(g, spec["k"], key + ".k");
    if (spec.contains("r")) c.r = make_field(g, spec["r"], key + ".r");
    if (spec.contains("F")) {
        const Json& F = spec["F"];
        if (!F.is_array()) throw ConfigError(key + ".F must be an array");
        c.F.terms.clear();
        for (std::size_t i = 0; i < F.size(); ++i) {
            const std::string k = key + ".F[" + std::to_string(i) + "]";
            if (!F[i].contains("order")) throw ConfigError("missing key " + k + ".order");
            if (!F[i].contains("coeff")) throw ConfigError("missing key " + k + ".coeff");
            c.F.terms.push_back({F[i]["order"].get<int>(), make_field(g, F[i]["coeff"], k + ".coeff")});
        }
    }
    try {
        c.check();
    } catch (const ParameterError& e) {
        throw ConfigError(key + ": " + e.what());
    }
    return c;
}

NewtonOptions make_newton(const Json& spec) {
    NewtonOptions o;
    if (spec.is_null()) return o;
    o.tol = number(spec.value("tol", Json(o.tol)), "solver.tol");
    o.max_iter = spec.value("max_iter", o.max_iter);
    o.delta = number(spec.value("delta", Json(o.delta)), "solver.delta");
    o.require_nonneg_g = spec.value("require_nonneg_g", o.require_nonneg_g);
    return o;
}

const Json& ExperimentConfig::section(const char* key) const {
    static const Json empty = Json::object();
    auto it = doc.find(key);
    return it == doc.end() ? empty : *it;
}

ExperimentConfig ExperimentConfig::parse(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    c.doc = doc;
    if (!doc.contains("kind")) throw ConfigError("missing key kind");
    c.kind = doc["kind"].get<std::string>();
    if (std::find(kKinds.begin(), kKinds.end(), c.kind) == kKinds.end())
        throw ConfigError("kind must be one of forward, dnmap, linearize, cgo-sweep, reconstruct, partial-reconstruct");
    if (!doc.contains("grid")) throw ConfigError("missing key grid");
    const Json& g = doc["grid"];
    if (!g.contains("n_cells")) throw ConfigError("missing key grid.n_cells");
    if (!g["n_cells"].is_number_integer()) throw ConfigError("grid.n_cells must be an integer");
    c.n_cells = g["n_cells"].get<int>();
    c.dim = g.value("dim", 3);
    c.output_dir = doc.value("output", c.output_dir);
    c.workers = doc.value("workers", 0);
    if (doc.contains("noise")) {
        const Json& n = doc["noise"];
        c.noise = number(n.value("sigma", Json(0.0)), "noise.sigma");
        if (n.contains("seed")) {
            if (!n["seed"].is_number_integer()) throw ConfigError("noise.seed must be a 64-bit integer");
            c.seed = n["seed"].get<std::uint64_t>();
        }
    }
    if (c.kind == "reconstruct" || c.kind == "partial-reconstruct") {
        if (!doc.contains("hidden")) throw ConfigError("missing key hidden");
    }
    if (c.kind == "reconstruct") {
        if (!doc.contains("reconstruction") || !doc["reconstruction"].contains("slot"))
            throw ConfigError("missing key reconstruction.slot");
    }
    if (c.kind == "partial-reconstruct") {
        if (!doc.contains("cone")) throw ConfigError("missing key cone");
        if (!doc["cone"].contains("lambda_prime")) throw ConfigError("missing key cone.lambda_prime");
    }
    return c;
}

std::string ExperimentConfig::hash() const { return sha256_hex(doc.dump()); }

std::vector<std::string> ExperimentConfig::violations() const {
    std::vector<std::string> v;
    auto guard = [&](auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            v.push_back(e.what());
        }
    };
    if (dim != 2 && dim != 3) v.push_back("grid.dim must be 2 or 3");
    if (n_cells < 3) v.push_back("grid.n_cells must be at least 3");
    if (noise < 0) v.push_back("noise.sigma must be nonnegative");
    if (workers < 0) v.push_back("workers must be nonnegative");
    if (!v.empty()) return v;

    const GridPtr g = make_grid(dim, n_cells);
    const NewtonOptions newton = make_newton(section("solver"));
    if (!(newton.delta > 0)) v.push_back("solver.delta must be positive");
    if (!(newton.tol > 0)) v.push_back("solver.tol must be positive");
    if (newton.max_iter < 1) v.push_back("solver.max_iter must be at least 1");
    MfgCoefficients coeffs = MfgCoefficients::constant(g, 1.0, 1.0, 1.0);
    guard([&] { coeffs = make_coefficients(g, section("coefficients"), "coefficients"); });
    if (doc.contains("hidden")) guard([&] { override_coefficients(coeffs, section("hidden"), "hidden"); });

    const Json& b = section("boundary");
    if (doc.contains("boundary")) {
        guard([&] {
            const double amp = number(b.value("amplitude", Json(1.0)), "boundary.amplitude");
            double sup = 0;
            if (b.contains("f")) sup += make_trace(g, b["f"], "boundary.f").values.cwiseAbs().maxCoeff();
            if (b.contains("g")) sup += make_trace(g, b["g"], "boundary.g").values.cwiseAbs().maxCoeff();
            if (std::abs(amp) * sup > newton.delta)
                v.push_back("boundary amplitude " + std::to_string(std::abs(amp) * sup) + " exceeds solver.delta " +
                            std::to_string(newton.delta));
        });
    }

    if (kind == "linearize") {
        const Json& l = section("linearize");
        guard([&] {
            const Json eps = l.value("eps", Json::array({1e-2, 5e-3, 2.5e-3}));
            double emax = 0;
            for (const auto& e : eps) {
                const double x = number(e, "linearize.eps");
                if (!(x > 0)) v.push_back("linearize.eps entries must be positive");
                emax = std::max(emax, x);
            }
            double sup = 0;
            for (const char* side : {"f", "g"})
                for (const auto& t : l.value(side, Json::array()))
                    sup += make_trace(g, t, std::string("linearize.") + side).values.cwiseAbs().maxCoeff();
            if (2 * emax * sup > newton.delta) v.push_back("linearize amplitude exceeds solver.delta");
        });
    }
    if (kind == "cgo-sweep" || kind == "reconstruct" || kind == "partial-reconstruct") {
        if (dim != 3) v.push_back(kind + " needs grid.dim = 3");
    }
    const double floor = 2.0 / n_cells;
    if (kind == "cgo-sweep") {
        const Json& s = section("cgo");
        guard([&] {
            for (const auto& h : s.value("h", Json::array({0.5, 0.25, 0.125}))) {
                const double x = number(h, "cgo.h");
                if (x < floor - 1e-12 || x > 1) v.push_back("cgo.h entries must lie in [2 h_mesh, 1]");
            }
            const std::string amp = s.value("amplitude", std::string("one"));
            if (amp != "one" && amp != "plane_wave" && amp != "split")
                v.push_back("cgo.amplitude must be one, plane_wave or split");
        });
    }
    if (kind == "reconstruct") {
        const Json& r = section("reconstruction");
        const std::string slot = r.value("slot", std::string());
        if (slot != "r" && slot != "k" && slot != "F2" && slot != "F3")
            v.push_back("reconstruction.slot must be r, k, F2 or F3");
        if (r.value("cutoff", 4) < 0) v.push_back("reconstruction.cutoff must be nonnegative");
        const double h = r.value("h", 0.25);
        if (h < floor - 1e-12 || (r.value("richardson", false) && h / 2 < floor - 1e-12))
            v.push_back("reconstruction.h is below the resolution floor 2 h_mesh");
    }
    if (kind == "partial-reconstruct") {
        const Json& c = section("cone");
        guard([&] {
            const Vec3 lp = vec3(c["lambda_prime"], "cone.lambda_prime");
            if (std::abs(std::sqrt(lp[0] * lp[0] + lp[1] * lp[1] + lp[2] * lp[2]) - 1.0) > 1e-12)
                v.push_back("cone.lambda_prime must be a unit vector");
            const double e = number(c.value("eps0", Json(0.25)), "cone.eps0");
            if (!(e > 0 && e < 0.5)) v.push_back("cone.eps0 must lie in (0, 0.5)");
            if (c.value("h", 0.125) < floor - 1e-12) v.push_back("cone.h is below the resolution floor 2 h_mesh");
            const std::string slot = c.value("slot", std::string("r"));
            if (slot != "r" && slot != "k") v.push_back("cone.slot must be r or k");
        });
    }
    return v;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path);
    Json doc;
    try {
        doc = Json::parse(is);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return ExperimentConfig::parse(doc);
}

}  // namespace mfglab
