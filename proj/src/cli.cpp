#include "mfglab/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string_view>

#include <spdlog/spdlog.h>

#include "mfglab/parallel.hpp"

namespace mfglab {

namespace fs = std::filesystem;
using Ordered = nlohmann::ordered_json;

namespace {

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void write_xy(const fs::path& p, const std::vector<std::pair<double, double>>& xy) {
    std::ofstream os(p);
    if (!os) throw ParameterError("cannot write " + p.string());
    os << "x,y\n" << std::setprecision(17);
    for (auto [x, y] : xy) os << x << ',' << y << '\n';
}

void write_metrics(const fs::path& p, const std::vector<std::pair<std::string, double>>& rows) {
    std::ofstream os(p);
    if (!os) throw ParameterError("cannot write " + p.string());
    os << "metric,value\n" << std::setprecision(17);
    for (const auto& [k, v] : rows) os << k << ',' << v << '\n';
}

Vec3 vec3_of(const Json& j, const char* key) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(key) + " must be an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Slot slot_of(const std::string& s, const char* key) {
    if (s == "r") return Slot::m;
    if (s == "k") return Slot::u;
    throw ConfigError(std::string(key) + " must be r or k");
}

std::vector<BoundaryTrace> traces_of(const GridPtr& g, const Json& list, const std::string& key) {
    std::vector<BoundaryTrace> out;
    if (!list.is_array()) throw ConfigError(key + " must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) out.push_back(make_trace(g, list[i], key + "[" + std::to_string(i) + "]"));
    return out;
}

class Runner {
public:
    Runner(const ExperimentConfig& cfg, fs::path out, int workers)
        : cfg_(cfg), out_(std::move(out)), workers_(workers), grid_(make_grid(cfg.dim, cfg.n_cells)) {
        manifest_["tool"] = "mfglab";
        manifest_["version"] = kToolVersion;
        manifest_["config_hash"] = cfg.hash();
        manifest_["kind"] = cfg.kind;
        manifest_["workers"] = workers;
        manifest_["stages"] = Ordered::array();
        manifest_["outputs"] = Ordered::array();
        manifest_["checks"] = Ordered::array();
    }

    void run() {
        fs::create_directories(out_);
        const std::string& k = cfg_.kind;
        if (k == "forward") forward();
        else if (k == "dnmap") dnmap();
        else if (k == "linearize") linearize();
        else if (k == "cgo-sweep") cgo_sweep();
        else if (k == "reconstruct") reconstruct();
        else partial_reconstruct();
    }

    /// writes manifest.json; returns the number of failed checks
    int finish(const std::string& status) {
        manifest_["status"] = status;
        for (const auto& name : outputs_) {
            const std::string bytes = read_bytes(out_ / name);
            manifest_["outputs"].push_back({{"file", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
        }
        std::ofstream os(out_ / "manifest.json");
        os << manifest_.dump(2) << '\n';
        return failed_;
    }

    const std::string& current_stage() const { return stage_name_; }

private:
    template <class Fn>
    auto stage(const std::string& name, Fn&& fn) {
        stage_name_ = name;
        spdlog::info("stage {}", name);
        const auto t0 = std::chrono::steady_clock::now();
        auto record = [&] {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            manifest_["stages"].push_back({{"name", name}, {"wall_seconds", s}});
            spdlog::debug("stage {} took {:.3f} s", name, s);
        };
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            record();
        } else {
            auto r = fn();
            record();
            return r;
        }
    }

    fs::path emit(const std::string& name) {
        outputs_.push_back(name);
        return out_ / name;
    }

    void check(const std::string& name, double value, double limit, bool upper) {
        const bool pass = upper ? value <= limit : value >= limit;
        manifest_["checks"].push_back({{"name", name}, {"value", value}, {"limit", limit}, {"pass", pass}});
        if (!pass) {
            ++failed_;
            spdlog::error("check {} failed: {} {} {}", name, value, upper ? ">" : "<", limit);
        }
    }

    void check_flag(const std::string& name, bool pass) {
        manifest_["checks"].push_back({{"name", name}, {"pass", pass}});
        if (!pass) {
            ++failed_;
            spdlog::error("check {} failed", name);
        }
    }

    const Json& checks() const { return cfg_.section("checks"); }

    MfgCoefficients reference() const { return make_coefficients(grid_, cfg_.section("coefficients"), "coefficients"); }
    NewtonOptions newton() const { return make_newton(cfg_.section("solver")); }

    DnOracle with_noise(DnOracle o) const { return cfg_.noise > 0 ? noisy_dn(std::move(o), cfg_.noise, cfg_.seed) : o; }

    void forward() {
        const auto coeffs = reference();
        const Json& b = cfg_.section("boundary");
        BoundaryTrace f = BoundaryTrace::zeros(grid_), g = BoundaryTrace::zeros(grid_);
        if (b.contains("f")) f = make_trace(grid_, b["f"], "boundary.f");
        if (b.contains("g")) g = make_trace(grid_, b["g"], "boundary.g");
        const double amp = b.value("amplitude", 1.0);
        f.values *= amp;
        g.values *= amp;
        const auto sol = stage("solve", [&] { return solve_mfg(coeffs, f, g, newton()); });
        stage("write", [&] {
            write_field_csv(emit("u.csv").string(), sol.u);
            write_field_csv(emit("m.csv").string(), sol.m);
            std::vector<std::pair<double, double>> xy;
            for (std::size_t i = 0; i < sol.residual_history.size(); ++i) xy.emplace_back(double(i), sol.residual_history[i]);
            write_xy(emit("convergence.csv"), xy);
            const double data = f.values.cwiseAbs().maxCoeff() + g.values.cwiseAbs().maxCoeff();
            const double size = l2_norm(sol.u) + l2_norm(sol.m);
            write_metrics(emit("metrics.csv"), {{"newton_iterations", sol.newton_iterations},
                                                {"final_residual", sol.final_residual},
                                                {"min_m", sol.m.real().minCoeff()},
                                                {"solution_l2", size},
                                                {"solution_over_data", data > 0 ? size / data : 0.0}});
        });
        if (checks().contains("min_m")) check("min_m", sol.m.real().minCoeff(), checks()["min_m"].get<double>(), false);
        if (checks().contains("max_iterations"))
            check("max_iterations", sol.newton_iterations, checks()["max_iterations"].get<double>(), true);
    }

    void dnmap() {
        const auto coeffs = reference();
        const Json& d = cfg_.section("dn");
        const int max_freq = d.value("max_freq", 4);
        const std::string slots = d.value("slot", std::string("both"));
        if (slots != "u" && slots != "m" && slots != "both") throw ConfigError("dn.slot must be u, m or both");
        const auto basis = stage("basis", [&] { return make_boundary_basis(grid_, max_freq); });
        std::mt19937_64 rng(cfg_.seed);
        for (Slot s : {Slot::u, Slot::m}) {
            const char* name = s == Slot::u ? "u" : "m";
            if (slots != "both" && slots != name) continue;
            auto dn = stage(std::string("dn_") + name, [&] { return linearized_dn_matrix(coeffs, basis, s, workers_); });
            if (cfg_.noise > 0) {
                std::normal_distribution<double> n01;
                const double scale = cfg_.noise * dn.values.cwiseAbs().maxCoeff();
                for (Eigen::Index j = 0; j < dn.values.cols(); ++j)
                    for (Eigen::Index i = 0; i < dn.values.rows(); ++i) dn.values(i, j) += scale * n01(rng);
            }
            stage("write", [&] { write_dn_csv(emit(std::string("dn_") + name + ".csv").string(), dn); });
        }
        write_metrics(emit("metrics.csv"), {{"basis_size", basis.size()}, {"boundary_nodes", grid_->boundary_count()}});
    }

    void linearize() {
        const auto coeffs = reference();
        const Json& l = cfg_.section("linearize");
        EpsFamily fam;
        fam.f = traces_of(grid_, l.value("f", Json::array()), "linearize.f");
        fam.g = traces_of(grid_, l.value("g", Json::array()), "linearize.g");
        if (fam.f.empty() || fam.f.size() != fam.g.size())
            throw ConfigError("linearize.f and linearize.g must be nonempty lists of equal length");
        fam.positivity = l.value("positivity", false);
        std::vector<double> eps = l.value("eps", std::vector<double>{1e-2, 5e-3, 2.5e-3});
        const int n = static_cast<int>(fam.f.size());
        fam.eps.assign(n, eps.front());
        const auto exact = stage("analytic", [&] { return linearize_analytic(coeffs, fam); });
        auto rel = [](const FieldPair& a, const FieldPair& b) {
            const double nb = std::hypot(l2_norm(b.u), l2_norm(b.m));
            ScalarField du = a.u, dm = a.m;
            du.values -= b.u.values;
            dm.values -= b.m.values;
            return std::hypot(l2_norm(du), l2_norm(dm)) / (nb > 0 ? nb : 1.0);
        };
        std::vector<double> e1, e2;
        NewtonOptions tight = newton();
        tight.tol = std::min(tight.tol, 1e-13);
        stage("finite_differences", [&] {
            for (double e : eps) {
                fam.eps.assign(n, e);
                e1.push_back(rel(fd_derivative(coeffs, fam, {1}, tight), exact.first[0]));
                if (n >= 2 && exact.second) e2.push_back(rel(fd_derivative(coeffs, fam, {1, 2}, tight), *exact.second));
            }
        });
        std::ofstream os(emit("linearize.csv"));
        os << "eps,first_order_error,second_order_error\n" << std::setprecision(17);
        std::vector<std::pair<double, double>> xy;
        for (std::size_t i = 0; i < eps.size(); ++i) {
            os << eps[i] << ',' << e1[i] << ',';
            if (i < e2.size()) os << e2[i];
            os << '\n';
            xy.emplace_back(eps[i], e1[i]);
        }
        os.close();
        write_xy(emit("convergence.csv"), xy);
        std::vector<std::pair<std::string, double>> m;
        const Json range = checks().value("ratio", Json());
        auto ratios = [&](const std::vector<double>& e, const std::string& tag) {
            for (std::size_t i = 1; i < e.size(); ++i) {
                const double r = e[i - 1] / e[i];
                m.emplace_back(tag + "_ratio_" + std::to_string(i), r);
                if (range.is_array() && range.size() == 2) {
                    check(tag + "_ratio_" + std::to_string(i) + "_min", r, range[0].get<double>(), false);
                    check(tag + "_ratio_" + std::to_string(i) + "_max", r, range[1].get<double>(), true);
                }
            }
        };
        ratios(e1, "first_order");
        ratios(e2, "second_order");
        write_metrics(emit("metrics.csv"), m);
    }

    void cgo_sweep() {
        const Json& s = cfg_.section("cgo");
        const ScalarField c = make_field(grid_, s.value("c", Json(1.0)), "cgo.c");
        const double v = s.value("v", 1.0);
        CgoParams p;
        p.xi = s.contains("xi") ? vec3_of(s["xi"], "cgo.xi") : Vec3{0, 0, 0};
        if (s.contains("lambda")) {
            p.lambda = vec3_of(s["lambda"], "cgo.lambda");
            p.eta = vec3_of(s.value("eta", Json::array({0, 1, 0})), "cgo.eta");
        } else if (p.xi != Vec3{0, 0, 0}) {
            std::tie(p.lambda, p.eta) = orthogonal_triplet(p.xi);
        }
        p.sign = s.value("sign", 1);
        const std::string amp = s.value("amplitude", std::string("one"));
        const Amplitude kind = amp == "plane_wave" ? Amplitude::plane_wave : amp == "split" ? Amplitude::split : Amplitude::one;
        const std::vector<double> hs = s.value("h", std::vector<double>{0.5, 0.25, 0.125});

        auto sweep = [&](bool vanishing) {
            std::vector<CgoSolution> out;
            CgoParams q = p;
            std::optional<BoundaryRegion> region;
            if (vanishing) {
                q.sign = -1;
                region = boundary_region(grid_, q.lambda, s["vanishing"].value("eps0", 0.25), +1);
            }
            for (double h : hs) {
                q.h = h;
                out.push_back(vanishing ? build_vanishing_cgo(c, v, q, *region, kind) : build_cgo(c, v, q, kind));
                spdlog::info("h = {} remainder {:.4e} residual {:.2e}", h, out.back().remainder_norm, out.back().residual);
            }
            return out;
        };
        std::vector<std::pair<std::string, double>> m;
        const Json rate = checks().value("rate", Json());
        auto report = [&](const std::vector<CgoSolution>& sw, const std::string& tag) {
            write_decay_csv(emit(tag + "_table.csv").string(), sw);
            std::vector<std::pair<double, double>> xy;
            for (const auto& x : sw) xy.emplace_back(x.params.h, x.remainder_norm);
            write_xy(emit(tag == "cgo" ? "decay.csv" : tag + "_decay.csv"), xy);
            bool decreasing = true;
            for (std::size_t i = 1; i < sw.size(); ++i) {
                const double r = sw[i - 1].remainder_norm / sw[i].remainder_norm;
                decreasing = decreasing && sw[i].remainder_norm < sw[i - 1].remainder_norm;
                m.emplace_back(tag + "_ratio_" + std::to_string(i), r);
                if (tag == "cgo" && rate.is_array() && rate.size() == 2) {
                    check(tag + "_ratio_" + std::to_string(i) + "_min", r, rate[0].get<double>(), false);
                    check(tag + "_ratio_" + std::to_string(i) + "_max", r, rate[1].get<double>(), true);
                }
            }
            if (checks().value("strictly_decreasing", false)) check_flag(tag + "_strictly_decreasing", decreasing);
        };
        report(stage("standard", [&] { return sweep(false); }), "cgo");
        if (s.contains("vanishing")) report(stage("vanishing", [&] { return sweep(true); }), "vanishing");
        write_metrics(emit("metrics.csv"), m);
    }

    MfgCoefficients hidden(const MfgCoefficients& ref) const {
        const Json& h = cfg_.section("hidden");
        if (h.contains("dn_file")) return ref;
        return override_coefficients(ref, h, "hidden");
    }

    DnOracle measured(const MfgCoefficients& ref, const MfgCoefficients& hid, Slot slot) const {
        const Json& h = cfg_.section("hidden");
        if (h.contains("dn_file"))
            return with_noise(stored_dn(h["dn_file"].get<std::string>(), h.value("max_freq", 4), ref, slot, workers_));
        return with_noise(simulated_dn(hid, slot));
    }

    void finish_reconstruction(const ReconstructionResult& r) {
        write_field_csv(emit("recovered.csv").string(), r.recovered);
        write_fourier_csv(emit("fourier.csv").string(), r.data);
        write_metrics_csv(emit("metrics.csv").string(), r);
        if (checks().contains("max_error")) {
            if (!r.error) throw ConfigError("checks.max_error needs a hidden coefficient to compare against");
            check("max_error", *r.error, checks()["max_error"].get<double>(), true);
        }
    }

    void reconstruct() {
        const auto ref = reference();
        const auto hid = hidden(ref);
        const bool has_truth = !cfg_.section("hidden").contains("dn_file");
        const Json& rc = cfg_.section("reconstruction");
        const std::string slot = rc["slot"].get<std::string>();
        ReconstructOptions o;
        o.cutoff = rc.value("cutoff", 4);
        o.extract.h = rc.value("h", 0.25);
        o.extract.richardson = rc.value("richardson", false);
        o.extract.workers = workers_;
        o.positivity_floor = rc.value("positivity_floor", o.positivity_floor);
        ReconstructionResult r;
        if (slot == "r" || slot == "k") {
            const Slot s = slot_of(slot, "reconstruction.slot");
            if (has_truth) {
                ScalarField t = s == Slot::m ? hid.r : hid.k;
                t.values -= (s == Slot::m ? ref.r : ref.k).values;
                o.truth = t;
            }
            const auto oracle = measured(ref, hid, s);
            r = stage("reconstruct", [&] { return reconstruct_coefficient(s, oracle, ref, o); });
        } else if (slot == "F2" || slot == "F3") {
            if (!has_truth) throw ConfigError("hidden.dn_file only supports the r and k slots");
            const int order = slot == "F2" ? 2 : 3;
            auto coeff = [&](const MfgCoefficients& c) {
                const ScalarField* f = c.F.find(order);
                return f ? *f : ScalarField::zeros(grid_);
            };
            ScalarField t = coeff(hid);
            t.values -= coeff(ref).values;
            o.truth = t;
            Probes probes;
            const Json pr = rc.value("probes", Json::object());
            probes.f = pr.contains("f") ? traces_of(grid_, pr["f"], "reconstruction.probes.f")
                                        : std::vector<BoundaryTrace>(order - 1, BoundaryTrace::zeros(grid_));
            probes.g = pr.contains("g") ? traces_of(grid_, pr["g"], "reconstruction.probes.g")
                                        : std::vector<BoundaryTrace>(order - 1, BoundaryTrace::constant(grid_, 1.0));
            const auto oracle = simulated_higher_order(hid);
            r = stage("reconstruct", [&] {
                return order == 2 ? reconstruct_F2(oracle, ref, probes, o) : reconstruct_F3(oracle, ref, probes, o);
            });
        } else {
            throw ConfigError("reconstruction.slot must be r, k, F2 or F3");
        }
        if (r.error) spdlog::info("relative error {:.4f}", *r.error);
        stage("write", [&] { finish_reconstruction(r); });
    }

    void partial_reconstruct() {
        const auto ref = reference();
        const auto hid = hidden(ref);
        const bool has_truth = !cfg_.section("hidden").contains("dn_file");
        const Json& cs = cfg_.section("cone");
        const Slot s = slot_of(cs.value("slot", std::string("r")), "cone.slot");
        const auto spec = PartialDataSpec::make(grid_, vec3_of(cs["lambda_prime"], "cone.lambda_prime"), cs.value("eps0", 0.25));
        ExtractOptions o;
        o.h = cs.value("h", 0.125);
        o.workers = workers_;
        if (cs.value("richardson", false)) throw ConfigError("cone.richardson is not supported for cone data");
        const int count = cs.value("count", 12), cutoff = cs.value("cutoff", 4);
        const auto full = measured(ref, hid, s);
        const ScalarField* truth = has_truth ? (s == Slot::m ? &hid.r : &hid.k) : nullptr;
        const auto cd = stage("cone", [&] {
            return cone_fourier_data(s, partial_dn(full, spec), ref, spec, count, o, cutoff, truth);
        });
        std::vector<std::pair<std::string, double>> m{{"frequencies", cd.data.size()}, {"h", o.h}, {"eps0", spec.eps0}};
        if (cs.value("compare_full", true)) {
            const auto fd = stage("full", [&] { return extract_fourier(s, full, ref, cd.data.xi, o); });
            double worst = 0.0;
            for (int j = 0; j < fd.size(); ++j)
                worst = std::max(worst, std::abs(cd.data.values[j] - fd.values[j]) / std::max(std::abs(fd.values[j]), 1e-300));
            m.emplace_back("max_cone_full_difference", worst);
            if (checks().contains("max_cone_difference"))
                check("max_cone_difference", worst, checks()["max_cone_difference"].get<double>(), true);
        }
        stage("write", [&] {
            write_fourier_csv(emit("cone_fourier.csv").string(), cd.data);
            if (!cd.audit.empty()) {
                std::ofstream os(emit("audit.csv"));
                os << "xi1,xi2,xi3,a_re,a_im,b_re,b_im,c_re,c_im,volume_re,volume_im,c_nodes,relative\n"
                   << std::setprecision(17);
                double worst = 0.0;
                for (const auto& a : cd.audit) {
                    os << a.xi[0] << ',' << a.xi[1] << ',' << a.xi[2] << ',' << a.a.real() << ',' << a.a.imag() << ','
                       << a.b.real() << ',' << a.b.imag() << ',' << a.c.real() << ',' << a.c.imag() << ','
                       << a.volume.real() << ',' << a.volume.imag() << ',' << a.c_nodes << ',' << a.relative << '\n';
                    worst = std::max(worst, a.relative);
                }
                m.emplace_back("max_audit", worst);
                if (checks().contains("max_audit")) check("max_audit", worst, checks()["max_audit"].get<double>(), true);
            }
            write_metrics(emit("metrics.csv"), m);
        });
    }

    const ExperimentConfig& cfg_;
    fs::path out_;
    int workers_;
    GridPtr grid_;
    Ordered manifest_;
    std::vector<std::string> outputs_;
    std::string stage_name_ = "setup";
    int failed_ = 0;
};

int resolve_workers(const ExperimentConfig& cfg, const RunOptions& opts) {
    if (opts.workers && *opts.workers > 0) return *opts.workers;
    if (cfg.workers > 0) return cfg.workers;
    return default_workers();
}

}  // namespace

DnOracle noisy_dn(DnOracle base, double sigma, std::uint64_t seed) {
    return [base = std::move(base), sigma, seed](const VecC& data) {
        VecC out = base(data);
        const std::string_view bytes(reinterpret_cast<const char*>(data.data()), sizeof(cplx) * data.size());
        std::mt19937_64 rng(seed ^ std::hash<std::string_view>{}(bytes));
        std::normal_distribution<double> n01;
        const double scale = sigma * out.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < out.size(); ++i) {
            const double re = n01(rng), im = n01(rng);
            out[i] += scale * cplx(re, im);
        }
        return out;
    };
}

DnMatrix read_dn_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read DN matrix " + path);
    std::string line;
    std::getline(is, line);
    if (line != "row,col,value") throw ConfigError(path + " is not a DN matrix CSV");
    std::vector<std::tuple<int, int, double>> entries;
    int rows = 0, cols = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int i, j;
        double x;
        char c1, c2;
        if (!(ls >> i >> c1 >> j >> c2 >> x) || c1 != ',' || c2 != ',') throw ConfigError(path + ": malformed row " + line);
        entries.emplace_back(i, j, x);
        rows = std::max(rows, i + 1);
        cols = std::max(cols, j + 1);
    }
    DnMatrix dn;
    dn.values = Eigen::MatrixXd::Zero(rows, cols);
    for (auto [i, j, x] : entries) dn.values(i, j) = x;
    return dn;
}

DnOracle stored_dn(const std::string& path, int max_freq, const MfgCoefficients& reference, Slot slot, int workers) {
    const GridPtr& g = reference.grid();
    const auto basis = make_boundary_basis(g, max_freq);
    const DnMatrix file = read_dn_csv(path);
    if (file.values.rows() != g->boundary_count() || file.values.cols() != basis.size())
        throw ConfigError(path + " does not match the grid and hidden.max_freq");
    const Eigen::MatrixXd B = basis.matrix();
    const VecR& w = g->boundary_weights();
    const Eigen::MatrixXd gram = B.transpose() * w.asDiagonal() * B;
    auto project = std::make_shared<const Eigen::MatrixXd>(gram.ldlt().solve(B.transpose() * w.asDiagonal()));
    auto diff = std::make_shared<const Eigen::MatrixXd>(file.values -
                                                        linearized_dn_matrix(reference, basis, slot, workers).values);
    auto ref = simulated_dn(reference, slot);
    return [project, diff, ref](const VecC& data) {
        VecC coef = project->cast<cplx>() * data;
        return VecC(ref(data) + diff->cast<cplx>() * coef);
    };
}

int run_experiment(const std::string& path, const RunOptions& opts, std::ostream& diag) {
    std::optional<ExperimentConfig> cfg;
    try {
        cfg = load_config(path);
        const auto bad = cfg->violations();
        if (!bad.empty()) {
            for (const auto& v : bad) diag << "config violation: " << v << '\n';
            return 2;
        }
    } catch (const std::exception& e) {
        diag << e.what() << '\n';
        return 2;
    }
    const fs::path out = opts.out ? fs::path(*opts.out) : fs::path(cfg->output_dir);
    std::optional<Runner> runner;
    try {
        runner.emplace(*cfg, out, resolve_workers(*cfg, opts));
        spdlog::info("{} run on {}^{} into {}", cfg->kind, cfg->n_cells, cfg->dim, out.string());
        runner->run();
    } catch (const ConfigError& e) {
        diag << e.what() << '\n';
        return 2;
    } catch (const ParameterError& e) {
        diag << "stage " << (runner ? runner->current_stage() : std::string("setup")) << ": " << e.what() << '\n';
        return 2;
    } catch (const Json::exception& e) {
        diag << "config: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        diag << "stage " << (runner ? runner->current_stage() : std::string("setup")) << " failed: " << e.what() << '\n';
        if (runner) runner->finish("failed");
        return 1;
    }
    if (runner->finish("ok") > 0) {
        diag << "declared checks failed; see manifest.json\n";
        return 1;
    }
    return 0;
}

int verify_experiment(const std::string& path, std::ostream& os) {
    try {
        const auto cfg = load_config(path);
        os << "kind: " << cfg.kind << '\n'
           << "grid: " << cfg.n_cells << " cells per axis, dim " << cfg.dim << '\n'
           << "output: " << cfg.output_dir << '\n'
           << "workers: " << (cfg.workers > 0 ? cfg.workers : default_workers()) << '\n'
           << "noise: sigma " << cfg.noise << ", seed " << cfg.seed << '\n'
           << "config hash: " << cfg.hash() << '\n';
        for (const char* key : {"coefficients", "hidden", "boundary", "solver", "linearize", "cgo", "reconstruction", "cone", "dn", "checks"})
            if (cfg.doc.contains(key)) os << key << ": " << cfg.section(key).dump() << '\n';
        const auto bad = cfg.violations();
        for (const auto& v : bad) os << "violation: " << v << '\n';
        if (!bad.empty()) return 2;
        os << "ok\n";
        return 0;
    } catch (const std::exception& e) {
        os << "violation: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace mfglab
