#include "mfglab/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <set>

#include "mfglab/parallel.hpp"

namespace mfglab {

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

using OpPtr = std::shared_ptr<const EllipticOperator>;

OpPtr make_op(const GridPtr& g, double v, const ScalarField& c) { return std::make_shared<EllipticOperator>(g, v, c.real()); }

const ScalarField& slot_coefficient(const MfgCoefficients& c, Slot slot) { return slot == Slot::m ? c.r : c.k; }

/// CGO directions for a frequency; xi = 0 uses the first two axes
std::pair<Vec3, Vec3> directions(const Vec3& xi) {
    if (norm(xi) == 0.0) return {Vec3{1, 0, 0}, Vec3{0, 1, 0}};
    return orthogonal_triplet(xi);
}

/// true when -xi comes first in the lexicographic order, so xi is filled by conjugation
bool negative_half(const Vec3& xi) {
    for (double c : xi) {
        if (c > 0) return false;
        if (c < 0) return true;
    }
    return false;
}

Vec3 neg(const Vec3& x) { return {-x[0], -x[1], -x[2]}; }

void guard_frequency(const Grid& g, const Vec3& xi) {
    if (norm(xi) * g.h_mesh() > 1.0 + 1e-12)
        throw FrequencyUnresolved("frequency |xi| h_mesh exceeds 1");
}

struct Sample {
    cplx value;
    double remainder;
};

/// Drive a per-frequency pairing over a frequency set: canonical halves are computed, the rest filled by
/// conjugation, optionally Richardson-extrapolated.
template <class Fn>
void sweep(const Grid& g, const std::vector<Vec3>& xi, const ExtractOptions& opts, FourierData& out, Fn&& pair) {
    if (g.dim() != 3) throw ParameterError("Fourier extraction needs dim = 3");
    if (!(opts.h > 0.0)) throw ParameterError("h must be positive");
    for (const Vec3& x : xi) guard_frequency(g, x);
    const double floor = resolution_floor(g);
    if (opts.h < floor - 1e-12 || (opts.richardson && 0.5 * opts.h < floor - 1e-12))
        throw ParameterError("extraction h is below the resolution floor 2 h_mesh");

    std::vector<Vec3> todo;
    for (const Vec3& x : xi) {
        const Vec3 c = negative_half(x) ? neg(x) : x;
        if (std::find(todo.begin(), todo.end(), c) == todo.end()) todo.push_back(c);
    }
    const int n = static_cast<int>(todo.size());
    std::vector<Sample> coarse(n), fine(n);
    parallel_for(n, opts.workers, [&](int i) {
        coarse[i] = pair(todo[i], opts.h);
        if (opts.richardson) fine[i] = pair(todo[i], 0.5 * opts.h);
    });

    out.xi = xi;
    out.values.resize(xi.size());
    out.remainder.assign(xi.size(), 0.0);
    out.h = opts.h;
    out.richardson = opts.richardson;
    for (std::size_t j = 0; j < xi.size(); ++j) {
        const bool flip = negative_half(xi[j]);
        const Vec3 c = flip ? neg(xi[j]) : xi[j];
        const int i = static_cast<int>(std::find(todo.begin(), todo.end(), c) - todo.begin());
        cplx v = opts.richardson ? 2.0 * fine[i].value - coarse[i].value : coarse[i].value;
        out.values[j] = flip ? std::conj(v) : v;
        out.remainder[j] = opts.richardson ? std::max(coarse[i].remainder, fine[i].remainder) : coarse[i].remainder;
    }
}

CgoParams cgo_params(const Vec3& xi, double h, int sign) {
    auto [l, e] = directions(xi);
    return CgoParams{l, e, xi, h, sign};
}

/// -sum_b sigma_b v (ref - measured)_b z_b
cplx boundary_pairing(const Grid& g, double v, const VecC& ref, const VecC& measured, const VecC& z_trace) {
    const VecR& s = g.boundary_weights();
    cplx acc = 0.0;
    for (int b = 0; b < g.boundary_count(); ++b) acc -= s[b] * v * (ref[b] - measured[b]) * z_trace[b];
    return acc;
}

VecC boundary_values(const Grid& g, const VecC& w) {
    VecC t(g.boundary_count());
    for (int b = 0; b < g.boundary_count(); ++b) t[b] = w[g.boundary_nodes()[b]];
    return t;
}

double relative_error(const ScalarField& rec, const std::optional<ScalarField>& truth) {
    ScalarField d = rec;
    d.values -= truth->values;
    const double t = l2_norm(*truth);
    return t > 0.0 ? l2_norm(d) / t : l2_norm(d);
}

ReconstructionResult finish(FourierData data, const GridPtr& g, const ReconstructOptions& opts, const VecR* divisor) {
    ReconstructionResult r;
    r.recovered = invert_fourier(data, g, &r.imag_residual);
    if (divisor) r.recovered.values = r.recovered.values.cwiseQuotient(divisor->cast<cplx>());
    r.cutoff = opts.cutoff;
    r.h = opts.extract.h;
    r.data = std::move(data);
    if (opts.truth) r.error = relative_error(r.recovered, opts.truth);
    return r;
}

/// Cached solves for the linearized hierarchy around the zero state.
class Hierarchy {
public:
    explicit Hierarchy(const MfgCoefficients& c)
        : c_(c), ok_(make_op(c.grid(), c.v, c.k)), or_(make_op(c.grid(), c.v, c.r)) {}

    FieldPair first(const BoundaryTrace& f, const BoundaryTrace& g) const {
        return {ScalarField::from_complex(c_.grid(), ok_->solve_dirichlet(f.values)),
                ScalarField::from_complex(c_.grid(), or_->solve_dirichlet(g.values))};
    }
    FieldPair second(const FieldPair& a, const FieldPair& b) const {
        auto [su, sm] = second_order_sources(c_, a, b);
        const VecC zero = VecC::Zero(c_.grid()->boundary_count());
        return {ScalarField::from_complex(c_.grid(), ok_->solve(su, zero)),
                ScalarField::from_complex(c_.grid(), or_->solve(sm, zero))};
    }
    /// flux / v of the mixed u derivative
    VecC mixed_flux(const std::vector<BoundaryTrace>& f, const std::vector<BoundaryTrace>& g) const {
        if (f.size() != g.size() || f.size() < 2 || f.size() > 3)
            throw ParameterError("mixed data need two or three probes");
        std::vector<FieldPair> p;
        for (std::size_t l = 0; l < f.size(); ++l) p.push_back(first(f[l], g[l]));
        const VecC zero = VecC::Zero(c_.grid()->boundary_count());
        if (p.size() == 2) {
            const VecC su = second_order_sources(c_, p[0], p[1]).first;
            return ok_->conormal_flux(ok_->solve(su, zero), &su) / c_.v;
        }
        const std::array<FieldPair, 3> fst{p[0], p[1], p[2]};
        const std::array<FieldPair, 3> snd{second(p[1], p[2]), second(p[0], p[2]), second(p[0], p[1])};
        const VecC s = third_order_source(c_, fst, snd);
        return ok_->conormal_flux(ok_->solve(s, zero), &s) / c_.v;
    }

private:
    MfgCoefficients c_;
    OpPtr ok_, or_;
};

ReconstructionResult reconstruct_higher(const HigherOrderOracle& measured, const MfgCoefficients& known,
                                        const Probes& probes, const ReconstructOptions& opts, int order) {
    known.check();
    const GridPtr& G = known.grid();
    const Grid& g = *G;
    const int npos = order - 1;
    if (static_cast<int>(probes.f.size()) != npos || static_cast<int>(probes.g.size()) != npos)
        throw ParameterError(order == 2 ? "F2 recovery needs one positive probe" : "F3 recovery needs two positive probes");

    const Hierarchy ref(known);
    std::vector<FieldPair> pos;
    VecR divisor = VecR::Ones(g.node_count());
    for (int l = 0; l < npos; ++l) {
        pos.push_back(ref.first(probes.f[l], probes.g[l]));
        const VecR m = pos.back().m.real();
        if (m.minCoeff() < opts.positivity_floor)
            throw PositivityFloor("first-order density falls below the positivity floor");
        divisor = divisor.cwiseProduct(m);
    }

    FourierData data;
    sweep(g, frequency_lattice(g, opts.cutoff), opts.extract, data, [&](const Vec3& xi, double h) {
        const CgoSolution mc = build_cgo(known.r, known.v, cgo_params(xi, h, -1), Amplitude::split);
        const CgoSolution zc = build_cgo(known.k, known.v, cgo_params(xi, h, +1), Amplitude::split);
        std::vector<BoundaryTrace> f = probes.f, gg = probes.g;
        f.push_back(BoundaryTrace::zeros(G));
        gg.push_back(BoundaryTrace::from_complex(G, boundary_values(g, mc.field.values)));
        const VecC hid = measured(f, gg), own = ref.mixed_flux(f, gg);
        // the mixed source enters with + (F_hid - F_ref), opposite to the first-order pairing
        const cplx val = -boundary_pairing(g, known.v, own, hid, boundary_values(g, zc.field.values));
        return Sample{val * std::exp(mc.log_scale + zc.log_scale), std::max(mc.remainder_norm, zc.remainder_norm)};
    });
    return finish(std::move(data), G, opts, &divisor);
}

}  // namespace

DnOracle simulated_dn(const MfgCoefficients& hidden, Slot slot) {
    auto dn = std::make_shared<LinearDn>(hidden.grid(), hidden.v, slot_coefficient(hidden, slot).real());
    return [dn](const VecC& data) { return dn->apply(data); };
}

DnOracle partial_dn(DnOracle full, const PartialDataSpec& spec) {
    return [full = std::move(full), spec](const VecC& data) {
        check_support(BoundaryTrace::from_complex(spec.u_plus.grid, data), spec.u_plus, "boundary datum");
        VecC out = full(data);
        for (int b = 0; b < out.size(); ++b)
            if (!spec.u_minus.contains(b)) out[b] = 0.0;
        return out;
    };
}

HigherOrderOracle simulated_higher_order(const MfgCoefficients& hidden) {
    auto h = std::make_shared<Hierarchy>(hidden);
    return [h](const std::vector<BoundaryTrace>& f, const std::vector<BoundaryTrace>& g) { return h->mixed_flux(f, g); };
}

void FourierData::check() const {
    if (static_cast<int>(values.size()) != size() || remainder.size() != xi.size())
        throw ParameterError("Fourier data sizes disagree");
    std::set<Vec3> seen(xi.begin(), xi.end());
    if (static_cast<int>(seen.size()) != size()) throw ParameterError("Fourier frequencies must be distinct");
    if (!values.allFinite()) throw ParameterError("Fourier values must be finite");
}

std::vector<Vec3> frequency_lattice(const Grid& g, int cutoff) {
    if (cutoff < 0) throw ParameterError("cutoff must be nonnegative");
    std::vector<std::array<int, 3>> ks;
    for (int a = -cutoff; a <= cutoff; ++a)
        for (int b = -cutoff; b <= cutoff; ++b)
            for (int c = -cutoff; c <= cutoff; ++c) {
                const double nx = 2.0 * M_PI * std::sqrt(double(a * a + b * b + c * c));
                if (nx * g.h_mesh() <= 1.0 + 1e-12) ks.push_back({a, b, c});
            }
    std::stable_sort(ks.begin(), ks.end(), [](const auto& p, const auto& q) {
        return p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
    });
    std::vector<Vec3> out;
    for (const auto& k : ks) out.push_back({2 * M_PI * k[0], 2 * M_PI * k[1], 2 * M_PI * k[2]});
    return out;
}

FourierData extract_fourier(Slot slot, const DnOracle& measured, const MfgCoefficients& reference,
                            const std::vector<Vec3>& xi, const ExtractOptions& opts) {
    reference.check();
    const GridPtr& G = reference.grid();
    const Grid& g = *G;
    const ScalarField& c = slot_coefficient(reference, slot);
    const LinearDn ref(G, reference.v, c.real());
    FourierData data;
    sweep(g, xi, opts, data, [&](const Vec3& x, double h) {
        const CgoSolution gm = build_cgo(c, reference.v, cgo_params(x, h, -1), Amplitude::split);
        const CgoSolution zp = build_cgo(c, reference.v, cgo_params(x, h, +1), Amplitude::split);
        const VecC datum = boundary_values(g, gm.field.values);
        const cplx val = boundary_pairing(g, reference.v, ref.apply(datum), measured(datum),
                                          boundary_values(g, zp.field.values));
        return Sample{val * std::exp(gm.log_scale + zp.log_scale), std::max(gm.remainder_norm, zp.remainder_norm)};
    });
    return data;
}

ScalarField invert_fourier(const FourierData& data, const GridPtr& grid, double* imag_residual) {
    if (data.domain != FourierData::Domain::full_lattice)
        throw ParameterError("cone-restricted data cannot be inverted");
    data.check();
    for (const Vec3& x : data.xi)
        for (double c : x) {
            const double k = c / (2.0 * M_PI);
            if (std::abs(k - std::round(k)) > 1e-9) throw ParameterError("frequencies must lie on the 2 pi lattice");
        }
    const Grid& g = *grid;
    VecC f = VecC::Zero(g.node_count());
    for (int p = 0; p < g.node_count(); ++p) {
        const Vec3 x = g.coord(p);
        cplx acc = 0.0;
        for (int j = 0; j < data.size(); ++j) acc += data.values[j] * std::exp(cplx(0.0, -dot(data.xi[j], x)));
        f[p] = acc;
    }
    if (imag_residual) *imag_residual = g.node_count() ? f.imag().cwiseAbs().maxCoeff() : 0.0;
    return ScalarField::from_real(grid, f.real());
}

ReconstructionResult reconstruct_coefficient(Slot slot, const DnOracle& measured, const MfgCoefficients& reference,
                                             const ReconstructOptions& opts) {
    const GridPtr& G = reference.grid();
    return finish(extract_fourier(slot, measured, reference, frequency_lattice(*G, opts.cutoff), opts.extract), G,
                  opts, nullptr);
}

ReconstructionResult reconstruct_F2(const HigherOrderOracle& measured, const MfgCoefficients& known,
                                    const Probes& probes, const ReconstructOptions& opts) {
    return reconstruct_higher(measured, known, probes, opts, 2);
}

ReconstructionResult reconstruct_F3(const HigherOrderOracle& measured, const MfgCoefficients& known,
                                    const Probes& probes, const ReconstructOptions& opts) {
    return reconstruct_higher(measured, known, probes, opts, 3);
}

std::vector<Vec3> cone_frequencies(const Grid& g, const PartialDataSpec& spec, int cutoff, int count) {
    std::vector<Vec3> out;
    for (const Vec3& x : frequency_lattice(g, cutoff)) {
        if (static_cast<int>(out.size()) >= count) break;
        const Vec3 l = directions(x).first;
        const Vec3 d{l[0] - spec.lambda_prime[0], l[1] - spec.lambda_prime[1], l[2] - spec.lambda_prime[2]};
        if (norm(d) < spec.eps0) out.push_back(x);
    }
    return out;
}

ConeData cone_fourier_data(Slot slot, const DnOracle& partial_measured, const MfgCoefficients& reference,
                           const PartialDataSpec& spec, int xi_count, const ExtractOptions& opts, int cutoff,
                           const ScalarField* hidden_coefficient) {
    reference.check();
    spec.check();
    const GridPtr& G = reference.grid();
    const Grid& g = *G;
    if (spec.u_plus.grid != G) throw ParameterError("partial data spec lives on a different grid");
    if (xi_count < 1) throw ParameterError("xi_count must be positive");
    if (opts.richardson) throw ParameterError("cone data are extracted at a single h");
    const ScalarField& c = slot_coefficient(reference, slot);
    const LinearDn ref(G, reference.v, c.real());
    std::unique_ptr<LinearDn> hid;
    if (hidden_coefficient) hid = std::make_unique<LinearDn>(G, reference.v, hidden_coefficient->real());

    const std::vector<Vec3> xi = cone_frequencies(g, spec, cutoff, xi_count);
    if (xi.empty()) throw ParameterError("no lattice frequency lies in the cone");
    ConeData out;
    std::map<Vec3, BoundaryAudit> audits;
    std::mutex audit_mutex;
    sweep(g, xi, opts, out.data, [&](const Vec3& x, double h) {
        const CgoParams pp = cgo_params(x, h, +1), pm = cgo_params(x, h, -1);
        BoundaryRegion vanish = threshold_region(G, pm.lambda, spec.eps0, true);
        vanish.direction = pm.lambda;
        vanish.eps0 = spec.eps0;
        const CgoSolution in = build_cgo(c, reference.v, pp, Amplitude::split);
        const CgoSolution probe = build_vanishing_cgo(c, reference.v, pm, vanish, Amplitude::split);
        VecC datum = boundary_values(g, in.field.values);
        for (int b = 0; b < g.boundary_count(); ++b)
            if (!spec.u_plus.contains(b)) datum[b] = 0.0;
        const VecC z = boundary_values(g, probe.field.values);
        VecC own = ref.apply(datum);
        for (int b = 0; b < g.boundary_count(); ++b)
            if (!spec.u_minus.contains(b)) own[b] = 0.0;
        const double scale = std::exp(in.log_scale + probe.log_scale);
        const cplx val = boundary_pairing(g, reference.v, own, partial_measured(datum), z) * scale;

        if (hid) {
            BoundaryAudit a;
            a.xi = x;
            const VecC own_full = ref.apply(datum), hid_full = hid->apply(datum);
            const VecR& s = g.boundary_weights();
            for (int b = 0; b < g.boundary_count(); ++b) {
                const cplx term = -s[b] * reference.v * (own_full[b] - hid_full[b]) * z[b] * scale;
                if (vanish.contains(b))
                    a.a += term;
                else if (spec.u_minus.contains(b))
                    a.b += term;
                else {
                    a.c += term;
                    ++a.c_nodes;
                }
            }
            const VecC m = hid->solve(datum);
            const VecR dq = hidden_coefficient->real() - c.real();
            a.volume = integrate(G, dq.cast<cplx>().cwiseProduct(m).cwiseProduct(probe.field.values)) * scale;
            a.relative = std::abs(a.a + a.b + a.c - a.volume) / std::max(std::abs(a.volume), 1e-300);
            std::lock_guard<std::mutex> lock(audit_mutex);
            audits[x] = a;
        }
        return Sample{val, std::max(in.remainder_norm, probe.remainder_norm)};
    });
    out.data.domain = FourierData::Domain::cone;
    out.data.cone_lambda = spec.lambda_prime;
    out.data.cone_eps0 = spec.eps0;
    if (hid) {
        // frequencies filled by conjugation carry the conjugate audit
        for (const Vec3& x : xi) {
            const bool flip = negative_half(x);
            BoundaryAudit a = audits.at(flip ? neg(x) : x);
            if (flip) {
                a.xi = x;
                a.a = std::conj(a.a);
                a.b = std::conj(a.b);
                a.c = std::conj(a.c);
                a.volume = std::conj(a.volume);
            }
            out.audit.push_back(a);
        }
    }
    return out;
}

void write_fourier_csv(const std::string& path, const FourierData& data) {
    std::ofstream os(path);
    if (!os) throw ParameterError("cannot write " + path);
    os << "xi1,xi2,xi3,value_re,value_im\n" << std::setprecision(17);
    for (int j = 0; j < data.size(); ++j)
        os << data.xi[j][0] << ',' << data.xi[j][1] << ',' << data.xi[j][2] << ',' << data.values[j].real() << ','
           << data.values[j].imag() << '\n';
}

void write_metrics_csv(const std::string& path, const ReconstructionResult& r) {
    std::ofstream os(path);
    if (!os) throw ParameterError("cannot write " + path);
    std::vector<double> rem = r.data.remainder;
    std::sort(rem.begin(), rem.end());
    auto quantile = [&](double q) { return rem.empty() ? 0.0 : rem[static_cast<std::size_t>(q * (rem.size() - 1))]; };
    os << "metric,value\n" << std::setprecision(17);
    if (r.error) os << "relative_error," << *r.error << '\n';
    os << "cutoff," << r.cutoff << '\n'
       << "h," << r.h << '\n'
       << "richardson," << (r.data.richardson ? 1 : 0) << '\n'
       << "frequencies," << r.data.size() << '\n'
       << "imag_residual," << r.imag_residual << '\n'
       << "remainder_min," << quantile(0.0) << '\n'
       << "remainder_median," << quantile(0.5) << '\n'
       << "remainder_max," << quantile(1.0) << '\n';
}

}  // namespace mfglab
