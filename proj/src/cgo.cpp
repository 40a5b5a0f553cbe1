#include "mfglab/cgo.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>

#include <fftw3.h>

#include <Eigen/QR>
#include <unsupported/Eigen/IterativeSolvers>

namespace mfglab {

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

cplx phase_dot(const Phase& z, const Vec3& x) { return z[0] * x[0] + z[1] * x[1] + z[2] * x[2]; }

cplx symbol_defect(const Phase& z, double hm) {
    cplx s = 0.0;
    for (const cplx& zj : z) s += std::cosh(hm * zj) - 1.0;
    return s;
}

cplx symbol_slope(const Phase& z, double hm, const Vec3& d) {
    cplx s = 0.0;
    for (int j = 0; j < 3; ++j) s += hm * std::sinh(hm * z[j]) * d[j];
    return s;
}

/// sum_j (2 - 2 cosh(hm zeta_j)) / hm^2, the 7-point symbol of -Lap at exp(zeta.x)
cplx laplace_symbol(const Phase& z, double hm) { return -2.0 * symbol_defect(z, hm) / (hm * hm); }

Phase add(const Phase& z, cplx s, const Vec3& d) { return {z[0] + s * d[0], z[1] + s * d[1], z[2] + s * d[2]}; }

/// Integer lattice vector parallel to lambda when one with small entries exists.
std::optional<Vec3> integer_direction(const Vec3& lambda) {
    double big = 0.0;
    for (double l : lambda) big = std::max(big, std::abs(l));
    for (int q = 1; q <= 2000; ++q) {
        Vec3 l;
        bool ok = true;
        for (int j = 0; j < 3 && ok; ++j) {
            const double t = lambda[j] / big * q;
            l[j] = std::round(t);
            ok = std::abs(t - l[j]) < 1e-9;
        }
        if (ok) return l;
    }
    return std::nullopt;
}

struct TorusPlans {
    fftw_plan fwd, bwd;
};

std::mutex plan_mutex;

const TorusPlans& torus_plans(int M) {
    static std::map<int, TorusPlans> cache;
    std::lock_guard<std::mutex> lock(plan_mutex);
    auto it = cache.find(M);
    if (it != cache.end()) return it->second;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * M * M * M));
    TorusPlans p{fftw_plan_dft_3d(M, M, M, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE),
                 fftw_plan_dft_3d(M, M, M, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE)};
    fftw_free(buf);
    return cache.emplace(M, p).first->second;
}

/// y -> y + G(ct y) on the torus of period 2 holding the box in its first octant, with G the
/// Floquet-modulated inverse of the conjugated 7-point operator.
class TorusOperator {
public:
    using Scalar = cplx;
    using RealScalar = double;

    TorusOperator(const Grid& g, const VecR& ct, const Phase& zeta, const Vec3& lambda)
        : M_(2 * g.n_cells()), size_(M_ * M_ * M_), plans_(torus_plans(M_)) {
        const double hm = g.h_mesh(), L = M_ * hm;
        Vec3 k0;
        if (auto l = integer_direction(lambda)) {
            const double l2 = dot(*l, *l);
            for (int j = 0; j < 3; ++j) k0[j] = M_PI * (*l)[j] / (L * l2);
        } else {
            for (int j = 0; j < 3; ++j) k0[j] = M_PI * lambda[j] / L;
        }
        std::array<VecC, 3> axis_symbol, axis_mod;
        for (int j = 0; j < 3; ++j) {
            axis_symbol[j].resize(M_);
            axis_mod[j].resize(M_);
            for (int i = 0; i < M_; ++i) {
                const int f = i < M_ / 2 ? i : i - M_;
                const double k = 2.0 * M_PI * f / L + k0[j];
                axis_symbol[j][i] = (2.0 - 2.0 * std::cosh(hm * (zeta[j] + cplx(0.0, k)))) / (hm * hm);
                axis_mod[j][i] = std::exp(cplx(0.0, k0[j] * i * hm));
            }
        }
        inv_symbol_.resize(size_);
        mod_.resize(size_);
        ct_ = VecR::Zero(size_);
        double smin = INFINITY, smax = 0.0;
        for (int a = 0; a < M_; ++a)
            for (int b = 0; b < M_; ++b)
                for (int c = 0; c < M_; ++c) {
                    const int p = (a * M_ + b) * M_ + c;
                    const cplx s = axis_symbol[0][a] + axis_symbol[1][b] + axis_symbol[2][c];
                    smin = std::min(smin, std::abs(s));
                    smax = std::max(smax, std::abs(s));
                    inv_symbol_[p] = 1.0 / (s * double(size_));
                    mod_[p] = axis_mod[0][a] * axis_mod[1][b] * axis_mod[2][c];
                }
        if (!(smin > 1e-12 * smax)) throw SingularOperator("periodic CGO symbol vanishes on the lattice");
        for (int p = 0; p < g.node_count(); ++p) ct_[embed(g, p)] = ct[p];
        buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * size_));
    }
    ~TorusOperator() { fftw_free(buf_); }
    TorusOperator(const TorusOperator&) = delete;
    TorusOperator& operator=(const TorusOperator&) = delete;

    Eigen::Index rows() const { return size_; }
    Eigen::Index cols() const { return size_; }

    int embed(const Grid& g, int node) const {
        const auto i = g.multi_index(node);
        return (i[0] * M_ + i[1]) * M_ + i[2];
    }

    VecC green(const VecC& f) const {
        auto* z = reinterpret_cast<cplx*>(buf_);
        for (int p = 0; p < size_; ++p) z[p] = f[p] / mod_[p];
        fftw_execute_dft(plans_.fwd, buf_, buf_);
        for (int p = 0; p < size_; ++p) z[p] *= inv_symbol_[p];
        fftw_execute_dft(plans_.bwd, buf_, buf_);
        VecC out(size_);
        for (int p = 0; p < size_; ++p) out[p] = z[p] * mod_[p];
        return out;
    }

    VecC operator*(const VecC& y) const { return y + green(ct_.cwiseProduct(y)); }

private:
    int M_, size_;
    const TorusPlans& plans_;
    VecC inv_symbol_, mod_;
    VecR ct_;
    fftw_complex* buf_ = nullptr;
};

void require_grid3(const Grid& g) {
    if (g.dim() != 3) throw ParameterError("CGO solutions need dim = 3");
}

}  // namespace

void CgoParams::check() const {
    if (std::abs(norm(lambda) - 1.0) > 1e-12 || std::abs(norm(eta) - 1.0) > 1e-12)
        throw ParameterError("lambda and eta must be unit vectors");
    const double sx = std::max(1.0, norm(xi));
    if (std::abs(dot(lambda, eta)) > 1e-12 || std::abs(dot(xi, lambda)) > 1e-12 * sx ||
        std::abs(dot(xi, eta)) > 1e-12 * sx)
        throw ParameterError("lambda, eta, xi must be mutually orthogonal");
    if (!(h > 0.0 && h <= 1.0)) throw ParameterError("h must lie in (0, 1]");
    if (sign != 1 && sign != -1) throw ParameterError("sign must be +1 or -1");
}

std::pair<Vec3, Vec3> orthogonal_triplet(const Vec3& xi, int dim) {
    if (dim != 3) throw ParameterError("orthogonal triplets need dim = 3");
    const double nx = norm(xi);
    if (nx == 0.0) throw ParameterError("xi must be nonzero");
    const Vec3 xh{xi[0] / nx, xi[1] / nx, xi[2] / nx};
    Vec3 l{};
    for (int a = 0; a < 3; ++a) {
        for (int j = 0; j < 3; ++j) l[j] = (j == a ? 1.0 : 0.0) - xh[a] * xh[j];
        if (norm(l) > 0.5) break;
    }
    const double nl = norm(l);
    for (double& c : l) c /= nl;
    const Vec3 e{xh[1] * l[2] - xh[2] * l[1], xh[2] * l[0] - xh[0] * l[2], xh[0] * l[1] - xh[1] * l[0]};
    return {l, e};
}

double resolution_floor(const Grid& g) { return 2.0 * g.h_mesh(); }

Phase cgo_phase(const Grid& g, const CgoParams& p, Amplitude kind) {
    if (kind == Amplitude::split) {
        auto [zm, zp] = split_phases(g, p);
        return p.sign < 0 ? zm : zp;
    }
    const double hm = g.h_mesh();
    Phase z;
    for (int j = 0; j < 3; ++j) z[j] = double(p.sign) * cplx(p.lambda[j], p.eta[j]) / p.h;
    for (int it = 0; it < 60; ++it) {
        const cplx d = symbol_defect(z, hm);
        if (std::abs(d) < 1e-16) break;
        const cplx step = -d / symbol_slope(z, hm, p.lambda);
        z = add(z, step, p.lambda);
        if (std::abs(step) < 1e-15 * std::abs(z[0] + z[1] + z[2]) + 1e-300) break;
    }
    return z;
}

std::pair<Phase, Phase> split_phases(const Grid& g, const CgoParams& p) {
    const double hm = g.h_mesh(), nx = norm(p.xi);
    const double tau = std::max(1.0 / p.h, 0.5 * nx);
    const double s = std::sqrt(std::max(tau * tau - 0.25 * nx * nx, 0.0));
    const Vec3 xh = nx > 0 ? Vec3{p.xi[0] / nx, p.xi[1] / nx, p.xi[2] / nx} : p.eta;
    Phase zm, zp;
    auto complement = [&](const Phase& a) {
        Phase b;
        for (int j = 0; j < 3; ++j) b[j] = cplx(0.0, p.xi[j]) - a[j];
        return b;
    };
    for (int j = 0; j < 3; ++j) zm[j] = cplx(-tau * p.lambda[j], 0.5 * p.xi[j] - s * p.eta[j]);
    zp = complement(zm);
    for (int it = 0; it < 60; ++it) {
        const cplx d1 = symbol_defect(zm, hm), d2 = symbol_defect(zp, hm);
        if (std::max(std::abs(d1), std::abs(d2)) < 1e-16) break;
        cplx dp, dw = 0.0;
        if (nx == 0.0) {
            dp = -d1 / symbol_slope(zm, hm, p.lambda);
        } else {
            Eigen::Matrix2cd J;
            J << symbol_slope(zm, hm, p.lambda), symbol_slope(zm, hm, xh), -symbol_slope(zp, hm, p.lambda),
                -symbol_slope(zp, hm, xh);
            const Eigen::Vector2cd st = J.partialPivLu().solve(Eigen::Vector2cd(-d1, -d2));
            dp = st[0];
            dw = st[1];
        }
        zm = add(add(zm, dp, p.lambda), dw, xh);
        zp = complement(zm);
        if (std::abs(dp) + std::abs(dw) < 1e-15 * tau) break;
    }
    return {zm, zp};
}

double interior_residual(const ScalarField& c, double v, const VecC& w) {
    const Grid& g = *c.grid;
    const VecC r = neg_laplacian(g, v, w);
    double out = 0.0;
    for (int p : g.interior_nodes()) out = std::max(out, std::abs(r[p] + c.values[p] * w[p]));
    return out;
}

CgoSolution build_cgo(const ScalarField& c, double v, const CgoParams& params, Amplitude kind) {
    const GridPtr& G = c.grid;
    const Grid& g = *G;
    require_grid3(g);
    if (kind == Amplitude::plane_wave) {
        const double nx = norm(params.xi);
        if (std::hypot(dot(params.lambda, params.xi), dot(params.eta, params.xi)) > 1e-8 * nx)
            throw AmplitudeInvalid("(lambda + i eta).grad a != 0 for the plane wave: xi is not orthogonal to lambda, eta");
    }
    params.check();
    c.check();
    if (!(v > 0.0)) throw ParameterError("v must be positive");
    if (params.h < resolution_floor(g) - 1e-12)
        throw ParameterError("h is below the resolution floor 2 h_mesh");

    CgoSolution out;
    out.params = params;
    out.kind = kind;
    out.zeta = cgo_phase(g, params, kind);
    const Vec3 kappa = kind == Amplitude::plane_wave ? params.xi : Vec3{0.0, 0.0, 0.0};
    const Phase za = add(out.zeta, cplx(0.0, 1.0), kappa);
    const cplx sigma = laplace_symbol(za, g.h_mesh());

    const int N = g.node_count();
    VecC a(N), phase(N);
    out.log_scale = -INFINITY;
    for (int p = 0; p < N; ++p) {
        const Vec3 x = g.coord(p);
        a[p] = std::exp(cplx(0.0, dot(kappa, x)));
        phase[p] = phase_dot(out.zeta, x);
        out.log_scale = std::max(out.log_scale, phase[p].real());
    }
    const VecR ct = c.values.real() / v;
    if (c.values.imag().cwiseAbs().maxCoeff() > 0.0) throw ParameterError("CGO coefficient must be real");

    TorusOperator op(g, ct, out.zeta, params.lambda);
    VecC f = VecC::Zero(op.rows());
    for (int p = 0; p < N; ++p) f[op.embed(g, p)] = -(sigma + ct[p]) * a[p];
    const VecC rhs = op.green(f);
    VecC b = VecC::Zero(op.rows());
    if (rhs.norm() > 0.0) {
        Eigen::Index iters = 1000;
        double tol = 1e-13;
        Eigen::IdentityPreconditioner pre;
        Eigen::internal::gmres(op, rhs, b, pre, iters, 40, tol);
        out.iterations = static_cast<int>(iters);
        if (tol > 1e-10) throw NonConvergence("GMRES did not converge for the CGO remainder");
    }
    VecC bo(N), z(N);
    for (int p = 0; p < N; ++p) {
        bo[p] = b[op.embed(g, p)];
        z[p] = std::exp(phase[p] - out.log_scale) * (a[p] + bo[p]);
    }
    out.amplitude = ScalarField::from_complex(G, a);
    out.remainder = ScalarField::from_complex(G, bo);
    out.field = ScalarField::from_complex(G, z);
    out.remainder_norm = l2_norm(out.remainder);
    out.residual = interior_residual(c, v, z) / z.cwiseAbs().maxCoeff();
    return out;
}

CgoSolution build_vanishing_cgo(const ScalarField& c, double v, const CgoParams& params, const BoundaryRegion& region,
                                Amplitude kind) {
    if (params.sign != -1) throw ParameterError("the vanishing CGO decays along lambda: sign must be -1");
    if (region.grid != c.grid) throw ParameterError("region lives on a different grid");
    if (region.direction) {
        const Vec3& d = *region.direction;
        if (std::abs(d[0] - params.lambda[0]) + std::abs(d[1] - params.lambda[1]) + std::abs(d[2] - params.lambda[2]) >
            1e-12)
            throw ParameterError("region direction differs from lambda");
    }
    CgoSolution out = build_cgo(c, v, params, kind);
    const Grid& g = *c.grid;
    VecC data = VecC::Zero(g.boundary_count());
    for (int b = 0; b < g.boundary_count(); ++b)
        if (region.contains(b)) data[b] = out.field.values[g.boundary_nodes()[b]];
    if (data.cwiseAbs().maxCoeff() > 0.0) {
        const EllipticOperator op(c.grid, v, c.values);
        out.field.values -= op.solve_dirichlet(data);
        for (int b = 0; b < g.boundary_count(); ++b)
            if (region.contains(b)) out.field.values[g.boundary_nodes()[b]] = 0.0;
    }
    for (int p = 0; p < g.node_count(); ++p) {
        const cplx e = std::exp(phase_dot(out.zeta, g.coord(p)) - out.log_scale);
        out.remainder.values[p] = out.field.values[p] / e - out.amplitude.values[p];
    }
    out.remainder_norm = l2_norm(out.remainder);
    out.residual = interior_residual(c, v, out.field.values) / out.field.values.cwiseAbs().maxCoeff();
    return out;
}

std::vector<char> interior_subdomain(const Grid& g, double collar) {
    std::vector<char> mask(g.node_count(), 0);
    for (int p = 0; p < g.node_count(); ++p) {
        const Vec3 x = g.coord(p);
        double d = 1.0;
        for (int j = 0; j < g.dim(); ++j) d = std::min({d, x[j], 1.0 - x[j]});
        mask[p] = d >= collar - 1e-12;
    }
    return mask;
}

RungeResult runge_approximate(const ScalarField& c, double v, const ScalarField& target,
                              const BoundaryRegion* constraint, const std::vector<char>* subdomain, double reg,
                              int max_freq) {
    const GridPtr& G = c.grid;
    const Grid& g = *G;
    if (target.grid != G) throw ParameterError("target lives on a different grid");
    if (reg < 0.0) throw ParameterError("reg must be nonnegative");
    auto inside = [&](int p) { return !subdomain || (*subdomain)[p]; };

    // the target must solve the equation wherever the whole stencil lies in the subdomain
    {
        const VecC r = neg_laplacian(g, v, target.values) + c.values.cwiseProduct(target.values);
        const double scale =
            (2.0 * g.dim() * v / (g.h_mesh() * g.h_mesh()) + c.values.cwiseAbs().maxCoeff()) *
            std::max(target.values.cwiseAbs().maxCoeff(), 1e-300);
        for (int p : g.interior_nodes()) {
            bool full = inside(p);
            for (int ax = 0; ax < g.dim() && full; ++ax)
                full = inside(p + g.stride(ax)) && inside(p - g.stride(ax));
            if (full && std::abs(r[p]) > 1e-6 * scale)
                throw ParameterError("Runge target does not solve the screened equation");
        }
    }

    const BoundaryBasis basis = make_boundary_basis(G, max_freq);
    const EllipticOperator op(G, v, c.values);
    std::vector<int> rows;
    for (int p = 0; p < g.node_count(); ++p)
        if (inside(p)) rows.push_back(p);
    const int R = static_cast<int>(rows.size());

    std::vector<VecR> data;
    for (const BoundaryTrace& t : basis.traces) {
        VecR d = t.real();
        if (constraint)
            for (int b = 0; b < g.boundary_count(); ++b)
                if (constraint->contains(b)) d[b] = 0.0;
        if (d.cwiseAbs().maxCoeff() > 0.0) data.push_back(std::move(d));
    }
    const int K = static_cast<int>(data.size());
    if (K == 0) throw RankDeficient("no boundary data survive the constraint");

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(R + K, K);
    const VecR& w = g.weights();
    for (int j = 0; j < K; ++j) {
        const VecR s = op.solve_dirichlet(data[j].cast<cplx>()).real();
        for (int i = 0; i < R; ++i) A(i, j) = std::sqrt(w[rows[i]]) * s[rows[i]];
        A(R + j, j) = std::sqrt(reg);
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(R + K, 2);
    for (int i = 0; i < R; ++i) {
        const cplx t = target.values[rows[i]] * std::sqrt(w[rows[i]]);
        rhs(i, 0) = t.real();
        rhs(i, 1) = t.imag();
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    const auto& Rm = qr.matrixR();
    if (std::abs(Rm(K - 1, K - 1)) < 1e-14 * std::abs(Rm(0, 0)))
        throw RankDeficient("Runge least-squares system is numerically singular");
    const Eigen::MatrixXd x = qr.solve(rhs);
    const Eigen::MatrixXd fit = A.topRows(R) * x - rhs.topRows(R);

    RungeResult out;
    out.datum = BoundaryTrace::zeros(G, true);
    for (int j = 0; j < K; ++j) out.datum.values += cplx(x(j, 0), x(j, 1)) * data[j].cast<cplx>();
    out.achieved_error = fit.norm();
    out.columns = K;
    return out;
}

void write_decay_csv(const std::string& path, const std::vector<CgoSolution>& sweep) {
    std::ofstream os(path);
    if (!os) throw ParameterError("cannot write " + path);
    os << "h,remainder_norm,residual\n" << std::setprecision(17);
    for (const auto& s : sweep) os << s.params.h << ',' << s.remainder_norm << ',' << s.residual << '\n';
}

}  // namespace mfglab
