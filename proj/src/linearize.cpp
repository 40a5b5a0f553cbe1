#include "mfglab/linearize.hpp"

#include <cmath>

namespace mfglab {

namespace {

VecC F2_values(const MfgCoefficients& c) {
    const ScalarField* f = c.F.find(2);
    return f ? f->values : VecC(VecC::Zero(c.grid()->node_count()));
}
VecC F3_values(const MfgCoefficients& c) {
    const ScalarField* f = c.F.find(3);
    return f ? f->values : VecC(VecC::Zero(c.grid()->node_count()));
}

ScalarField make(const GridPtr& g, const VecC& v) {
    const bool cx = v.imag().cwiseAbs().maxCoeff() > 0.0;
    return {g, cx ? v : VecC(v.real().cast<cplx>()), cx};
}

}  // namespace

void EpsFamily::check() const {
    if (f.size() != eps.size() || g.size() != eps.size()) throw ParameterError("family component count mismatch");
    if (eps.empty() || eps.size() > 3) throw ParameterError("family must have 1 to 3 components");
    for (double e : eps)
        if (!(e > 0.0)) throw ParameterError("family amplitudes must be positive");
    if (positivity)
        for (std::size_t l = 0; l < g.size(); ++l)
            if (l != 1 && g[l].values.real().minCoeff() < 0.0)
                throw PositivityViolation("g_l must be nonnegative for l != 2");
}

double positivity_margin(const EpsFamily& fam) {
    VecR s = VecR::Zero(fam.g.at(0).values.size());
    for (int l = 0; l < fam.size(); ++l) s += fam.eps[l] * fam.g[l].real();
    return s.minCoeff();
}

FieldPair first_order(const MfgCoefficients& c, const BoundaryTrace& f, const BoundaryTrace& g) {
    c.check();
    const LinearDn dk(c.grid(), c.v, c.k.real()), dr(c.grid(), c.v, c.r.real());
    return {make(c.grid(), dk.solve(f.values)), make(c.grid(), dr.solve(g.values))};
}

std::pair<VecC, VecC> second_order_sources(const MfgCoefficients& c, const FieldPair& a, const FieldPair& b) {
    const Grid& g = *c.grid();
    VecC su = F2_values(c).cwiseProduct(a.m.values).cwiseProduct(b.m.values) - grad_dot(g, a.u.values, b.u.values);
    VecC sm = flux_divergence(g, a.m.values, b.u.values) + flux_divergence(g, b.m.values, a.u.values);
    return {su, sm};
}

FieldPair second_order(const MfgCoefficients& c, const FieldPair& a, const FieldPair& b) {
    c.check();
    const auto [su, sm] = second_order_sources(c, a, b);
    const VecC zero = VecC::Zero(c.grid()->boundary_count());
    const EllipticOperator ok(c.grid(), c.v, c.k.real()), orr(c.grid(), c.v, c.r.real());
    return {make(c.grid(), ok.solve(su, zero)), make(c.grid(), orr.solve(sm, zero))};
}

VecC third_order_source(const MfgCoefficients& c, const std::array<FieldPair, 3>& first,
                        const std::array<FieldPair, 3>& second) {
    const Grid& g = *c.grid();
    const VecC F2 = F2_values(c), F3 = F3_values(c);
    VecC s = F3.cwiseProduct(first[0].m.values).cwiseProduct(first[1].m.values).cwiseProduct(first[2].m.values);
    for (int i = 0; i < 3; ++i) {
        s += F2.cwiseProduct(first[i].m.values).cwiseProduct(second[i].m.values);
        s -= grad_dot(g, first[i].u.values, second[i].u.values);
    }
    return s;
}

ScalarField third_order_u(const MfgCoefficients& c, const std::array<FieldPair, 3>& first,
                          const std::array<FieldPair, 3>& second) {
    c.check();
    const EllipticOperator ok(c.grid(), c.v, c.k.real());
    return make(c.grid(), ok.solve(third_order_source(c, first, second), VecC::Zero(c.grid()->boundary_count())));
}

VecC u_flux(const MfgCoefficients& c, const VecC& w, const VecC& source) {
    const EllipticOperator ok(c.grid(), c.v, c.k.real());
    return ok.conormal_flux(w, &source) / c.v;
}

LinearizationResult linearize_analytic(const MfgCoefficients& c, const EpsFamily& fam) {
    fam.check();
    LinearizationResult r;
    for (int l = 0; l < fam.size(); ++l) r.first.push_back(first_order(c, fam.f[l], fam.g[l]));
    if (fam.size() >= 2) r.second = second_order(c, r.first[0], r.first[1]);
    return r;
}

FieldPair fd_derivative(const MfgCoefficients& c, const EpsFamily& fam, const std::vector<int>& idx,
                        const NewtonOptions& opts) {
    fam.check();
    if (idx.empty() || idx.size() > 3) throw ParameterError("multi-index must have 1 to 3 entries");
    for (std::size_t a = 0; a < idx.size(); ++a) {
        if (idx[a] < 1 || idx[a] > fam.size()) throw ParameterError("multi-index entry out of range");
        for (std::size_t b = 0; b < a; ++b)
            if (idx[a] == idx[b]) throw ParameterError("multi-index entries must be distinct");
    }
    const GridPtr& G = c.grid();
    const int n = static_cast<int>(idx.size());
    VecR du = VecR::Zero(G->node_count()), dm = VecR::Zero(G->node_count());

    auto evaluate = [&](const std::vector<double>& s, double weight) {
        bool zero = true;
        for (double x : s) zero &= (x == 0.0);
        if (zero) return;  // the zero datum has the exact solution (0,0)
        BoundaryTrace f = BoundaryTrace::zeros(G), g = BoundaryTrace::zeros(G);
        for (int a = 0; a < n; ++a) {
            const int l = idx[a] - 1;
            f.values += s[a] * fam.eps[l] * fam.f[l].values;
            g.values += s[a] * fam.eps[l] * fam.g[l].values;
        }
        if (fam.positivity && g.values.real().minCoeff() <= 0.0)
            throw PositivityViolation("evaluated datum g is not strictly positive");
        const MfgSolution sol = solve_mfg(c, f, g, opts);
        du += weight * sol.u.real();
        dm += weight * sol.m.real();
    };

    double denom = 1.0;
    for (int a = 0; a < n; ++a) denom *= fam.eps[idx[a] - 1];
    if (n == 1) {
        evaluate({1.0}, 1.0);
    } else {
        // first direction shifted to base eps, the others start at zero
        for (int mask = 0; mask < (1 << n); ++mask) {
            std::vector<double> s(n);
            int ones = 0;
            for (int a = 0; a < n; ++a) {
                const int bit = (mask >> a) & 1;
                s[a] = (a == 0 ? 1.0 : 0.0) + bit;
                ones += bit;
            }
            evaluate(s, ((n - ones) % 2 == 0) ? 1.0 : -1.0);
        }
    }
    du /= denom;
    dm /= denom;
    return {ScalarField::from_real(G, du), ScalarField::from_real(G, dm)};
}

}  // namespace mfglab
