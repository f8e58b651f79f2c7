#include "fpjpa/circuit_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"

namespace fpjpa {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw ValidationError(std::string(name) + " must be positive and finite");
}

void require_nonnegative(double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
        throw ValidationError(std::string(name) + " must be non-negative and finite");
}

// Safeguarded Newton on g(x) = x - s*beta*sin(phi_c - x), bracket [-beta, beta].
FixedPoint solve_branch(double phi_c, double beta, int s, int max_iter) {
    FixedPoint fp;
    fp.branch = s;
    auto g = [&](double x) { return x - s * beta * std::sin(phi_c - x); };
    double lo = -beta, hi = beta;
    if (beta == 0.0) {
        fp.phi_ex_eff = phi_c;
        return fp;
    }
    double x = s * beta * std::sin(phi_c);
    x = std::clamp(x, lo, hi);
    double gx = g(x);
    for (int it = 0; it < max_iter; ++it) {
        fp.iterations = it + 1;
        if (std::abs(gx) < kFixedPointTol) break;
        if (gx > 0.0) hi = x; else lo = x;
        double dg = 1.0 + s * beta * std::cos(phi_c - x);
        double xn = (dg > 0.0) ? x - gx / dg : 0.5 * (lo + hi);
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        x = xn;
        gx = g(x);
        if (hi - lo < 1e-300) break;
    }
    fp.x = x;
    fp.residual = gx;
    fp.phi_ex_eff = phi_c - x;
    if (!(std::abs(gx) < kFixedPointTol))
        throw SolverError("circulating-flux fixed point did not converge", gx);
    return fp;
}

}  // namespace

void validate(const CircuitParams& c) {
    if (c.n_squids < 1) throw ValidationError("n_squids must be >= 1");
    require_nonnegative(c.l_loop, "l_loop");
    require_positive(c.l_josephson, "l_josephson");
    require_nonnegative(c.l_geometric, "l_geometric");
    require_positive(c.c_internal, "c_internal");
    require_positive(c.c_coupling, "c_coupling");
    require_positive(c.z_waveguide, "z_waveguide");
    require_nonnegative(c.mutual, "mutual");
    require_nonnegative(c.l_pump_shunt, "l_pump_shunt");
    if (c.beta() > 1.0)
        throw ValidationError("loop inductance too large: L_loop/2 > L_J (bistable SQUID)");
}

FixedPoint solve_circulating_flux(double phi_c, double beta, int max_iter) {
    if (!std::isfinite(phi_c)) throw DomainError("applied flux must be finite");
    if (!(beta >= 0.0) || beta > 1.0) throw DomainError("beta must lie in [0, 1]");
    FixedPoint up = solve_branch(phi_c, beta, +1, max_iter);
    if (std::cos(up.phi_ex_eff) > kBiasCosFloor) return up;
    FixedPoint dn = solve_branch(phi_c, beta, -1, max_iter);
    if (std::cos(dn.phi_ex_eff) < -kBiasCosFloor) return dn;
    throw DegenerateBiasError("effective flux sits at the pi/2 branch crossing");
}

BiasState bias_from_flux(const CircuitParams& c, double phi_c) {
    FixedPoint fp = solve_circulating_flux(phi_c, c.beta());
    return BiasState{phi_c, fp.phi_ex_eff, fp.x, fp.branch};
}

BiasState bias_from_current(const CircuitParams& c, double current, double flux_per_ampere) {
    return bias_from_flux(c, current * flux_per_ampere);
}

double applied_flux_for_effective(double phi_ex_eff, double beta) {
    const double c = std::cos(phi_ex_eff);
    if (std::abs(c) < kBiasCosFloor) throw DegenerateBiasError("bias too close to pi/2");
    return phi_ex_eff + (c > 0.0 ? 1.0 : -1.0) * beta * std::sin(phi_ex_eff);
}

double effective_josephson_inductance(double l_j, double phi_ex_eff, double cos_floor) {
    double cs = std::abs(std::cos(phi_ex_eff));
    if (cs < cos_floor)
        throw DegenerateBiasError("bias too close to pi/2: |cos(phi_eff)| = " + std::to_string(cs));
    return l_j / (2.0 * cs);
}

JpaParams hamiltonian_params(const CircuitParams& c, const BiasState& b) {
    validate(c);
    JpaParams p;
    const double n = c.n_squids;
    p.l_j_eff = effective_josephson_inductance(c.l_josephson, b.phi_ex_eff);
    p.l_tot = n * (0.25 * c.l_loop + p.l_j_eff) + c.l_geometric;
    p.c_tot = c.c_total();
    p.omega_a = 1.0 / std::sqrt(p.l_tot * p.c_tot);
    p.p_j = n * p.l_j_eff / p.l_tot;
    p.p_sq = p.l_j_eff / (0.25 * c.l_loop + p.l_j_eff);
    p.p_kappa = c.c_coupling / p.c_tot;
    p.alpha_a = std::sqrt(p.l_tot / p.c_tot) / kZq;
    p.alpha0 = c.z_waveguide / kZq;
    p.kbar = -p.alpha_a * p.p_j * p.p_j * p.p_j / (8.0 * n * n);
    p.kappabar = p.alpha0 / p.alpha_a * p.p_kappa * p.p_kappa;
    p.kerr = p.kbar * p.omega_a;
    p.kappa = p.kappabar * p.omega_a;
    return p;
}

double kerr_from_charging_energy(const CircuitParams& c, const BiasState& b) {
    JpaParams p = hamiltonian_params(c, b);
    const double ec = std::pow(2.0 * kElectron, 2) / (2.0 * p.c_tot);
    const double n = c.n_squids;
    return -std::pow(p.p_j, 3) * ec / (4.0 * n * n) / kHbar;
}

double two_photon_drive_bar(double p_j, double p_sq, double phi_ex_eff, double phi_p) {
    return p_j * p_sq * std::tan(phi_ex_eff) * phi_p / 4.0;
}

PumpAmplitude pump_amplitude(const CircuitParams& c, double pump_power, double omega_p,
                             const JpaParams& jpa, const BiasState& b) {
    if (!(pump_power >= 0.0)) throw DomainError("pump power must be non-negative");
    PumpAmplitude out;
    const double z0 = c.z_waveguide;
    const double xl = omega_p * c.l_pump_shunt;
    out.phi_p = 2.0 * std::sqrt(2.0) * c.mutual * std::sqrt(pump_power * z0) /
                (kPhi0 * std::sqrt(z0 * z0 + xl * xl));
    out.omegabar_p = two_photon_drive_bar(jpa.p_j, jpa.p_sq, b.phi_ex_eff, out.phi_p);
    out.omega_pump_amp = jpa.omega_a * out.omegabar_p;
    return out;
}

ChargeFluxSeries charge_flux_expansion(double beta, double phi_ex_eff) {
    if (!(beta >= 0.0) || beta > 1.0) throw DomainError("beta must lie in [0, 1]");
    const double cc = std::abs(std::cos(phi_ex_eff));
    if (cc < kBiasCosFloor) throw DegenerateBiasError("bias too close to pi/2");
    const double sc = std::sin(phi_ex_eff);
    const double d = 1.0 + beta * cc;
    ChargeFluxSeries s;
    s.epsilon = 3.0 * beta * sc * sc / (cc * d);
    s.c1 = cc / d;
    s.c3 = -cc * (1.0 + s.epsilon) / (d * d * d * d);
    return s;
}

ChargeFluxSeries charge_flux_expansion(const CircuitParams& c, const BiasState& b) {
    return charge_flux_expansion(c.beta(), b.phi_ex_eff);
}

}  // namespace fpjpa
