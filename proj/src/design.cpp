#include "fpjpa/design.hpp"

#include <cmath>

#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"

namespace fpjpa {

void validate(const DesignTargets& t) {
    if (!(t.omega_a_target > 0.0)) throw ValidationError("omega_a target must be positive");
    if (!(t.kappabar_target > 0.0)) throw ValidationError("kappabar target must be positive");
    if (!(t.p_j_target > 0.0 && t.p_j_target < 1.0)) throw ValidationError("p_J target must lie in (0, 1)");
    if (t.n_squids < 1) throw ValidationError("n_squids must be >= 1");
    if (!(t.l_loop_fixed >= 0.0)) throw ValidationError("l_loop must be non-negative");
    if (!(t.l_geometric_fixed >= 0.0)) throw ValidationError("l_geometric must be non-negative");
    if (!(t.z_waveguide > 0.0)) throw ValidationError("z_waveguide must be positive");
    if (std::abs(std::cos(t.bias_phi_eff)) < kBiasCosFloor)
        throw DegenerateBiasError("bias too close to pi/2");
    if (t.p_sq_target && !(*t.p_sq_target > 0.0 && *t.p_sq_target <= 1.0))
        throw ValidationError("p_SQ target must lie in (0, 1]");
}

DesignResult synthesize(const DesignTargets& t) {
    validate(t);
    const double n = t.n_squids;
    const double pj = t.p_j_target;
    const double quarter = 0.25 * t.l_loop_fixed;

    double l_eff, l_g;
    if (t.p_sq_target) {
        const double psq = *t.p_sq_target;
        if (pj > psq * (1.0 + 1e-12))
            throw DesignError("infeasible targets: p_J exceeds p_SQ");
        if (psq == 1.0) {
            if (quarter > 0.0) throw DesignError("p_SQ = 1 requires zero loop inductance");
            throw DesignError("p_SQ = 1 leaves L_J^eff undetermined");
        }
        l_eff = psq * quarter / (1.0 - psq);
        l_g = std::max(0.0, n * l_eff / pj - n * (quarter + l_eff));
        if (pj >= psq) l_g = 0.0;
    } else {
        l_g = t.l_geometric_fixed;
        l_eff = pj * (n * quarter + l_g) / (n * (1.0 - pj));
        if (!(l_eff > 0.0)) throw DesignError("p_J target leaves no Josephson inductance");
    }

    const double l_tot = n * (quarter + l_eff) + l_g;
    const double c_tot = 1.0 / (t.omega_a_target * t.omega_a_target * l_tot);
    const double alpha_a = std::sqrt(l_tot / c_tot) / kZq;
    const double alpha0 = t.z_waveguide / kZq;
    const double p_kappa = std::sqrt(t.kappabar_target * alpha_a / alpha0);
    if (!(p_kappa < 1.0)) throw DesignError("infeasible targets: p_kappa >= 1");

    DesignResult r;
    CircuitParams& c = r.circuit;
    c.n_squids = t.n_squids;
    c.l_loop = t.l_loop_fixed;
    c.l_geometric = l_g;
    c.l_josephson = 2.0 * std::abs(std::cos(t.bias_phi_eff)) * l_eff;
    c.c_coupling = p_kappa * c_tot;
    c.c_internal = c_tot - c.c_coupling;
    c.z_waveguide = t.z_waveguide;
    c.mutual = t.mutual;
    c.l_pump_shunt = t.l_pump_shunt;
    if (c.beta() > 1.0) throw DesignError("infeasible targets: L_loop/2 exceeds L_J");

    const double phi_c = applied_flux_for_effective(t.bias_phi_eff, c.beta());
    r.bias = bias_from_flux(c, phi_c);
    r.jpa = hamiltonian_params(c, r.bias);
    return r;
}

}  // namespace fpjpa
