#pragma once

namespace fpjpa {

// Physical circuit values, SI units.
struct CircuitParams {
    int n_squids = 1;
    double l_loop = 0.0;        // H
    double l_josephson = 0.0;   // single-junction L_J, H
    double l_geometric = 0.0;   // H
    double c_internal = 0.0;    // F
    double c_coupling = 0.0;    // F
    double z_waveguide = 50.0;  // Ohm
    double mutual = 0.0;        // H
    double l_pump_shunt = 0.0;  // H

    double c_total() const { return c_internal + c_coupling; }
    // L_h / L_J with L_h = L_loop / 2.
    double beta() const { return 0.5 * l_loop / l_josephson; }
};

void validate(const CircuitParams& c);

struct BiasState {
    double phi_ex = 0.0;      // Phi_ex / (2 Phi0)
    double phi_ex_eff = 0.0;
    double circulating = 0.0; // L_loop Qdot_c / (2 Phi0)
    int branch = +1;
};

struct FixedPoint {
    double x = 0.0;
    double phi_ex_eff = 0.0;
    double residual = 0.0;
    int iterations = 0;
    int branch = +1;
};

inline constexpr double kBiasCosFloor = 1e-3;
inline constexpr double kFixedPointTol = 1e-12;

// Root of x = s*beta*sin(phi_c - x) on the branch s = sign(cos(phi_c - x)).
FixedPoint solve_circulating_flux(double phi_c, double beta, int max_iter = 200);

BiasState bias_from_flux(const CircuitParams& c, double phi_c);
// flux_per_ampere converts a dc bias current to Phi_ex / (2 Phi0).
BiasState bias_from_current(const CircuitParams& c, double current, double flux_per_ampere);
// Applied flux that produces a requested effective flux on its own branch.
double applied_flux_for_effective(double phi_ex_eff, double beta);

double effective_josephson_inductance(double l_j, double phi_ex_eff,
                                      double cos_floor = kBiasCosFloor);

struct JpaParams {
    double omega_a = 0.0;         // rad/s
    double kappa = 0.0;           // rad/s
    double kappa0 = 0.0;          // rad/s
    double kerr = 0.0;            // rad/s
    double omega_pump_amp = 0.0;  // rad/s

    double alpha_a = 0.0;
    double p_j = 0.0;
    double p_sq = 0.0;
    double p_kappa = 0.0;
    double kbar = 0.0;
    double omegabar_p = 0.0;
    double kappabar = 0.0;

    double l_j_eff = 0.0;  // H
    double l_tot = 0.0;    // H
    double c_tot = 0.0;    // F
    double alpha0 = 0.0;
};

JpaParams hamiltonian_params(const CircuitParams& c, const BiasState& b);

// Self-Kerr from the charging-energy form, rad/s.
double kerr_from_charging_energy(const CircuitParams& c, const BiasState& b);

double two_photon_drive_bar(double p_j, double p_sq, double phi_ex_eff, double phi_p);

struct PumpAmplitude {
    double phi_p = 0.0;
    double omega_pump_amp = 0.0;  // rad/s
    double omegabar_p = 0.0;
};

PumpAmplitude pump_amplitude(const CircuitParams& c, double pump_power, double omega_p,
                             const JpaParams& jpa, const BiasState& b);

// theta(phi) ~ c1*phi + c3*phi^3/6, theta = L_J Qdot / (2 Phi0).
struct ChargeFluxSeries {
    double c1 = 0.0;
    double c3 = 0.0;
    double epsilon = 0.0;
    double operator()(double phi) const { return c1 * phi + c3 * phi * phi * phi / 6.0; }
};

ChargeFluxSeries charge_flux_expansion(double beta, double phi_ex_eff);
ChargeFluxSeries charge_flux_expansion(const CircuitParams& c, const BiasState& b);

}  // namespace fpjpa
