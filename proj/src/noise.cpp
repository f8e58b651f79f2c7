#include "fpjpa/noise.hpp"

#include <cmath>

#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"

namespace fpjpa {

namespace {
constexpr cplx kI{0.0, 1.0};
}

double IOCoefficients::unitarity_defect() const {
    return std::norm(c) + std::norm(u) + std::norm(v) + std::norm(d) - std::norm(c_prime) -
           std::norm(u_prime) - std::norm(v_prime) - std::norm(d_prime) - 1.0;
}

IOCoefficients io_coefficients(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                               const DriveParams& drive) {
    const double k = jpa.kappa;
    const double eta = fp.eta, eta0 = fp.eta0;
    const double t = std::sqrt(eta);
    const cplx rs = round_trip_coeff(delta, fp, Branch::signal);
    const cplx ri_c = std::conj(round_trip_coeff(delta, fp, Branch::idler));
    const cplx chi_s = response_inverse(delta, jpa, fp, Branch::signal);
    const cplx chi_i = std::conj(response_inverse(delta, jpa, fp, Branch::idler));
    const double om = drive.omega_pump_amp;
    const cplx dn = chi_s * chi_i - om * om / 4.0;
    if (std::abs(dn) < kThresholdFloor || om * om / 4.0 >= std::abs(chi_s * chi_i))
        throw ThresholdError("pump at or above parametric threshold");

    const cplx one_rs = 1.0 - rs;
    const cplx loss = std::sqrt(eta0 * (1.0 - eta0));
    const cplx intr = std::sqrt(eta0 * k * jpa.kappa0);
    const cplx resp = k * chi_i / (one_rs * dn);

    IOCoefficients r;
    r.c = -std::conj(rs) / eta0 + eta * eta0 / one_rs + eta * eta0 * k * chi_i / (one_rs * one_rs * dn);
    r.u = t * loss / one_rs * (1.0 + resp);
    r.v = t * std::sqrt(1.0 - eta0) / one_rs * (1.0 + resp * rs);
    r.d = t * intr * chi_i / (one_rs * dn);

    const cplx den = one_rs * (1.0 - ri_c) * dn;
    const cplx pump = kI * om / 2.0;
    r.c_prime = pump * k * eta * eta0 / den;
    r.u_prime = pump * k * t * loss / den;
    r.v_prime = pump * k * t * std::sqrt(1.0 - eta0) * ri_c / den;
    r.d_prime = pump * t * intr / (one_rs * dn);
    return r;
}

double added_noise_photons(double eta_eff) {
    if (!(eta_eff > 0.0)) throw NumericalError("degenerate decomposition: eta_eff = 0");
    return (2.0 - eta_eff) / (2.0 * eta_eff);
}

EffectiveAmp effective_amplifier(const IOCoefficients& k, double high_gain_floor) {
    EffectiveAmp a;
    a.g_eff = std::norm(k.c) + std::norm(k.u) + std::norm(k.v) + std::norm(k.d);
    if (!(a.g_eff > 0.0)) throw NumericalError("degenerate decomposition: zero effective gain");
    a.eta_eff = std::norm(k.c) / a.g_eff;
    a.g_fpj = a.g_eff * a.eta_eff;
    a.n_fpj = added_noise_photons(a.eta_eff);
    a.approximate = a.g_eff < high_gain_floor;
    return a;
}

void validate(const CalibrationInputs& c) {
    for (double p : {c.p_on_s, c.p_on_n, c.p_off_s, c.p_off_n, c.p_calib_s, c.p_vac_n})
        if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("powers must be non-negative");
    if (!(c.s11_off_sq >= 0.0 && c.s11_off_sq <= 1.0))
        throw ValidationError("s11_off_sq must lie in [0, 1]");
    if (!(c.eta0 > 0.0 && c.eta0 <= 1.0)) throw ValidationError("eta0 must lie in (0, 1]");
    if (!(c.omega_s > 0.0) || !(c.b_if > 0.0))
        throw ValidationError("omega_s and b_if must be positive");
}

AddedNoise added_noise_from_snr(const CalibrationInputs& c) {
    validate(c);
    if (!(c.p_on_s > 0.0)) throw DomainError("pump-on signal power must be positive");
    AddedNoise out;
    const double snr_term = c.p_calib_s / c.eta0 * (c.p_on_n / c.p_on_s - c.p_off_n / c.p_on_s);
    double vac_term = 0.0;
    if (c.p_vac_n > 0.0) {
        if (!(c.s11_off_sq > 0.0)) throw DomainError("s11_off_sq must be positive");
        vac_term = c.p_vac_n * (1.0 - c.p_off_s / (c.eta0 * c.eta0 * c.s11_off_sq * c.p_on_s));
    }
    out.p_fpj_n = snr_term - vac_term;
    out.n_fpj = out.p_fpj_n / (kHbar * c.omega_s * c.b_if);
    return out;
}

double noise_power_from_photons(double photons, double omega_s, double b_if) {
    return photons * kHbar * omega_s * b_if;
}

double s11_off_sq_from_rates(double kappa, double kappa0) {
    const double r = (kappa - kappa0) / (kappa + kappa0);
    return r * r;
}

CalibrationInputs calibration_forward(const ChainModel& chain, double p_calib_s, double eta0,
                                      double s11_off_sq, double omega_s, double b_if,
                                      double vacuum_photons) {
    CalibrationInputs c;
    c.p_calib_s = p_calib_s;
    c.eta0 = eta0;
    c.s11_off_sq = s11_off_sq;
    c.omega_s = omega_s;
    c.b_if = b_if;
    c.p_vac_n = noise_power_from_photons(vacuum_photons, omega_s, b_if);
    c.p_off_s = chain.g_h * s11_off_sq * eta0 * p_calib_s;
    c.p_off_n = chain.g_h * (c.p_vac_n + chain.p_h_n);
    c.p_on_s = chain.g_h * chain.g_fpj * p_calib_s / eta0;
    c.p_on_n = chain.g_h * (chain.g_fpj * (c.p_vac_n + chain.p_fpj_n) + chain.p_h_n);
    return c;
}

cplx qubit_reflection(double omega, double omega_q, double drive_rate, double gamma_r,
                      double gamma_nr, double gamma_p) {
    if (!(gamma_r > 0.0)) throw DomainError("gamma_r must be positive");
    const double g1 = gamma_r + gamma_nr;
    const double g2 = 0.5 * g1 + gamma_p;
    const double dw = omega - omega_q;
    const cplx num = kI * gamma_r * g1 * (dw - kI * g2);
    const double den = drive_rate * drive_rate * g2 + g1 * (dw * dw + g2 * g2);
    return 1.0 - num / den;
}

double probe_power_from_drive(double omega_q, double drive_rate, double gamma_r) {
    if (!(gamma_r > 0.0)) throw DomainError("gamma_r must be positive");
    return kHbar * omega_q * drive_rate * drive_rate / (4.0 * gamma_r);
}

}  // namespace fpjpa
