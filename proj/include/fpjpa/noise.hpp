#pragma once

#include "fpjpa/interference.hpp"

namespace fpjpa {

// Output-field coefficients of c, u, v, d at the signal (plain) and idler (primed) frequency.
struct IOCoefficients {
    cplx c, c_prime, u, u_prime, v, v_prime, d, d_prime;

    double unitarity_defect() const;
};

IOCoefficients io_coefficients(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                               const DriveParams& drive);

inline constexpr double kHighGainFloor = 100.0;

struct EffectiveAmp {
    double g_eff = 0.0;
    double eta_eff = 0.0;
    double g_fpj = 0.0;
    double n_fpj = 0.0;
    bool approximate = false;  // g_eff below the high-gain floor
};

EffectiveAmp effective_amplifier(const IOCoefficients& k, double high_gain_floor = kHighGainFloor);

double added_noise_photons(double eta_eff);

struct CalibrationInputs {
    double p_on_s = 0.0;      // W
    double p_on_n = 0.0;      // W
    double p_off_s = 0.0;     // W
    double p_off_n = 0.0;     // W
    double p_calib_s = 0.0;   // W
    double eta0 = 1.0;
    double s11_off_sq = 1.0;
    double p_vac_n = 0.0;     // W
    double omega_s = 0.0;     // rad/s
    double b_if = 0.0;        // Hz
};

void validate(const CalibrationInputs& c);

struct AddedNoise {
    double p_fpj_n = 0.0;  // W
    double n_fpj = 0.0;    // photons
};

AddedNoise added_noise_from_snr(const CalibrationInputs& c);

inline constexpr double kVacuumPhotons = 0.5;

double noise_power_from_photons(double photons, double omega_s, double b_if);
double s11_off_sq_from_rates(double kappa, double kappa0);

// Measured powers predicted for a given amplifier and readout chain.
struct ChainModel {
    double g_h = 1.0;      // chain gain
    double p_h_n = 0.0;    // chain added noise, W
    double g_fpj = 1.0;
    double p_fpj_n = 0.0;  // W
};

CalibrationInputs calibration_forward(const ChainModel& chain, double p_calib_s, double eta0,
                                      double s11_off_sq, double omega_s, double b_if,
                                      double vacuum_photons = kVacuumPhotons);

cplx qubit_reflection(double omega, double omega_q, double drive_rate, double gamma_r,
                      double gamma_nr, double gamma_p);

double probe_power_from_drive(double omega_q, double drive_rate, double gamma_r);

}  // namespace fpjpa
