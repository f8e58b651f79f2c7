#pragma once

#include <vector>

#include "fpjpa/interference.hpp"

namespace fpjpa {

struct Bandwidth {
    double full_width = 0.0;  // FWHM
    double half_width = 0.0;  // FWHM / 2
    double lower = 0.0;
    double upper = 0.0;
    double peak_position = 0.0;
    double peak_value = 0.0;
    bool multi_lobe = false;
};

// Contiguous region around the global maximum where gain >= max / 2 (linear gain).
Bandwidth bandwidth_3db(const std::vector<double>& detunings, const std::vector<double>& gain);
Bandwidth bandwidth_3db(const Spectrum& spec);

// alpha in B * G^alpha = kappa_tot / 2; pass the half width for B.
double gb_exponent(double bandwidth, double gain, double kappa_tot);

struct VisibilityGrid {
    int n = 2001;
    double span_fsr = 2.0;   // half span in units of fsr
    double min_half_span = 0.0;  // rad/s
};

double ripple_visibility(const std::vector<double>& gain, double center_gain);
double ripple_visibility(const JpaParams& jpa, const FabryPerotParams& fp, const DriveParams& drive,
                         const VisibilityGrid& grid = {});

// Pump amplitude giving a requested peak of |S~11|^2 on a detuning grid (bisection below threshold).
double pump_for_peak_gain(double target_db, const JpaParams& jpa, const FabryPerotParams& fp,
                          const std::vector<double>& detunings);

struct VisibilityBaseline {
    double kappa = 1.0;
    double kappa0 = 10.0 / 280.0;
    double eta0 = 0.9;
    double phi0 = 0.0;
    double baseline_gain_db = 25.0;  // on-chip peak gain at eta = 1
};

struct VisibilityMap {
    std::vector<double> one_minus_eta;
    std::vector<double> fsr_over_beff;
    std::vector<std::vector<double>> values;  // [eta index][fsr index]
    double b_eff = 0.0;                        // FWHM at eta = 1, rad/s
    double omega_pump_amp = 0.0;
};

// Closed-form pump for a single-pole JPA with on-chip peak gain g (linear).
double single_pole_pump(double kappa, double kappa0, double g);

VisibilityMap visibility_map(const std::vector<double>& one_minus_eta,
                             const std::vector<double>& fsr_over_beff,
                             const VisibilityBaseline& base, const VisibilityGrid& grid = {},
                             int jobs = 1);

// Input photon flux at saturation, up to a calibration prefactor; +inf when kerr == 0.
double saturation_input_flux(double kappa, double gain, double kerr, double prefactor = 1.0);

double power_dbm(double watts);

}  // namespace fpjpa
