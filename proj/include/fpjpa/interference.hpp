#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "fpjpa/circuit_model.hpp"

namespace fpjpa {

using cplx = std::complex<double>;

struct FabryPerotParams {
    double eta = 1.0;      // mirror power transmittance
    double eta0 = 1.0;     // one-way propagation transmittance
    double fsr = 1.0;      // free spectral range, rad/s
    double phi0 = 0.0;     // round-trip phase at omega_a, rad
    double phi_ref = 0.0;  // reference phase, rad
};

void validate(const FabryPerotParams& fp);

enum class Branch { signal, idler };

// Pump frequency is fixed to twice omega_a.
struct DriveParams {
    double omega_pump_amp = 0.0;  // rad/s
};

inline constexpr double kThresholdFloor = 1e-18;
inline constexpr double kReferenceFloor = 1e-12;

double wrap_phase(double phi);

cplx round_trip_coeff(double delta, const FabryPerotParams& fp, Branch b);
cplx response_inverse(double delta, const JpaParams& jpa, const FabryPerotParams& fp, Branch b);

cplx reflection_spectrum(double delta, const JpaParams& jpa, const FabryPerotParams& fp);
cplx gain_spectrum(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                   const DriveParams& drive);
cplx reference_spectrum(double delta, const FabryPerotParams& fp);

struct NormalizedPoint {
    cplx s_tilde;
    double g_tilde = 0.0;
    double g_net = 0.0;
};

NormalizedPoint normalized_spectrum(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                                    const std::optional<DriveParams>& drive = std::nullopt);

// 2 sqrt(min_delta |chi_s^-1 chi_i^-1*|) over a dense grid.
double parametric_threshold(const JpaParams& jpa, const FabryPerotParams& fp, int n_grid = 20001);

enum class SpectrumKind { complex_s11, normalized_s11, net_gain_linear, net_gain_dB };

struct Spectrum {
    std::vector<double> detunings;  // rad/s, strictly increasing
    std::vector<cplx> values;       // complex kinds
    std::vector<double> powers;     // gain kinds
    SpectrumKind kind = SpectrumKind::complex_s11;

    bool is_complex() const {
        return kind == SpectrumKind::complex_s11 || kind == SpectrumKind::normalized_s11;
    }
    std::size_t size() const { return detunings.size(); }
};

struct GridSpec {
    double start = 0.0;
    double stop = 0.0;
    std::size_t n = 2;
    std::vector<double> points() const;
};

void check_detunings(const std::vector<double>& d);

Spectrum sweep(const std::vector<double>& detunings, const JpaParams& jpa,
               const FabryPerotParams& fp, const std::optional<DriveParams>& drive,
               SpectrumKind kind, int jobs = 1);
Spectrum sweep(const GridSpec& grid, const JpaParams& jpa, const FabryPerotParams& fp,
               const std::optional<DriveParams>& drive, SpectrumKind kind, int jobs = 1);

inline double to_db(double g) { return 10.0 * std::log10(g); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace fpjpa
