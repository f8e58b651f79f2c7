#include "fpjpa/interference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpjpa/constants.hpp"
#include "fpjpa/errors.hpp"
#include "fpjpa/parallel.hpp"

namespace fpjpa {

namespace {

constexpr cplx kI{0.0, 1.0};

double chi_product_abs(double delta, const JpaParams& jpa, const FabryPerotParams& fp) {
    return std::abs(response_inverse(delta, jpa, fp, Branch::signal) *
                    std::conj(response_inverse(delta, jpa, fp, Branch::idler)));
}

}  // namespace

void validate(const FabryPerotParams& fp) {
    if (!(fp.eta > 0.0 && fp.eta <= 1.0)) throw ValidationError("eta must lie in (0, 1]");
    if (!(fp.eta0 > 0.0 && fp.eta0 <= 1.0)) throw ValidationError("eta0 must lie in (0, 1]");
    if (!(fp.fsr > 0.0) || !std::isfinite(fp.fsr)) throw ValidationError("fsr must be positive");
    if (!std::isfinite(fp.phi0) || !std::isfinite(fp.phi_ref))
        throw ValidationError("phases must be finite");
    if (!(fp.eta0 * std::sqrt(1.0 - fp.eta) < 1.0))
        throw ValidationError("round-trip coefficient must have modulus below 1");
}

double wrap_phase(double phi) {
    double w = std::remainder(phi, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

cplx round_trip_coeff(double delta, const FabryPerotParams& fp, Branch b) {
    const double s = (b == Branch::signal) ? 1.0 : -1.0;
    return fp.eta0 * std::sqrt(1.0 - fp.eta) *
           std::exp(kI * (s * 2.0 * kPi * delta / fp.fsr + fp.phi0));
}

cplx response_inverse(double delta, const JpaParams& jpa, const FabryPerotParams& fp, Branch b) {
    const double s = (b == Branch::signal) ? 1.0 : -1.0;
    const cplx r = round_trip_coeff(delta, fp, b);
    return s * kI * delta - 0.5 * (jpa.kappa + jpa.kappa0) - jpa.kappa * r / (1.0 - r);
}

cplx reflection_spectrum(double delta, const JpaParams& jpa, const FabryPerotParams& fp) {
    const cplx r = round_trip_coeff(delta, fp, Branch::signal);
    const cplx chi = response_inverse(delta, jpa, fp, Branch::signal);
    const double ee = fp.eta * fp.eta0;
    const cplx one_r = 1.0 - r;
    return -std::conj(r) / fp.eta0 + ee / one_r + ee * jpa.kappa / (one_r * one_r * chi);
}

cplx gain_spectrum(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                   const DriveParams& drive) {
    const cplx r = round_trip_coeff(delta, fp, Branch::signal);
    const cplx chi_s = response_inverse(delta, jpa, fp, Branch::signal);
    const cplx chi_i = std::conj(response_inverse(delta, jpa, fp, Branch::idler));
    const double om2 = drive.omega_pump_amp * drive.omega_pump_amp / 4.0;
    const cplx prod = chi_s * chi_i;
    const cplx den = prod - om2;
    if (std::abs(den) < kThresholdFloor || om2 >= std::abs(prod))
        throw ThresholdError("pump at or above parametric threshold");
    const double ee = fp.eta * fp.eta0;
    const cplx one_r = 1.0 - r;
    return -std::conj(r) / fp.eta0 + ee / one_r + ee * jpa.kappa * chi_i / (one_r * one_r * den);
}

cplx reference_spectrum(double delta, const FabryPerotParams& fp) {
    const cplx r = round_trip_coeff(delta, fp, Branch::signal);
    const cplx ph = std::exp(kI * fp.phi_ref);
    return -std::conj(r) / fp.eta0 + fp.eta * fp.eta0 * ph / (1.0 - r * ph);
}

NormalizedPoint normalized_spectrum(double delta, const JpaParams& jpa, const FabryPerotParams& fp,
                                    const std::optional<DriveParams>& drive) {
    const cplx s = drive ? gain_spectrum(delta, jpa, fp, *drive) : reflection_spectrum(delta, jpa, fp);
    const cplx ref = reference_spectrum(delta, fp);
    if (std::abs(ref) < kReferenceFloor)
        throw NormalizationError("reference spectrum magnitude below floor");
    NormalizedPoint p;
    p.s_tilde = s / ref;
    p.g_tilde = std::norm(p.s_tilde);
    p.g_net = fp.eta0 * fp.eta0 * p.g_tilde;
    return p;
}

double parametric_threshold(const JpaParams& jpa, const FabryPerotParams& fp, int n_grid) {
    const double kt = jpa.kappa + jpa.kappa0;
    const double half = std::max(2.0 * fp.fsr, 4.0 * kt);
    const double step = 2.0 * half / (n_grid - 1);
    double best = chi_product_abs(-half, jpa, fp);
    int ib = 0;
    for (int i = 1; i < n_grid; ++i) {
        double v = chi_product_abs(-half + i * step, jpa, fp);
        if (v < best) { best = v; ib = i; }
    }
    // golden-section refinement on the bracketing cell pair
    double a = -half + std::max(ib - 1, 0) * step;
    double b = -half + std::min(ib + 1, n_grid - 1) * step;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = chi_product_abs(c, jpa, fp), fd = chi_product_abs(d, jpa, fp);
    for (int it = 0; it < 80; ++it) {
        if (fc < fd) { b = d; d = c; fd = fc; c = b - g * (b - a); fc = chi_product_abs(c, jpa, fp); }
        else { a = c; c = d; fc = fd; d = a + g * (b - a); fd = chi_product_abs(d, jpa, fp); }
    }
    best = std::min({best, fc, fd});
    return 2.0 * std::sqrt(best);
}

std::vector<double> GridSpec::points() const {
    if (n < 2) throw ValidationError("grid needs at least 2 points");
    if (!(stop > start)) throw ValidationError("grid must be strictly increasing");
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i)
        d[i] = (i + 1 == n) ? stop : start + (stop - start) * double(i) / double(n - 1);
    return d;
}

void check_detunings(const std::vector<double>& d) {
    if (d.size() < 2) throw ValidationError("spectrum needs at least 2 points");
    for (std::size_t i = 1; i < d.size(); ++i)
        if (!(d[i] > d[i - 1])) throw ValidationError("detunings must be strictly increasing");
}

Spectrum sweep(const std::vector<double>& detunings, const JpaParams& jpa,
               const FabryPerotParams& fp, const std::optional<DriveParams>& drive,
               SpectrumKind kind, int jobs) {
    check_detunings(detunings);
    validate(fp);
    Spectrum sp;
    sp.kind = kind;
    sp.detunings = detunings;
    const std::size_t n = detunings.size();
    if (sp.is_complex()) sp.values.resize(n); else sp.powers.resize(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        const double d = detunings[i];
        switch (kind) {
            case SpectrumKind::complex_s11:
                sp.values[i] = drive ? gain_spectrum(d, jpa, fp, *drive) : reflection_spectrum(d, jpa, fp);
                break;
            case SpectrumKind::normalized_s11:
                sp.values[i] = normalized_spectrum(d, jpa, fp, drive).s_tilde;
                break;
            case SpectrumKind::net_gain_linear:
                sp.powers[i] = normalized_spectrum(d, jpa, fp, drive).g_net;
                break;
            case SpectrumKind::net_gain_dB:
                sp.powers[i] = to_db(normalized_spectrum(d, jpa, fp, drive).g_net);
                break;
        }
    });
    return sp;
}

Spectrum sweep(const GridSpec& grid, const JpaParams& jpa, const FabryPerotParams& fp,
               const std::optional<DriveParams>& drive, SpectrumKind kind, int jobs) {
    return sweep(grid.points(), jpa, fp, drive, kind, jobs);
}

}  // namespace fpjpa
