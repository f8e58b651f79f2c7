#include "fpjpa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fpjpa/errors.hpp"
#include "fpjpa/parallel.hpp"

namespace fpjpa {

Bandwidth bandwidth_3db(const std::vector<double>& x, const std::vector<double>& g) {
    if (x.size() != g.size()) throw ValidationError("detuning and gain sizes differ");
    check_detunings(x);
    const std::size_t n = g.size();
    const auto [mn, mx] = std::minmax_element(g.begin(), g.end());
    if (!(*mx > *mn)) throw BandwidthError("flat spectrum has no unique peak");
    const std::size_t ip = std::size_t(mx - g.begin());
    if (ip == 0 || ip + 1 == n) throw BandwidthError("peak at grid boundary");
    const double half = 0.5 * (*mx);

    std::size_t il = ip, ir = ip;
    while (il > 0 && g[il - 1] >= half) --il;
    while (ir + 1 < n && g[ir + 1] >= half) ++ir;
    if (il == 0 || ir + 1 == n) throw BandwidthError("half-maximum region reaches grid boundary");

    auto cross = [&](std::size_t lo, std::size_t hi) {
        const double t = (half - g[lo]) / (g[hi] - g[lo]);
        return x[lo] + t * (x[hi] - x[lo]);
    };
    Bandwidth b;
    b.lower = cross(il - 1, il);
    b.upper = cross(ir + 1, ir);
    b.full_width = b.upper - b.lower;
    b.half_width = 0.5 * b.full_width;
    b.peak_position = x[ip];
    b.peak_value = *mx;
    for (std::size_t j = 0; j < n && !b.multi_lobe; ++j)
        if ((j < il || j > ir) && g[j] >= half) b.multi_lobe = true;
    return b;
}

Bandwidth bandwidth_3db(const Spectrum& spec) {
    if (spec.is_complex()) throw ValidationError("bandwidth needs a gain spectrum");
    if (spec.kind == SpectrumKind::net_gain_dB) {
        std::vector<double> lin(spec.powers.size());
        std::transform(spec.powers.begin(), spec.powers.end(), lin.begin(), from_db);
        return bandwidth_3db(spec.detunings, lin);
    }
    return bandwidth_3db(spec.detunings, spec.powers);
}

double gb_exponent(double bandwidth, double gain, double kappa_tot) {
    if (!(gain > 1.0)) throw DomainError("gain must exceed 1");
    if (!(bandwidth > 0.0)) throw DomainError("bandwidth must be positive");
    return std::log(kappa_tot / (2.0 * bandwidth)) / std::log(gain);
}

double ripple_visibility(const std::vector<double>& gain, double center_gain) {
    const double mx = std::max(*std::max_element(gain.begin(), gain.end()), center_gain);
    return (mx - center_gain) / (mx + center_gain);
}

double ripple_visibility(const JpaParams& jpa, const FabryPerotParams& fp, const DriveParams& drive,
                         const VisibilityGrid& grid) {
    const double half = std::max(grid.span_fsr * fp.fsr, grid.min_half_span);
    const GridSpec gs{-half, half, std::size_t(grid.n)};
    std::vector<double> g;
    g.reserve(grid.n);
    for (double d : gs.points()) g.push_back(std::norm(gain_spectrum(d, jpa, fp, drive)));
    return ripple_visibility(g, std::norm(gain_spectrum(0.0, jpa, fp, drive)));
}

double pump_for_peak_gain(double target_db, const JpaParams& jpa, const FabryPerotParams& fp,
                          const std::vector<double>& detunings) {
    auto peak = [&](double om) {
        double m = 0.0;
        const std::optional<DriveParams> dr = DriveParams{om};
        for (double d : detunings) m = std::max(m, normalized_spectrum(d, jpa, fp, dr).g_tilde);
        return to_db(m);
    };
    double lo = 0.0;
    double hi = parametric_threshold(jpa, fp) * (1.0 - 1e-9);
    if (peak(lo) >= target_db) return 0.0;
    double phi;
    try {
        phi = peak(hi);
    } catch (const ThresholdError&) {
        phi = INFINITY;
    }
    if (phi < target_db) throw NumericalError("target gain not reachable below threshold");
    for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        double v;
        try {
            v = peak(mid);
        } catch (const ThresholdError&) {
            v = INFINITY;
        }
        if (v < target_db) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double single_pole_pump(double kappa, double kappa0, double g) {
    const double kt = kappa + kappa0;
    const double om2 = kt * kt - 2.0 * kappa * kt / (1.0 + std::sqrt(g));
    if (!(om2 >= 0.0)) throw DomainError("requested gain below the unpumped reflectance");
    return std::sqrt(om2);
}

VisibilityMap visibility_map(const std::vector<double>& one_minus_eta,
                             const std::vector<double>& fsr_over_beff,
                             const VisibilityBaseline& base, const VisibilityGrid& grid, int jobs) {
    for (double x : one_minus_eta)
        if (!(x >= 0.0 && x < 1.0)) throw ValidationError("1 - eta must lie in [0, 1)");
    for (double r : fsr_over_beff)
        if (!(r > 0.0)) throw ValidationError("fsr / B_eff must be positive");

    VisibilityMap map;
    map.one_minus_eta = one_minus_eta;
    map.fsr_over_beff = fsr_over_beff;
    const double kt = base.kappa + base.kappa0;
    const double g = from_db(base.baseline_gain_db);
    map.omega_pump_amp = single_pole_pump(base.kappa, base.kappa0, g);

    JpaParams jpa;
    jpa.kappa = base.kappa;
    jpa.kappa0 = base.kappa0;
    const DriveParams drive{map.omega_pump_amp};
    {
        FabryPerotParams flat{1.0, base.eta0, 1.0, base.phi0, 0.0};
        const double span = 10.0 * kt / std::sqrt(g);
        std::vector<double> d = GridSpec{-span, span, 20001}.points(), gl(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) gl[i] = std::norm(gain_spectrum(d[i], jpa, flat, drive));
        map.b_eff = bandwidth_3db(d, gl).full_width;
    }

    map.values.assign(one_minus_eta.size(), std::vector<double>(fsr_over_beff.size(), 0.0));
    const std::size_t ncol = fsr_over_beff.size();
    parallel_for(one_minus_eta.size() * ncol, jobs, [&](std::size_t idx) {
        const std::size_t i = idx / ncol, j = idx % ncol;
        const double fsr = fsr_over_beff[j] * map.b_eff;
        FabryPerotParams fp{1.0 - one_minus_eta[i], base.eta0, fsr, base.phi0, 0.0};
        VisibilityGrid vg = grid;
        vg.min_half_span = std::max(grid.min_half_span, fsr + 4.0 * map.b_eff);
        double v;
        try {
            v = ripple_visibility(jpa, fp, drive, vg);
        } catch (const ThresholdError&) {
            v = std::numeric_limits<double>::quiet_NaN();
        }
        map.values[i][j] = v;
    });
    return map;
}

double saturation_input_flux(double kappa, double gain, double kerr, double prefactor) {
    if (!(gain > 1.0)) throw DomainError("gain must exceed 1");
    if (kerr == 0.0) return std::numeric_limits<double>::infinity();
    return prefactor * kappa * kappa / (gain * std::abs(kerr));
}

double power_dbm(double watts) { return 10.0 * std::log10(watts / 1e-3); }

}  // namespace fpjpa
