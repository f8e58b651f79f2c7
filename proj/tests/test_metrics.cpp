#include "doctest.h"

#include "fpjpa/errors.hpp"
#include "fpjpa/metrics.hpp"
#include "support.hpp"

using namespace fpjpa;
using fpjpa::test::rel_err;

TEST_CASE("Lorentzian full width at half maximum") {
    const double w = 0.8;
    const auto x = GridSpec{-10.0, 10.0, 200001}.points();
    std::vector<double> g;
    for (double d : x) g.push_back(1.0 + 99.0 / (1.0 + 4.0 * (d - 0.3) * (d - 0.3) / (w * w)));
    const Bandwidth b = bandwidth_3db(x, g);
    // half maximum of 1 + 99 L sits where L = 49/99
    const double expected = w * std::sqrt(99.0 / 49.0 - 1.0);
    CHECK(b.full_width == doctest::Approx(expected).epsilon(1e-6));
    CHECK(b.half_width == doctest::Approx(expected / 2.0).epsilon(1e-6));
    CHECK(b.peak_position == doctest::Approx(0.3).epsilon(1e-9));
    CHECK_FALSE(b.multi_lobe);
}

TEST_CASE("single-pole amplifier at 20 dB") {
    JpaParams j;
    j.kappa = 1.0;
    j.kappa0 = 0.0;
    const FabryPerotParams fp{1.0, 1.0, 1.0, 0.0, 0.0};
    const double g = 100.0;
    const DriveParams dr{single_pole_pump(1.0, 0.0, g)};
    CHECK(std::norm(gain_spectrum(0.0, j, fp, dr)) == doctest::Approx(g).epsilon(1e-12));
    const auto x = GridSpec{-1.0, 1.0, 40001}.points();
    std::vector<double> gl;
    for (double d : x) gl.push_back(std::norm(gain_spectrum(d, j, fp, dr)));
    const Bandwidth b = bandwidth_3db(x, gl);
    // half-maximum crossing of the closed form, found by bisection
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::norm(gain_spectrum(mid, j, fp, dr)) > g / 2.0 ? lo : hi) = mid;
    }
    CHECK(rel_err(b.half_width, lo) < 1e-6);
    // Lorentzian estimate kappa_tot / (2 sqrt G) is good to a few percent at 20 dB
    CHECK(rel_err(b.half_width, 1.0 / (2.0 * std::sqrt(g))) < 0.05);
    CHECK(std::abs(gb_exponent(b.half_width, b.peak_value, 1.0) - 0.5) < 0.01);
}

TEST_CASE("bandwidth failures") {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    CHECK_THROWS_AS(bandwidth_3db(x, {1.0, 1.0, 1.0, 1.0}), BandwidthError);
    CHECK_THROWS_AS(bandwidth_3db(x, {5.0, 1.0, 1.0, 1.0}), BandwidthError);
    CHECK_THROWS_AS(bandwidth_3db(x, {3.0, 4.0, 3.0, 1.0}), BandwidthError);
    CHECK_THROWS_AS(bandwidth_3db(x, {1.0, 2.0}), ValidationError);
}

TEST_CASE("second lobe above half maximum is flagged") {
    const auto x = GridSpec{-10.0, 10.0, 2001}.points();
    std::vector<double> g;
    for (double d : x) g.push_back(1.0 + 10.0 / (1.0 + d * d) + 8.0 / (1.0 + (d - 6.0) * (d - 6.0)));
    CHECK(bandwidth_3db(x, g).multi_lobe);
}

TEST_CASE("gain-bandwidth exponent") {
    CHECK(gb_exponent(0.5 / 10.0, 100.0, 1.0) == doctest::Approx(0.5));
    CHECK(gb_exponent(0.5 / std::pow(100.0, 0.25), 100.0, 1.0) == doctest::Approx(0.25));
    CHECK_THROWS_AS(gb_exponent(0.1, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(gb_exponent(0.0, 10.0, 1.0), DomainError);
}

TEST_CASE("visibility") {
    CHECK(ripple_visibility({1.0, 2.0, 3.0}, 3.0) == 0.0);
    CHECK(ripple_visibility({1.0, 4.0, 2.0}, 2.0) == doctest::Approx(1.0 / 3.0));
    // 1 dB ripple
    CHECK(ripple_visibility({from_db(21.0)}, from_db(20.0)) == doctest::Approx(0.1146).epsilon(1e-3));
}

TEST_CASE("visibility vanishes without a mirror") {
    JpaParams j;
    j.kappa = 1.0;
    const FabryPerotParams fp{1.0, 0.9, 3.0, 0.0, 0.0};
    const DriveParams dr{single_pole_pump(1.0, 0.0, 300.0)};
    CHECK(ripple_visibility(j, fp, dr) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pump for a requested peak gain") {
    JpaParams j;
    j.kappa = 1.0;
    j.kappa0 = 0.05;
    const FabryPerotParams fp{0.99, 0.9, 4.0, 0.4, 0.0};
    const auto x = GridSpec{-3.0, 3.0, 3001}.points();
    const double om = pump_for_peak_gain(20.0, j, fp, x);
    double mx = 0.0;
    for (double d : x) mx = std::max(mx, normalized_spectrum(d, j, fp, DriveParams{om}).g_tilde);
    CHECK(to_db(mx) == doctest::Approx(20.0).epsilon(1e-8));
}

TEST_CASE("single-pole pump inverts the on-resonance gain") {
    for (double g : {10.0, 100.0, 1e4}) {
        JpaParams j;
        j.kappa = 1.0;
        j.kappa0 = 0.1;
        const DriveParams dr{single_pole_pump(1.0, 0.1, g)};
        CHECK(std::norm(gain_spectrum(0.0, j, FabryPerotParams{}, dr)) == doctest::Approx(g).epsilon(1e-10));
    }
    CHECK_THROWS_AS(single_pole_pump(1.0, 0.0, 0.5), DomainError);
}

TEST_CASE("visibility map basics") {
    VisibilityBaseline base;
    const VisibilityMap m = visibility_map({0.001, 0.0025}, {7.0, 9.0}, base, {}, 2);
    REQUIRE(m.values.size() == 2);
    REQUIRE(m.values[0].size() == 2);
    CHECK(m.b_eff > 0.0);
    // ripples shrink as the free spectral range grows and grow with the mirror transmittance loss
    CHECK(m.values[0][1] < m.values[0][0]);
    CHECK(m.values[1][0] > m.values[0][0]);
    const VisibilityMap serial = visibility_map({0.001, 0.0025}, {7.0, 9.0}, base, {}, 1);
    CHECK(serial.values == m.values);
}

TEST_CASE("cells pushed above threshold are marked NaN") {
    const VisibilityMap m = visibility_map({0.01}, {2.0}, VisibilityBaseline{}, {}, 1);
    CHECK(std::isnan(m.values[0][0]));
}

TEST_CASE("saturation and power helpers") {
    CHECK(std::isinf(saturation_input_flux(1.0, 100.0, 0.0)));
    CHECK(saturation_input_flux(2.0, 100.0, -0.01) == doctest::Approx(4.0));
    CHECK(saturation_input_flux(2.0, 400.0, -0.01) == doctest::Approx(1.0));
    CHECK(power_dbm(1e-3) == doctest::Approx(0.0));
    CHECK(power_dbm(1e-15) == doctest::Approx(-120.0));
}
