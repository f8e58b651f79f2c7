#pragma once

#include <cmath>
#include <complex>
#include <random>

#include "fpjpa/circuit_model.hpp"
#include "fpjpa/interference.hpp"

namespace fpjpa::test {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }
inline double rel_err(std::complex<double> a, std::complex<double> b) { return std::abs(a - b) / std::abs(b); }

struct Draw {
    JpaParams jpa;
    FabryPerotParams fp;
    DriveParams drive;
    double delta = 0.0;
};

// Random below-threshold configuration in units of kappa.
inline Draw random_draw(std::mt19937_64& rng, double pump_fraction_max = 0.95) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Draw d;
    d.jpa.kappa = 1.0;
    d.jpa.kappa0 = 0.3 * u(rng);
    d.fp.eta = 0.2 + 0.8 * u(rng);
    d.fp.eta0 = 0.5 + 0.5 * u(rng);
    d.fp.fsr = 0.1 + 10.0 * u(rng);
    d.fp.phi0 = 2.0 * M_PI * u(rng) - M_PI;
    d.fp.phi_ref = 2.0 * M_PI * u(rng) - M_PI;
    d.delta = (2.0 * u(rng) - 1.0) * 3.0;
    d.drive.omega_pump_amp = pump_fraction_max * u(rng) * parametric_threshold(d.jpa, d.fp, 4001);
    return d;
}

}  // namespace fpjpa::test
