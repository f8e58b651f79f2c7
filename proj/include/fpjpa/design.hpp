#pragma once

#include <optional>

#include "fpjpa/circuit_model.hpp"

namespace fpjpa {

struct DesignTargets {
    double omega_a_target = 0.0;   // rad/s
    double kappabar_target = 0.0;
    double p_j_target = 0.0;
    int n_squids = 1;
    double l_loop_fixed = 0.0;     // H
    double l_geometric_fixed = 0.0;  // H, ignored when p_sq_target is set
    double bias_phi_eff = 0.0;
    double z_waveguide = 50.0;     // Ohm
    // When set, L_J^eff follows from p_SQ and L_g is solved for instead of fixed.
    std::optional<double> p_sq_target;
    double mutual = 0.0;           // passed through, H
    double l_pump_shunt = 0.0;     // passed through, H
};

void validate(const DesignTargets& t);

struct DesignResult {
    CircuitParams circuit;
    BiasState bias;
    JpaParams jpa;
};

DesignResult synthesize(const DesignTargets& t);

}  // namespace fpjpa
