#pragma once

#include <numbers>

namespace fpjpa {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHbar = 1.054571817e-34;       // J s
inline constexpr double kElectron = 1.602176634e-19;   // C
inline constexpr double kPhi0 = kHbar / (2.0 * kElectron);  // reduced flux quantum, Wb
inline constexpr double kZq = kPhi0 / (2.0 * kElectron);    // Ohm

inline constexpr double hz_to_rad(double f) { return 2.0 * kPi * f; }
inline constexpr double rad_to_hz(double w) { return w / (2.0 * kPi); }

}  // namespace fpjpa
