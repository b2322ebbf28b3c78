#pragma once

// Physical constants (SI) and angular-frequency helpers. All internal
// frequencies are angular (rad/s); user-facing values are cycles (Hz).

namespace spinmem {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

inline constexpr double hbar_si = 1.054571817e-34;     // J s
inline constexpr double mu_bohr = 9.2740100783e-24;    // J/T
inline constexpr double mu0_si = 4.0 * pi * 1e-7;      // T m/A
inline constexpr double c_light = 299792458.0;         // m/s
inline constexpr double eta_vacuum = 376.7;            // Ohm (vacuum impedance)
inline constexpr double g_nv = 2.0;                    // NV electron g-factor

inline constexpr double rad_from_hz(double f_hz) { return two_pi * f_hz; }
inline constexpr double hz_from_rad(double w_rad) { return w_rad / two_pi; }

}  // namespace spinmem
