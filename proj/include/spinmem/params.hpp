#pragma once

#include <cmath>
#include <stdexcept>

#include "spinmem/units.hpp"

// Physical and protocol parameters with reference defaults. Immutable value
// objects; constructed once per run from configuration.

namespace spinmem {

struct PhysicalParams {
  // spin ensemble
  double g_ens = rad_from_hz(3.5e6);       // collective coupling, rad/s
  double line_width = rad_from_hz(2.0e6);  // w, FWHM of each Lorentzian
  double delta_hfs = rad_from_hz(2.2e6);   // hyperfine splitting
  double gamma_perp = 1.0e4;               // 1/T2, T2 = 100 us
  double gamma_par = 0.0;                  // population decay (0 by default)
  double g_bar = rad_from_hz(12.5);        // single-spin coupling scale
  // cavity
  double omega_c = rad_from_hz(2.9e9);     // cavity/spin carrier frequency
  double q_max = 1.0e4;                    // high-Q (storage/parked)
  double q_pulse = 1.0e2;                  // low-Q (inversion pulses)
  double q_idle = 1.0e3;                   // multi-mode idle Q
  // protocol controls
  double delta_target = rad_from_hz(100e6);  // storage/delivery detuning
  double delta_parked = rad_from_hz(50e6);   // parked detuning
  double chirp_rate = rad_from_hz(10e6) / 1e-9;  // |dDelta/dt|
  double t_kappa = 10e-9;                  // kappa ramp duration
  double t_pi = 1.0e-6;                    // inversion-pulse duration
  double t_res = 1.0e-6;                   // post-pulse resonant relaxation
  // inversion pulse shape
  double pulse_mu = 3.5;                   // sech exponent 1 + i*mu
  double sweep_half = rad_from_hz(7.5e6);  // mu * beta_sech
  double p_peak = 100e-6;                  // drive peak power, W

  double n_total() const {
    const double r = g_ens / g_bar;
    return r * r;  // ~7.84e10 spins
  }
  double kappa_min() const { return omega_c / (2.0 * q_max); }
  double kappa_pulse() const { return omega_c / (2.0 * q_pulse); }
  double kappa_idle() const { return omega_c / (2.0 * q_idle); }
  double beta_sech() const { return sweep_half / pulse_mu; }
  double t_chirp_target() const { return delta_target / chirp_rate; }
  double t_chirp_parked() const { return delta_parked / chirp_rate; }
  // characteristic width of the hyperfine-split line
  double gamma_line() const {
    const double a = gamma_perp + line_width / 2.0;
    const double d2 = delta_hfs * delta_hfs;
    return a * (a * a + d2) / (a * a + d2 / 3.0);
  }
  double t2_star() const { return 2.0 / line_width; }
  double cooperativity() const {
    return g_ens * g_ens / (kappa_pulse() * gamma_line());
  }

  void validate() const {
    if (g_ens <= 0 || line_width <= 0 || omega_c <= 0)
      throw std::invalid_argument("physical parameters must be positive");
    if (q_max <= 0 || q_pulse <= 0 || q_idle <= 0)
      throw std::invalid_argument("Q factors must be positive");
    if (gamma_perp < 0 || gamma_par < 0)
      throw std::invalid_argument("decay rates must be non-negative");
    if (pulse_mu <= 0 || sweep_half <= 0 || p_peak <= 0)
      throw std::invalid_argument("pulse parameters must be positive");
  }
};

}  // namespace spinmem
