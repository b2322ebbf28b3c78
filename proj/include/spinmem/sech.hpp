#pragma once

#include <cmath>
#include <complex>

// Complex-hyperbolic-secant inversion pulse: the cavity field is forced to
// follow a_c(t) = a_max * sech(beta_s t)^(1 + i mu), a shape whose
// instantaneous frequency sweeps through the spin line and inverts every
// spin within the sweep band regardless of its exact detuning or coupling.

namespace spinmem {

struct SechPulse {
  double a_max = 0.0;     // peak intracavity amplitude (photon^1/2 units)
  double beta_s = 0.0;    // sech time constant (rad/s)
  double mu = 0.0;        // chirp parameter; sweep spans +-mu*beta_s
  double duration = 0.0;  // total gate time; envelope centered at 0
  int sign = -1;          // -1: spins start in the ground state, +1: excited

  // Envelope and its time derivative, with t measured from the pulse
  // center. sech^(1+i mu) = s * exp(i mu ln s), s = sech(beta_s t).
  std::complex<double> envelope(double t) const {
    const double s = 1.0 / std::cosh(beta_s * t);
    const double phase = mu * std::log(s);
    return a_max * s * std::complex<double>(std::cos(phase), std::sin(phase));
  }

  std::complex<double> envelope_dot(double t) const {
    // d/dt [s^(1+i mu)] = -(1 + i mu) * beta_s * tanh(beta_s t) * s^(1+i mu)
    const double th = std::tanh(beta_s * t);
    return -std::complex<double>(1.0, mu) * beta_s * th * envelope(t);
  }

  // Instantaneous detuning of the drive, d(arg a_c)/dt = -mu beta_s tanh.
  double instantaneous_detuning(double t) const {
    return -mu * beta_s * std::tanh(beta_s * t);
  }
};

}  // namespace spinmem
