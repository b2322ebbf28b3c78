#pragma once

#include <cmath>
#include <complex>

#include "spinmem/line.hpp"

// Free-induction-decay envelope of the discretized frequency line, compared
// with the closed-form transform of the continuous line. Used to qualify a
// bin layout: the discrete node sum must track the analytic signal over the
// dephasing window. Homogeneous decay is a common factor and is omitted.

namespace spinmem {

// Fourier transform of the three-peak Lorentzian line, normalized to 1 at
// t = 0. The Lorentzian width w appears here as the exponential envelope.
inline std::complex<double> fid_analytic(const FrequencyLine& line, double t) {
  const double env = std::exp(-0.5 * line.w * std::abs(t));
  return {(1.0 + 2.0 * std::cos(line.delta_hfs * t)) / 3.0 * env, 0.0};
}

// Node sum approximating the same transform. No extra envelope: the decay
// emerges from dephasing between the discrete nodes.
inline std::complex<double> fid_discrete(const FrequencyBins& bins, double t) {
  std::complex<double> s{0.0, 0.0};
  for (std::size_t k = 0; k < bins.delta.size(); ++k)
    s += bins.weight[k] *
         std::exp(std::complex<double>(0.0, bins.delta[k] * t));
  return s;
}

// max_t |S_disc(t) - S_ana(t)| over a uniform grid on [t_lo, t_hi].
inline double fid_error(const FrequencyBins& bins, const FrequencyLine& line,
                        double t_lo, double t_hi, int n_t = 2000) {
  double worst = 0.0;
  for (int i = 0; i < n_t; ++i) {
    const double t = t_lo + (t_hi - t_lo) * i / (n_t - 1);
    const double e = std::abs(fid_discrete(bins, t) - fid_analytic(line, t));
    worst = std::max(worst, e);
  }
  return worst;
}

// max_t |S_a(t) - S_b(t)| between two discretizations of the same line.
inline double fid_mutual_error(const FrequencyBins& a, const FrequencyBins& b,
                               double t_lo, double t_hi, int n_t = 2000) {
  double worst = 0.0;
  for (int i = 0; i < n_t; ++i) {
    const double t = t_lo + (t_hi - t_lo) * i / (n_t - 1);
    worst = std::max(worst, std::abs(fid_discrete(a, t) - fid_discrete(b, t)));
  }
  return worst;
}

}  // namespace spinmem
