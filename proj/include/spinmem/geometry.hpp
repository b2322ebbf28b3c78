#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "spinmem/units.hpp"

// Coplanar-waveguide magnetic field and the spin-coupling distribution it
// induces over a crystal slab above the chip. The field of the half-wave
// resonator at its midpoint is the traveling-wave expression evaluated with
// the zero-point voltage fluctuation delta_v0.

namespace spinmem {

struct WaveguideGeometry {
  double s_center = 10e-6;   // center-conductor width S
  double w_gap = 5e-6;       // gap W between center and ground
  double b = 300e-6;         // ground-plane width
  double epsilon_r = 11.7;   // substrate dielectric constant
  double z0_ohms = 50.0;     // line impedance
  double y_min = 0.5e-6;     // crystal stand-off above chip
  double y_max = 40e-6;      // crystal thickness cutoff
  double x_half = 10e-6;     // lateral crystal half-extent
  int n_terms = 500;         // series truncation

  double eps_eff() const { return (epsilon_r + 1.0) / 2.0; }

  void validate() const {
    if (s_center <= 0 || w_gap <= 0 || b <= 0)
      throw std::invalid_argument("waveguide dimensions must be positive");
    if (s_center + 2.0 * w_gap >= b)
      throw std::invalid_argument("conductor and gaps must fit in ground width");
    if (y_min <= 0 || y_max <= y_min)
      throw std::invalid_argument("need 0 < y_min < y_max");
    if (x_half <= 0 || n_terms < 1)
      throw std::invalid_argument("need x_half > 0 and n_terms >= 1");
  }
};

// Transverse field components per volt of line voltage, at (x, y) above the
// chip plane. y must be >= y_min (the series diverges logarithmically at the
// conductor edges as y -> 0). `converged` reports whether the last term fell
// below 1e-8 of the accumulated sum; near y_min several thousand terms are
// needed for that, while the default truncation still gives ~0.2% accuracy
// there (far below the coupling-bin resolution).
struct FieldPerVolt {
  double bx, by;  // T/V
  bool converged = true;
};

inline FieldPerVolt waveguide_field(const WaveguideGeometry& geom,
                                    double omega_c, double x, double y) {
  if (y < geom.y_min)
    throw std::invalid_argument("waveguide_field: y below y_min cutoff");
  const double delta = geom.w_gap / geom.b;
  const double delta_bar = (geom.s_center + geom.w_gap) / geom.b;
  const double pref = -2.0 * mu0_si / (eta_vacuum * geom.b) *
                      std::sqrt(geom.eps_eff());
  const double slow = 4.0 * pi * c_light * geom.b *
                      std::sqrt(geom.eps_eff() - 1.0) / omega_c;
  double bx = 0.0, by = 0.0;
  double last_bx = 0.0, last_by = 0.0;
  for (int n = 1; n <= geom.n_terms; ++n) {
    const double npb = n * pi / geom.b;
    const double gam = std::sqrt(npb * npb + (slow / n) * (slow / n));
    const double fn = geom.b * gam / (n * pi);
    const double arg = n * pi * delta / 2.0;
    const double sinc = std::sin(arg) / arg;
    const double shape = sinc * std::sin(n * pi * delta_bar / 2.0);
    const double decay = std::exp(-gam * y);
    last_bx = shape / fn * std::cos(n * pi * x / geom.b) * decay;
    last_by = shape * std::sin(n * pi * x / geom.b) * decay;
    bx += last_bx;
    by += last_by;
  }
  FieldPerVolt out{pref * bx, pref * by, true};
  out.converged = std::abs(last_bx) <= 1e-8 * std::abs(bx) &&
                  std::abs(last_by) <= 1e-8 * std::abs(by);
  return out;
}

// Zero-point rms voltage fluctuation at the resonator end.
inline double delta_v0(double omega_c, double z0_ohms) {
  return omega_c * std::sqrt(hbar_si * z0_ohms / pi);
}

// Single-spin coupling (rad/s) at position (x, y).
inline double coupling_at(const WaveguideGeometry& geom, double omega_c,
                          double x, double y) {
  const FieldPerVolt f = waveguide_field(geom, omega_c, x, y);
  const double b_perp =
      std::sqrt(f.bx * f.bx + f.by * f.by) * delta_v0(omega_c, geom.z0_ohms);
  return g_nv * mu_bohr * b_perp / (std::sqrt(2.0) * hbar_si);
}

// Discrete coupling distribution: bin centers (rad/s) and g^2-weighted
// masses summing to 1. The cavity couples to each spin through g^2, so the
// mass of a bin is its share of the total g^2 over the crystal.
struct CouplingHistogram {
  std::vector<double> g;     // rad/s
  std::vector<double> mass;  // sums to 1
  double g_min = 0.0, g_max = 0.0;  // support edges, rad/s
};

// Deterministic quadrature over an inclusive nx-by-ny point grid spanning
// [-x_half, x_half] x [y_min, y_max], equal-width bins over the sampled
// g-range.
inline CouplingHistogram coupling_histogram(const WaveguideGeometry& geom,
                                            double omega_c, int n_bins,
                                            int nx = 481, int ny = 481) {
  geom.validate();
  if (n_bins < 1 || nx < 2 || ny < 2)
    throw std::invalid_argument("coupling_histogram: bad discretization");
  std::vector<double> gv;
  gv.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < nx; ++i) {
    const double x = -geom.x_half + 2.0 * geom.x_half * i / (nx - 1);
    for (int j = 0; j < ny; ++j) {
      const double y = geom.y_min + (geom.y_max - geom.y_min) * j / (ny - 1);
      gv.push_back(coupling_at(geom, omega_c, x, y));
    }
  }
  const auto [lo, hi] = std::minmax_element(gv.begin(), gv.end());
  CouplingHistogram h;
  h.g_min = *lo;
  h.g_max = *hi;
  const double width = (h.g_max - h.g_min) / n_bins;
  h.g.resize(n_bins);
  h.mass.assign(n_bins, 0.0);
  for (int k = 0; k < n_bins; ++k)
    h.g[k] = h.g_min + (k + 0.5) * width;
  double total = 0.0;
  for (double g : gv) {
    int k = static_cast<int>((g - h.g_min) / width);
    k = std::clamp(k, 0, n_bins - 1);
    h.mass[k] += g * g;
    total += g * g;
  }
  for (double& m : h.mass) m /= total;
  return h;
}

// Monte-Carlo variant: uniform (x, y) samples; cross-checks the quadrature.
inline CouplingHistogram coupling_histogram_mc(const WaveguideGeometry& geom,
                                               double omega_c, int n_bins,
                                               std::uint64_t seed,
                                               int n_samples = 200000) {
  geom.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-geom.x_half, geom.x_half);
  std::uniform_real_distribution<double> uy(geom.y_min, geom.y_max);
  std::vector<double> gv(n_samples);
  for (double& g : gv) g = coupling_at(geom, omega_c, ux(rng), uy(rng));
  const auto [lo, hi] = std::minmax_element(gv.begin(), gv.end());
  CouplingHistogram h;
  h.g_min = *lo;
  h.g_max = *hi;
  const double width = (h.g_max - h.g_min) / n_bins;
  h.g.resize(n_bins);
  h.mass.assign(n_bins, 0.0);
  for (int k = 0; k < n_bins; ++k)
    h.g[k] = h.g_min + (k + 0.5) * width;
  double total = 0.0;
  for (double g : gv) {
    int k = std::clamp(static_cast<int>((g - h.g_min) / width), 0, n_bins - 1);
    h.mass[k] += g * g;
    total += g * g;
  }
  for (double& m : h.mass) m /= total;
  return h;
}

// Root-mean-square coupling of a histogram (equals g_ens/sqrt(N) when the
// ensemble is built from it).
inline double histogram_rms(const CouplingHistogram& h) {
  double s2 = 0.0, s0 = 0.0;
  for (std::size_t k = 0; k < h.g.size(); ++k) {
    s2 += h.mass[k] * h.g[k] * h.g[k];
    s0 += h.mass[k];
  }
  return std::sqrt(s2 / s0);
}

}  // namespace spinmem
