#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "spinmem/nnls.hpp"
#include "spinmem/units.hpp"

// Hyperfine-split spin frequency distribution: three Lorentzians of FWHM w
// centred at 0 and +-delta_hfs, each carrying mass 1/3, and its
// discretizations into sub-ensemble frequency nodes.

namespace spinmem {

struct FrequencyLine {
  double w = rad_from_hz(2.0e6);
  double delta_hfs = rad_from_hz(2.2e6);

  double density(double d) const {
    const double hw2 = w * w / 4.0;
    auto lor = [&](double c) { return 1.0 / ((d - c) * (d - c) + hw2); };
    return w / (6.0 * pi) * (lor(0.0) + lor(delta_hfs) + lor(-delta_hfs));
  }
  double cdf(double d) const {
    auto one = [&](double c) {
      return 0.5 + std::atan(2.0 * (d - c) / w) / pi;
    };
    return (one(0.0) + one(delta_hfs) + one(-delta_hfs)) / 3.0;
  }
  // inverse cdf by bisection
  double quantile(double p) const {
    double lo = -1e5 * w, hi = 1e5 * w;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

struct FrequencyBins {
  std::vector<double> delta;   // node positions, rad/s
  std::vector<double> weight;  // masses, sum to 1
};

// Default scheme: n-2 equal-width midpoint cells over [-span, span] plus one
// node per side absorbing the tail mass at its per-side mass median. The
// median placement is independent of n, which keeps refinements of the core
// grid comparable.
inline FrequencyBins default_frequency_bins(const FrequencyLine& line, int n,
                                            double span) {
  if (n < 5 || n % 2 == 0)
    throw std::invalid_argument("frequency bins: need odd n >= 5");
  if (span <= 0) throw std::invalid_argument("frequency bins: span > 0");
  FrequencyBins out;
  const int ncore = n - 2;
  const double step = 2.0 * span / ncore;
  const double tail = line.cdf(-span);  // per-side tail mass
  out.delta.push_back(line.quantile(tail / 2.0));
  out.weight.push_back(tail);
  for (int i = 0; i < ncore; ++i) {
    const double e0 = -span + i * step;
    out.delta.push_back(e0 + step / 2.0);
    out.weight.push_back(line.cdf(e0 + step) - line.cdf(e0));
  }
  out.delta.push_back(line.quantile(1.0 - tail / 2.0));
  out.weight.push_back(tail);
  return out;
}

// Fine scheme for free-induction-decay studies: symmetric node pairs whose
// masses are fitted by non-negative least squares so that the discrete
// free-induction signal matches the analytic transform of the line over
// [0, t_max]. Core nodes are equal-width midpoints over +-core_span; tail
// pairs are log-spaced out to cap.
inline FrequencyBins projected_frequency_bins(const FrequencyLine& line, int n,
                                              double core_span = rad_from_hz(48e6),
                                              double cap = rad_from_hz(1500e6),
                                              double tail_frac = 0.1,
                                              double t_max = 0.0) {
  if (n < 11 || n % 2 == 0)
    throw std::invalid_argument("projected bins: need odd n >= 11");
  if (t_max <= 0.0) t_max = 5.0 * 2.0 / line.w;  // 5 T2*
  const int n_tail = static_cast<int>(std::lround(tail_frac * n / 2.0));
  const int n_core = n - 2 * n_tail;  // odd
  if (n_core < 3 || n_core % 2 == 0)
    throw std::invalid_argument("projected bins: core count must be odd >= 3");
  const int pairs_core = (n_core - 1) / 2;

  std::vector<double> pos;  // positive member of each pair, ascending
  const double step = 2.0 * core_span / n_core;
  for (int p = 1; p <= pairs_core; ++p) pos.push_back(p * step);
  const double lr = std::log(cap / core_span);
  for (int q = 1; q <= n_tail; ++q)
    pos.push_back(core_span * std::exp(lr * q / n_tail));
  const int npair = static_cast<int>(pos.size());

  // time grid: uniform plus log-spaced early times
  std::vector<double> ts;
  const int n_lin = 2500, n_log = 600;
  for (int i = 0; i < n_lin; ++i) ts.push_back(t_max * i / (n_lin - 1));
  for (int i = 0; i < n_log; ++i) {
    const double e = -9.3 + (std::log10(t_max) + 9.3) * i / (n_log - 1);
    ts.push_back(std::pow(10.0, e));
  }
  const int rows = static_cast<int>(ts.size());

  // columns: centre node contributes 1, pair p contributes cos(delta_p t)
  // (variable = total mass of the pair); a weighted row enforces unit mass.
  const double lam = 300.0;
  Eigen::MatrixXd a(rows + 1, npair + 1);
  Eigen::VectorXd b(rows + 1);
  for (int r = 0; r < rows; ++r) {
    const double t = ts[r];
    a(r, 0) = 1.0;
    for (int p = 0; p < npair; ++p) a(r, p + 1) = std::cos(pos[p] * t);
    b(r) = (1.0 + 2.0 * std::cos(line.delta_hfs * t)) / 3.0 *
           std::exp(-line.w / 2.0 * t);
  }
  a.row(rows).setConstant(lam);
  b(rows) = lam;

  const Eigen::VectorXd x = nnls(a, b);

  FrequencyBins out;
  for (int p = npair - 1; p >= 0; --p) {
    out.delta.push_back(-pos[p]);
    out.weight.push_back(x(p + 1) / 2.0);
  }
  out.delta.push_back(0.0);
  out.weight.push_back(x(0));
  for (int p = 0; p < npair; ++p) {
    out.delta.push_back(pos[p]);
    out.weight.push_back(x(p + 1) / 2.0);
  }
  double s = 0.0;
  for (double wgt : out.weight) s += wgt;
  for (double& wgt : out.weight) wgt /= s;
  return out;
}

}  // namespace spinmem
