#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "spinmem/geometry.hpp"
#include "spinmem/line.hpp"
#include "spinmem/params.hpp"

// The discrete ensemble: M sub-ensembles, each homogeneous with coupling
// g_m, detuning delta_m, and population n_m. Populations are real-valued
// and rescaled so that sum(n g^2) = g_ens^2 exactly.

namespace spinmem {

struct EnsembleModel {
  Eigen::VectorXd g;      // rad/s, size M
  Eigen::VectorXd delta;  // rad/s, size M
  Eigen::VectorXd n;      // populations, size M

  int size() const { return static_cast<int>(g.size()); }
  double g_ens() const { return std::sqrt((n.array() * g.array().square()).sum()); }
  double n_total() const { return n.sum(); }
  // rms coupling; the reference scale of the g-weighted observables
  double g_bar() const { return g_ens() / std::sqrt(n_total()); }
};

// Outer product of a coupling histogram and a frequency discretization:
// n_{k,l} = N * mass_k * weight_l, then rescaled to sum(n g^2) = g_ens^2.
inline EnsembleModel build_model(const PhysicalParams& par,
                                 const CouplingHistogram& hist,
                                 const FrequencyBins& bins) {
  const int nk = static_cast<int>(hist.g.size());
  const int nl = static_cast<int>(bins.delta.size());
  if (nk < 1 || nl < 1) throw std::invalid_argument("build_model: empty bins");
  const int m = nk * nl;
  EnsembleModel em;
  em.g.resize(m);
  em.delta.resize(m);
  em.n.resize(m);
  for (int k = 0; k < nk; ++k)
    for (int l = 0; l < nl; ++l) {
      const int i = k * nl + l;
      em.g(i) = hist.g[k];
      em.delta(i) = bins.delta[l];
      em.n(i) = par.n_total() * hist.mass[k] * bins.weight[l];
      if (em.n(i) < 0.0) throw std::invalid_argument("build_model: negative mass");
    }
  const double s = (em.n.array() * em.g.array().square()).sum();
  if (s <= 0.0) throw std::invalid_argument("build_model: empty ensemble");
  em.n *= par.g_ens * par.g_ens / s;
  return em;
}

// Homogeneous coupling: a single g for every frequency node.
inline EnsembleModel build_model_homogeneous(const PhysicalParams& par, double g,
                                             const FrequencyBins& bins) {
  CouplingHistogram h;
  h.g = {g};
  h.mass = {1.0};
  h.g_min = h.g_max = g;
  return build_model(par, h, bins);
}

// Single sub-ensemble at zero detuning; the two-mode swap limit.
inline EnsembleModel build_model_single(const PhysicalParams& par) {
  EnsembleModel em;
  em.g = Eigen::VectorXd::Constant(1, par.g_bar);
  em.delta = Eigen::VectorXd::Zero(1);
  em.n = Eigen::VectorXd::Constant(1, par.n_total());
  const double s = (em.n.array() * em.g.array().square()).sum();
  em.n *= par.g_ens * par.g_ens / s;
  return em;
}

}  // namespace spinmem
