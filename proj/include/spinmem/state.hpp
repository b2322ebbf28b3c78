#pragma once

#include <Eigen/Dense>
#include <complex>

#include "spinmem/model.hpp"

// Moment-level state of the cavity + M sub-ensembles: first moments of
// (X_c, P_c, S_x^m, S_y^m, S_z^m) and, optionally, the symmetrized
// covariance matrix C_kl = 2 Re<dy_k dy_l> over the same ordering.

namespace spinmem {

inline int state_dim(const EnsembleModel& m) { return 2 + 3 * m.size(); }
constexpr int ix_cav_x = 0;
constexpr int ix_cav_p = 1;
inline int ix_sx(int m) { return 2 + 3 * m; }
inline int ix_sy(int m) { return 3 + 3 * m; }
inline int ix_sz(int m) { return 4 + 3 * m; }

struct MomentState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // empty in means-only mode

  bool has_cov() const { return cov.size() > 0; }
};

// Cavity in a coherent state alpha, every sub-ensemble fully polarized to
// its ground state. Covariances: vacuum for the cavity, coherent-spin-state
// transverse noise 2*n_m for the spins.
inline MomentState initial_state(const EnsembleModel& model,
                                 std::complex<double> alpha, bool with_cov) {
  const int d = state_dim(model);
  MomentState st;
  st.mean = Eigen::VectorXd::Zero(d);
  st.mean(ix_cav_x) = std::sqrt(2.0) * alpha.real();
  st.mean(ix_cav_p) = std::sqrt(2.0) * alpha.imag();
  for (int m = 0; m < model.size(); ++m) st.mean(ix_sz(m)) = -model.n(m);
  if (with_cov) {
    st.cov = Eigen::MatrixXd::Zero(d, d);
    st.cov(ix_cav_x, ix_cav_x) = 1.0;
    st.cov(ix_cav_p, ix_cav_p) = 1.0;
    for (int m = 0; m < model.size(); ++m) {
      st.cov(ix_sx(m), ix_sx(m)) = 2.0 * model.n(m);
      st.cov(ix_sy(m), ix_sy(m)) = 2.0 * model.n(m);
    }
  }
  return st;
}

// Cavity amplitude <a> = (X + iP)/sqrt(2).
inline std::complex<double> cavity_amplitude(const Eigen::VectorXd& y) {
  return {y(ix_cav_x) / std::sqrt(2.0), y(ix_cav_p) / std::sqrt(2.0)};
}

// g-weighted collective lowering amplitude, scaled so that a perfectly
// swapped-in cavity amplitude alpha gives |bright_amplitude| = |alpha|.
inline std::complex<double> bright_amplitude(const EnsembleModel& model,
                                             const Eigen::VectorXd& y) {
  std::complex<double> e{0.0, 0.0};
  for (int m = 0; m < model.size(); ++m)
    e += model.g(m) *
         std::complex<double>(y(ix_sx(m)) / 2.0, -y(ix_sy(m)) / 2.0);
  return e * std::sqrt(2.0) / model.g_ens();
}

// Plain excited-state fraction (population-weighted).
inline double p_exc(const EnsembleModel& model, const Eigen::VectorXd& y) {
  double sz = 0.0;
  for (int m = 0; m < model.size(); ++m) sz += y(ix_sz(m));
  const double n = model.n_total();
  return (sz + n) / (2.0 * n);
}

// g^2-weighted excited-state fraction: the share of the collectively
// coupled (bright-mode-relevant) population in the excited state.
inline double p_exc_eff(const EnsembleModel& model, const Eigen::VectorXd& y) {
  double s = 0.0;
  for (int m = 0; m < model.size(); ++m)
    s += model.g(m) * model.g(m) * y(ix_sz(m));
  const double ge2 = model.g_ens() * model.g_ens();
  return (s / ge2 + 1.0) / 2.0;
}

// Cavity noise figure "2 sigma^2": the symmetrized quadrature variances
// averaged over X and P, normalized so vacuum = 1.
inline double cavity_var_sum(const Eigen::MatrixXd& cov) {
  return 0.5 * (cov(ix_cav_x, ix_cav_x) + cov(ix_cav_p, ix_cav_p));
}

// g-weighted transverse spin variance, averaged over the two transverse
// components and normalized so a fully polarized (coherent-spin) ensemble
// gives 1 (each component's doubled variance is divided by its
// coherent-state value 2N before averaging).
inline double spin_var_eff(const EnsembleModel& model,
                           const Eigen::MatrixXd& cov) {
  const int mm = model.size();
  double vx = 0.0, vy = 0.0;
  for (int a = 0; a < mm; ++a)
    for (int b = 0; b < mm; ++b) {
      const double gg = model.g(a) * model.g(b);
      vx += gg * cov(ix_sx(a), ix_sx(b));
      vy += gg * cov(ix_sy(a), ix_sy(b));
    }
  const double ge2 = model.g_ens() * model.g_ens();
  return (vx + vy) / (4.0 * ge2);
}

}  // namespace spinmem
