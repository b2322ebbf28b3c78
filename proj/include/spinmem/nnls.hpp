#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

// Non-negative least squares, Lawson-Hanson active-set method on the normal
// equations. Sized for small design matrices (hundreds of columns).

namespace spinmem {

inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                            int max_iter = 0, double tol = 0.0) {
  const int n = static_cast<int>(a.cols());
  if (max_iter <= 0) max_iter = 3 * n + 30;
  const Eigen::MatrixXd ata = a.transpose() * a;
  const Eigen::VectorXd atb = a.transpose() * b;
  if (tol <= 0.0)
    tol = 10.0 * std::numeric_limits<double>::epsilon() *
          ata.cwiseAbs().maxCoeff() * n;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(n, false);
  std::vector<int> pidx;

  auto solve_passive = [&](Eigen::VectorXd& z) {
    const int np = static_cast<int>(pidx.size());
    Eigen::MatrixXd m(np, np);
    Eigen::VectorXd r(np);
    for (int i = 0; i < np; ++i) {
      r(i) = atb(pidx[i]);
      for (int j = 0; j < np; ++j) m(i, j) = ata(pidx[i], pidx[j]);
    }
    const Eigen::VectorXd s = m.ldlt().solve(r);
    z.setZero(n);
    for (int i = 0; i < np; ++i) z(pidx[i]) = s(i);
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd grad = atb - ata * x;
    int best = -1;
    double best_val = tol;
    for (int j = 0; j < n; ++j)
      if (!passive[j] && grad(j) > best_val) {
        best_val = grad(j);
        best = j;
      }
    if (best < 0) break;
    passive[best] = true;
    pidx.push_back(best);

    Eigen::VectorXd z(n);
    solve_passive(z);
    // inner loop: retreat until the passive solution is feasible
    while (true) {
      double worst = 0.0;
      bool ok = true;
      for (int j : pidx)
        if (z(j) <= 0.0) ok = false;
      if (ok) break;
      double alpha = std::numeric_limits<double>::infinity();
      for (int j : pidx)
        if (z(j) <= 0.0) alpha = std::min(alpha, x(j) / (x(j) - z(j)));
      x += alpha * (z - x);
      (void)worst;
      std::vector<int> keep;
      for (int j : pidx) {
        if (x(j) <= tol && z(j) <= 0.0) {
          passive[j] = false;
          x(j) = 0.0;
        } else {
          keep.push_back(j);
        }
      }
      pidx = keep;
      if (pidx.empty()) break;
      solve_passive(z);
    }
    x = z;
  }
  return x;
}

}  // namespace spinmem
