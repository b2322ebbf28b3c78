#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "spinmem/nnls.hpp"

using namespace spinmem;
using Catch::Approx;

TEST_CASE("identity system returns the right-hand side") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd b(3);
  b << 1.0, 2.0, 3.0;
  const Eigen::VectorXd x = nnls(a, b);
  for (int i = 0; i < 3; ++i) CHECK(x(i) == Approx(b(i)).epsilon(1e-12));
}

TEST_CASE("negative least-squares component is clamped to the boundary") {
  // Unconstrained solution is (-2, 3); the constrained optimum fixes the
  // first coordinate at zero and solves the remaining column exactly.
  Eigen::MatrixXd a(2, 2);
  a << 2.0, 1.0, 1.0, 2.0;
  Eigen::VectorXd b(2);
  b << -1.0, 4.0;
  const Eigen::VectorXd x = nnls(a, b);
  CHECK(x(0) == Approx(0.0).margin(1e-12));
  CHECK(x(1) == Approx(1.4).epsilon(1e-12));
  // KKT: gradient along the clamped coordinate must not be ascent
  const Eigen::VectorXd r = b - a * x;
  CHECK(a.col(0).dot(r) <= 1e-10);
}

TEST_CASE("consistent nonnegative system is recovered exactly") {
  // full-rank pseudo-random matrix from an integer LCG
  std::uint64_t s = 1234567u;
  auto next = [&s] {
    s = (6364136223846793005ull * s + 1442695040888963407ull);
    return static_cast<double>(s >> 11) / 9007199254740992.0 - 0.5;
  };
  Eigen::MatrixXd a(20, 8);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 8; ++j) a(i, j) = next();
  Eigen::VectorXd xt = Eigen::VectorXd::Zero(8);
  xt(1) = 2.0;
  xt(4) = 0.5;
  xt(6) = 3.25;
  const Eigen::VectorXd b = a * xt;
  const Eigen::VectorXd x = nnls(a, b);
  for (int j = 0; j < 8; ++j) CHECK(x(j) == Approx(xt(j)).margin(1e-8));
}

TEST_CASE("overdetermined problem matches reference solution") {
  // Reference computed with an independent active-set implementation.
  Eigen::MatrixXd a(12, 5);
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 5; ++j)
      a(i, j) = std::sin(1.0 + 0.37 * i + 0.71 * j);
  Eigen::VectorXd b(12);
  for (int i = 0; i < 12; ++i) b(i) = std::cos(0.3 * i);
  const Eigen::VectorXd x = nnls(a, b);
  const double ref[5] = {0.9102536033426772, 0.0, 0.18173739421864019, 0.0,
                         0.0};
  for (int j = 0; j < 5; ++j) CHECK(x(j) == Approx(ref[j]).margin(1e-9));
  // KKT sign conditions on the full gradient
  const Eigen::VectorXd grad = a.transpose() * (b - a * x);
  for (int j = 0; j < 5; ++j) {
    if (x(j) > 0.0)
      CHECK(std::abs(grad(j)) < 1e-9);
    else
      CHECK(grad(j) <= 1e-9);
  }
}

TEST_CASE("zero right-hand side yields the zero solution") {
  Eigen::MatrixXd a(4, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = 1.0 + i + 2 * j;
  const Eigen::VectorXd x = nnls(a, Eigen::VectorXd::Zero(4));
  for (int j = 0; j < 3; ++j) CHECK(x(j) == Approx(0.0).margin(1e-14));
}
