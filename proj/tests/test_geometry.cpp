#include <catch2/catch_amalgamated.hpp>

#include "spinmem/geometry.hpp"
#include "spinmem/units.hpp"

using namespace spinmem;
using Catch::Approx;

namespace {
const double kOmega = rad_from_hz(2.9e9);
WaveguideGeometry default_geom() { return WaveguideGeometry{}; }
}  // namespace

TEST_CASE("zero-point voltage matches reference value") {
  CHECK(delta_v0(kOmega, 50.0) == Approx(7.464934690093e-07).epsilon(1e-11));
}

TEST_CASE("waveguide field matches reference values at probe points") {
  const auto geom = default_geom();
  const double dv = delta_v0(kOmega, geom.z0_ohms);
  struct Probe {
    double x, y, bx, by;  // bx, by in tesla at the zero-point voltage
  };
  const Probe probes[] = {
      {0.0, 1e-6, -5.418902617450e-10, 0.0},
      {5e-6, 2e-6, -5.530868681641e-10, -4.496053619498e-10},
      {7.5e-6, 0.5e-6, -1.343777132789e-10, -1.088778378078e-09},
      {-9e-6, 35e-6, -1.924174316658e-11, 1.019380967861e-11},
  };
  for (const auto& p : probes) {
    const auto f = waveguide_field(geom, kOmega, p.x, p.y);
    CHECK(f.bx * dv == Approx(p.bx).margin(1e-21).epsilon(1e-10));
    CHECK(f.by * dv == Approx(p.by).margin(1e-21).epsilon(1e-10));
  }
}

TEST_CASE("field is symmetric in x above the center conductor") {
  const auto geom = default_geom();
  const auto fp = waveguide_field(geom, kOmega, 4e-6, 3e-6);
  const auto fm = waveguide_field(geom, kOmega, -4e-6, 3e-6);
  CHECK(fp.bx == Approx(fm.bx).epsilon(1e-13));
  CHECK(fp.by == Approx(-fm.by).epsilon(1e-13));
}

TEST_CASE("series convergence flag and doubled-truncation agreement") {
  auto geom = default_geom();
  // Default truncation: converged well above the chip, not at the stand-off
  // height (the exponential factor is only e^{-2.6} there at the last term).
  CHECK(waveguide_field(geom, kOmega, 0.0, 10e-6).converged);
  CHECK(waveguide_field(geom, kOmega, 2e-6, 40e-6).converged);
  CHECK_FALSE(waveguide_field(geom, kOmega, 0.0, 0.5e-6).converged);

  // Where the flag reports convergence, doubling the truncation changes
  // nothing at the 1e-8 level.
  auto doubled = geom;
  doubled.n_terms = 2 * geom.n_terms;
  for (const auto& [x, y] : {std::pair{-5e-6, 10e-6}, {2e-6, 40e-6}}) {
    const auto a = waveguide_field(geom, kOmega, x, y);
    const auto b = waveguide_field(doubled, kOmega, x, y);
    const double scale = std::hypot(b.bx, b.by);
    CHECK(std::abs(a.bx - b.bx) / scale < 1e-8);
    CHECK(std::abs(a.by - b.by) / scale < 1e-8);
  }

  // At the stand-off height the flag clears once enough terms are kept, and
  // the converged value differs from the default truncation by ~2e-3.
  auto deep = geom;
  deep.n_terms = 4000;
  auto deep2 = geom;
  deep2.n_terms = 8000;
  const auto a = waveguide_field(deep, kOmega, 0.0, 0.5e-6);
  const auto b = waveguide_field(deep2, kOmega, 0.0, 0.5e-6);
  CHECK(a.converged);
  CHECK(std::abs(a.bx - b.bx) / std::abs(b.bx) < 1e-8);
  const auto trunc = waveguide_field(geom, kOmega, 0.0, 0.5e-6);
  CHECK(std::abs(trunc.bx - b.bx) / std::abs(b.bx) < 5e-3);
}

TEST_CASE("single-spin coupling matches reference values") {
  const auto geom = default_geom();
  CHECK(coupling_at(geom, kOmega, 0.0, 1e-6) ==
        Approx(6.739345894675e+01).epsilon(1e-10));
  CHECK(coupling_at(geom, kOmega, 5e-6, 2e-6) ==
        Approx(8.864610464847e+01).epsilon(1e-10));
  CHECK(coupling_at(geom, kOmega, 7.5e-6, 0.5e-6) ==
        Approx(1.364359052468e+02).epsilon(1e-10));
  CHECK(coupling_at(geom, kOmega, -9e-6, 35e-6) ==
        Approx(2.708121476577e+00).epsilon(1e-10));
}

TEST_CASE("field evaluation below the stand-off height is rejected") {
  const auto geom = default_geom();
  CHECK_THROWS_AS(waveguide_field(geom, kOmega, 0.0, 0.1e-6),
                  std::invalid_argument);
}

TEST_CASE("geometry validation rejects inconsistent dimensions") {
  auto geom = default_geom();
  geom.b = 15e-6;  // conductor + gaps no longer fit
  CHECK_THROWS_AS(geom.validate(), std::invalid_argument);
  geom = default_geom();
  geom.y_max = geom.y_min;
  CHECK_THROWS_AS(geom.validate(), std::invalid_argument);
  geom = default_geom();
  geom.n_terms = 0;
  CHECK_THROWS_AS(geom.validate(), std::invalid_argument);
}

TEST_CASE("coupling histogram matches reference values") {
  const auto geom = default_geom();
  const auto h = coupling_histogram(geom, kOmega, 7);
  REQUIRE(h.g.size() == 7);
  CHECK(h.g_min == Approx(2.092870880583).epsilon(1e-10));
  CHECK(h.g_max == Approx(158.3911969711).epsilon(1e-10));
  const double centers[7] = {13.25703702991, 35.58536932856, 57.91370162721,
                             80.24203392586, 102.5703662245, 124.8986985232,
                             147.2270308218};
  const double masses[7] = {8.222727739760e-02, 1.542265916632e-01,
                            2.421903075935e-01, 1.997381633333e-01,
                            1.438982515312e-01, 1.337804798813e-01,
                            4.393892859984e-02};
  double total = 0.0;
  for (int k = 0; k < 7; ++k) {
    CHECK(h.g[k] == Approx(centers[k]).epsilon(1e-10));
    CHECK(h.mass[k] == Approx(masses[k]).margin(5e-4));
    total += h.mass[k];
  }
  CHECK(total == Approx(1.0).epsilon(1e-12));
  CHECK(histogram_rms(h) / two_pi == Approx(13.18335253).margin(1e-3));
}

TEST_CASE("monte-carlo histogram agrees with the quadrature histogram") {
  const auto geom = default_geom();
  const auto hq = coupling_histogram(geom, kOmega, 7);
  const auto hm = coupling_histogram_mc(geom, kOmega, 7, 12345u, 200000);
  REQUIRE(hm.g.size() == hq.g.size());
  // Support edges seen by sampling lie inside the quadrature support and
  // close to it; masses agree to sampling accuracy.
  CHECK(hm.g_min == Approx(hq.g_min).margin(0.05 * hq.g_min));
  CHECK(hm.g_max == Approx(hq.g_max).margin(0.02 * hq.g_max));
  for (std::size_t k = 0; k < hq.g.size(); ++k)
    CHECK(hm.mass[k] == Approx(hq.mass[k]).margin(0.02));
  // g^2 weighting emphasizes the rare near-chip samples, so the sampled rms
  // converges slowly; 200k samples land within a few percent.
  CHECK(histogram_rms(hm) == Approx(histogram_rms(hq)).epsilon(0.04));
}
