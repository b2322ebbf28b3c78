#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include "spinmem/geometry.hpp"
#include "spinmem/line.hpp"
#include "spinmem/model.hpp"
#include "spinmem/params.hpp"
#include "spinmem/protocol.hpp"

using namespace spinmem;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

const PhysicalParams& refpar() {
  static const PhysicalParams par = [] {
    PhysicalParams p;
    p.validate();
    return p;
  }();
  return par;
}

// Coarse inhomogeneous model (7 coupling bins x 33 frequency bins): cheap
// enough for unit tests while keeping both broadenings present.
const EnsembleModel& coarse_model() {
  static const EnsembleModel m = [] {
    const auto& par = refpar();
    const auto hist = coupling_histogram(WaveguideGeometry{}, par.omega_c, 7);
    const auto bins =
        default_frequency_bins(FrequencyLine{}, 33, rad_from_hz(12.0e6));
    return build_model(par, hist, bins);
  }();
  return m;
}

// Single-coupling variant used where only the frequency spread matters.
const EnsembleModel& homog_model() {
  static const EnsembleModel m = [] {
    const auto& par = refpar();
    const auto bins =
        default_frequency_bins(FrequencyLine{}, 33, rad_from_hz(12.0e6));
    return build_model_homogeneous(par, par.g_bar, bins);
  }();
  return m;
}

const CalibratedPulses& homog_pulses() {
  static const CalibratedPulses cp =
      calibrate_protocol_pulses(homog_model(), refpar());
  return cp;
}

// Denser single-coupling model: the spectral comb of an n-bin discretization
// spuriously rephases every (n-2)/span seconds, so runs that hold coherence
// in the spins for a time tau need (n-2) > span*tau bins to keep the
// artificial recurrence out of the resonant windows.
const EnsembleModel& homog_model_n(int n) {
  static std::map<int, EnsembleModel> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    const auto& par = refpar();
    const auto bins =
        default_frequency_bins(FrequencyLine{}, n, rad_from_hz(12.0e6));
    it = cache.emplace(n, build_model_homogeneous(par, par.g_bar, bins)).first;
  }
  return it->second;
}

}  // namespace

TEST_CASE("swap window length approaches the quarter-exchange period",
          "[protocol]") {
  const auto& par = refpar();
  const EnsembleModel one = build_model_single(par);
  TswapOptions opt;
  opt.kappa = 1.0;  // negligible cavity leakage
  opt.include_chirps = false;
  const double ts = optimize_tswap(one, par, opt);
  const double quarter = M_PI / (2.0 * one.g_ens());
  REQUIRE(ts == Approx(quarter).margin(0.2e-9));
  REQUIRE(storage_residual(one, par, ts, opt) < 1e-3);
}

TEST_CASE("swap window optimum for the broadened ensemble", "[protocol]") {
  const auto& par = refpar();
  const auto& m = coarse_model();
  TswapOptions opt;
  const double ts = optimize_tswap(m, par, opt);
  // Slightly longer than the bare quarter period because of the finite
  // cavity linewidth and the detuning spread.
  REQUIRE(ts == Approx(73.7e-9).margin(1.0e-9));
  const double r0 = storage_residual(m, par, ts, opt);
  REQUIRE(r0 < 0.12);
  REQUIRE(storage_residual(m, par, ts - 5e-9, opt) > r0);
  REQUIRE(storage_residual(m, par, ts + 5e-9, opt) > r0);
}

TEST_CASE("overdamped cavity leaves no interior swap optimum", "[protocol]") {
  const auto& par = refpar();
  const EnsembleModel one = build_model_single(par);
  TswapOptions opt;
  opt.kappa = par.kappa_pulse();  // linewidth exceeds the coupling rate
  opt.include_chirps = false;
  REQUIRE_THROWS_AS(optimize_tswap(one, par, opt), std::runtime_error);
  REQUIRE_THROWS_WITH(optimize_tswap(one, par, opt),
                      ContainsSubstring("bracket edge"));
}

TEST_CASE("inversion pulse calibration meets the power budget", "[protocol]") {
  const auto& par = refpar();
  const auto cp = calibrate_protocol_pulses(coarse_model(), par);
  REQUIRE(cp.nstep == 1000);
  // Waveforms are sampled at whole and half steps for the midpoint stages.
  REQUIRE(cp.beta1.size() == static_cast<std::size_t>(2 * cp.nstep + 1));
  REQUIRE(cp.beta2.size() == cp.beta1.size());
  // The first drive is calibrated to hit the peak power exactly.
  REQUIRE(cp.peak_power1 == Approx(par.p_peak).epsilon(1e-3));
  // The second reuses the same envelope; the spin reaction differs only
  // slightly, so its power stays within the 5% headroom run_memory allows.
  REQUIRE(cp.peak_power2 < 1.05 * par.p_peak);
  REQUIRE(cp.peak_power2 == Approx(par.p_peak).epsilon(0.05));
  // Cavity-only bound: a drive of power P through a linewidth-kappa port
  // cannot sustain more than sqrt(2P/(hbar omega kappa)) photons^(1/2) of
  // field; the spin load reduces the calibrated amplitude a little.
  const double hbar_omega = 1.054571817e-34 * par.omega_c;
  const double bound = std::sqrt(2.0 * par.p_peak /
                                 (hbar_omega * par.kappa_pulse()));
  REQUIRE(cp.a_max < bound);
  REQUIRE(cp.a_max > 0.90 * bound);
}

TEST_CASE("memory run rejects uncalibrated or mismatched inputs",
          "[protocol]") {
  const auto& par = refpar();
  const auto& m = homog_model();
  const auto& cp = homog_pulses();

  ProtocolSettings cfg;
  cfg.with_cov = false;
  SECTION("missing swap calibration") {
    cfg.t_cav_eff = 31e-9;
    REQUIRE_THROWS_AS(run_memory(m, par, cp, 1.0, cfg), std::invalid_argument);
  }
  SECTION("missing dwell calibration") {
    cfg.t_swap = 73e-9;
    REQUIRE_THROWS_AS(run_memory(m, par, cp, 1.0, cfg), std::invalid_argument);
  }
  SECTION("waveform sampled on a different grid") {
    cfg.t_swap = 73e-9;
    cfg.t_cav_eff = 31e-9;
    CalibratedPulses bad = cp;
    bad.nstep = 1000;
    bad.beta1.assign(1001, {0.0, 0.0});
    bad.beta2 = bad.beta1;
    REQUIRE_THROWS_WITH(run_memory(m, par, bad, 1.0, cfg),
                        ContainsSubstring("step grid"));
  }
  SECTION("waveform exceeding the power budget") {
    cfg.t_swap = 73e-9;
    cfg.t_cav_eff = 31e-9;
    CalibratedPulses hot = cp;
    hot.peak_power1 = 2.0 * par.p_peak;
    REQUIRE_THROWS_WITH(run_memory(m, par, hot, 1.0, cfg),
                        ContainsSubstring("peak power"));
  }
}

TEST_CASE("revival fixed point converges for a broadened ensemble",
          "[protocol]") {
  const auto& par = refpar();
  const auto& m = homog_model_n(63);
  const auto cp = calibrate_protocol_pulses(m, par);
  RevivalFixOptions opt;
  opt.t_mem = 10e-6;
  opt.t_swap = optimize_tswap(m, par);
  const double tc = fix_t_cav_eff(m, par, cp, opt);
  // The retrieved field peaks one cavity-dwell after the bare refocusing
  // instant; the dwell is a fraction of the swap window.
  REQUIRE(tc > 10e-9);
  REQUIRE(tc < opt.t_swap);
}

TEST_CASE("revival search fails cleanly when nothing rephases", "[protocol]") {
  const auto& par = refpar();
  // A single resonant packet never dephases, so the extended hold contains
  // no revival peak to lock onto.
  const EnsembleModel one = build_model_single(par);
  const auto cp = calibrate_protocol_pulses(one, par);
  RevivalFixOptions opt;
  opt.t_mem = 10e-6;
  opt.t_swap = 71.4e-9;
  REQUIRE_THROWS_AS(fix_t_cav_eff(one, par, cp, opt), std::runtime_error);
}

TEST_CASE("single-slot sequential run matches the plain memory run",
          "[protocol]") {
  const auto& par = refpar();
  const auto& m = homog_model();
  const auto& cp = homog_pulses();
  const double ts = optimize_tswap(m, par);

  ProtocolSettings one;
  one.t_mem = 10e-6;
  one.t_swap = ts;
  one.t_cav_eff = 31e-9;
  one.with_cov = false;
  const auto base = run_memory(m, par, cp, {0.7, 0.2}, one);

  MultimodeSettings mm;
  mm.t_mem = one.t_mem;
  mm.initial_wait = 0.0;
  mm.t_swap = ts;
  mm.t_cav_eff = one.t_cav_eff;
  mm.with_cov = false;
  const auto seq = run_multimode(m, par, cp, {{0.7, 0.2}}, mm);

  REQUIRE(seq.alpha_out.size() == 1);
  REQUIRE(seq.read_times.size() == 1);
  REQUIRE(seq.alpha_out[0].real() == Approx(base.alpha_out.real()));
  REQUIRE(seq.alpha_out[0].imag() == Approx(base.alpha_out.imag()));
  REQUIRE(seq.read_times[0] == Approx(one.t_mem));

  // Trajectory sanity on the shared sampling path.
  REQUIRE(base.traj.size() > 100);
  REQUIRE(base.traj.front().t == Approx(0.0).margin(1e-12));
  REQUIRE(base.traj.back().t == Approx(one.t_mem).margin(1e-9));
  for (std::size_t i = 1; i < base.traj.size(); ++i)
    REQUIRE(base.traj[i].t > base.traj[i - 1].t);
  for (const auto& p : base.traj) {
    REQUIRE(std::isnan(p.var_sum));  // means-only run
    REQUIRE(p.p_exc_eff >= -1e-9);
    REQUIRE(p.p_exc_eff <= 1.05);
  }
}

TEST_CASE("sequential storage validates its slot layout", "[protocol]") {
  const auto& par = refpar();
  const auto& m = homog_model();
  const auto& cp = homog_pulses();
  MultimodeSettings mm;
  mm.t_swap = 73e-9;
  mm.t_cav_eff = 31e-9;
  mm.with_cov = false;

  SECTION("no inputs") {
    REQUIRE_THROWS_AS(run_multimode(m, par, cp, {}, mm),
                      std::invalid_argument);
  }
  SECTION("slots overlapping") {
    mm.spacing = 80e-9;
    REQUIRE_THROWS_WITH(run_multimode(m, par, cp, {1.0, 1.0}, mm),
                        ContainsSubstring("spacing"));
  }
  SECTION("first slot earlier than the linewidth ramp") {
    mm.initial_wait = 1e-9;
    REQUIRE_THROWS_WITH(run_multimode(m, par, cp, {1.0, 1.0}, mm),
                        ContainsSubstring("initial wait"));
  }
  SECTION("train longer than the available storage window") {
    mm.t_mem = 13e-6;
    std::vector<std::complex<double>> many(30, {1.0, 0.0});
    REQUIRE_THROWS_WITH(run_multimode(m, par, cp, many, mm),
                        ContainsSubstring("do not fit"));
  }
}

TEST_CASE("two-slot sequential run retrieves both fields in order",
          "[protocol]") {
  const auto& par = refpar();
  // Slot coherences sit in the spins for up to ~5.5 us before the first
  // inversion pulse, so the comb recurrence must be pushed past that.
  const auto& m = homog_model_n(135);
  const auto cp = calibrate_protocol_pulses(m, par);
  MultimodeSettings mm;
  mm.t_mem = 12e-6;
  mm.t_swap = optimize_tswap(m, par);
  mm.t_cav_eff = 33e-9;
  mm.with_cov = false;

  // The inversion pulses leave an input-independent cavity residue, so the
  // retrieved fields are measured against a zero-input run.
  const auto zero = run_multimode(m, par, cp, {{0.0, 0.0}, {0.0, 0.0}}, mm);
  const auto res = run_multimode(m, par, cp, {{1.0, 0.0}, {0.0, 1.0}}, mm);
  REQUIRE(res.alpha_out.size() == 2);
  REQUIRE(res.read_times.size() == 2);
  // First stored, first retrieved; reads one slot-spacing apart.
  REQUIRE(res.read_times[1] - res.read_times[0] ==
          Approx(mm.spacing).margin(1e-12));
  REQUIRE(res.read_times[1] <= mm.t_mem);
  REQUIRE(mm.t_mem - res.read_times[0] <
          mm.initial_wait + mm.spacing + 0.1e-6);

  const std::complex<double> d0 = res.alpha_out[0] - zero.alpha_out[0];
  const std::complex<double> d1 = res.alpha_out[1] - zero.alpha_out[1];
  REQUIRE(std::abs(d0) > 0.5);
  REQUIRE(std::abs(d0) < 1.0);
  REQUIRE(std::abs(d1) > 0.5);
  REQUIRE(std::abs(d1) < 1.0);
  // Each retrieved field keeps its own phase, sign-reversed.
  REQUIRE(d0.real() < -0.5);
  REQUIRE(std::abs(d0.imag()) < 0.3 * std::abs(d0));
  REQUIRE(d1.imag() < -0.5);
  REQUIRE(std::abs(d1.real()) < 0.3 * std::abs(d1));
}
