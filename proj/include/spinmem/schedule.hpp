#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinmem/params.hpp"

// Timing algebra and control-schedule construction for the two-pulse
// refocusing memory protocol. The protocol runs in 21 consecutive parts:
//
//   1  chirp detuning: target -> 0            (duration = chirp time)
//   2  swap: input field -> bright spin mode  (t_swap)
//   3  chirp: 0 -> parked
//   4  parked hold                            (= t_res + part-18 hold)
//   5  kappa ramp: min -> pulse value
//   6  chirp: parked -> 0
//   7  first inversion pulse                  (t_pi, driven)
//   8  resonant relaxation                    (t_res)
//   9  chirp: 0 -> parked
//  10  kappa ramp: pulse -> min
//  11  parked hold (contains the silenced primary echo)
//  12  kappa ramp: min -> pulse
//  13  chirp: parked -> 0
//  14  second inversion pulse                 (t_pi, driven)
//  15  resonant relaxation                    (t_res)
//  16  chirp: 0 -> parked
//  17  kappa ramp: pulse -> min
//  18  parked hold
//  19  chirp: parked -> 0
//  20  swap: bright spin mode -> output field (t_swap)
//  21  chirp: 0 -> target
//
// The free holds (4, 11, 18) are solved so that the total duration is
// exactly t_mem, the second refocused echo coincides with the retrieval
// swap, and the first (noisy) echo forms while the cavity is parked far
// off resonance, where it cannot radiate.

namespace spinmem {

struct ProtocolTiming {
  std::array<double, 22> t{};  // 1-based part durations; t[0] unused
  double t_mem = 0.0;
  double t_swap = 0.0;
  double t_cav_eff = 0.0;  // effective time the state spends as a cavity field
  double t_echo = 0.0;     // refocusing interval, t_mem - 2*t_cav_eff

  double sum() const {
    double s = 0.0;
    for (int j = 1; j <= 21; ++j) s += t[j];
    return s;
  }
  // Start time of part j (1-based) measured from protocol start.
  double start_of(int j) const {
    double s = 0.0;
    for (int i = 1; i < j; ++i) s += t[i];
    return s;
  }
};

// Solve the three free hold durations given the total memory time, the
// swap duration, and the effective cavity dwell time. Throws when t_mem is
// too short, naming the binding constraint and the minimum feasible value.
inline ProtocolTiming solve_timing(double t_mem, double t_swap,
                                   double t_cav_eff,
                                   const PhysicalParams& par) {
  if (t_mem <= 0.0) throw std::domain_error("solve_timing: t_mem must be > 0");
  if (t_swap <= 0.0)
    throw std::domain_error("solve_timing: t_swap must be > 0");
  const double tdt = par.t_chirp_target();
  const double tdp = par.t_chirp_parked();
  const double tk = par.t_kappa;
  const double tpi = par.t_pi;
  const double tres = par.t_res;

  const double t11 =
      t_mem / 2.0 - 2.0 * tdp - 2.0 * tk - tpi - tres - t_cav_eff;
  const double t18 = t_mem / 4.0 - tdt - 2.0 * tdp - tk - tpi / 2.0 - tres -
                     t_swap + t_cav_eff / 2.0;
  const double t4 = tres + t18;

  if (t11 < 0.0 || t18 < 0.0 || t4 < 0.0) {
    const double min11 =
        2.0 * (2.0 * tdp + 2.0 * tk + tpi + tres + t_cav_eff);
    const double min18 = 4.0 * (tdt + 2.0 * tdp + tk + tpi / 2.0 + tres +
                                t_swap - t_cav_eff / 2.0);
    std::ostringstream os;
    os << "solve_timing: t_mem = " << t_mem
       << " s is too short; minimum feasible t_mem = "
       << std::max(min11, min18) << " s (binding constraint: "
       << (min11 >= min18 ? "part-11 hold between the inversion pulses"
                          : "part-18 hold before retrieval")
       << " must be >= 0)";
    throw std::domain_error(os.str());
  }

  ProtocolTiming tm;
  tm.t_mem = t_mem;
  tm.t_swap = t_swap;
  tm.t_cav_eff = t_cav_eff;
  tm.t_echo = t_mem - 2.0 * t_cav_eff;
  tm.t[1] = tm.t[21] = tdt;
  tm.t[2] = tm.t[20] = t_swap;
  tm.t[3] = tm.t[6] = tm.t[9] = tm.t[13] = tm.t[16] = tm.t[19] = tdp;
  tm.t[5] = tm.t[10] = tm.t[12] = tm.t[17] = tk;
  tm.t[7] = tm.t[14] = tpi;
  tm.t[8] = tm.t[15] = tres;
  tm.t[4] = t4;
  tm.t[11] = t11;
  tm.t[18] = t18;
  return tm;
}

// One piecewise-linear control segment. kappa and delta interpolate
// linearly from their 0-values to their 1-values across the segment;
// a nonzero pulse index selects a synthesized drive waveform.
struct Segment {
  std::string label;
  double duration = 0.0;
  double kappa0 = 0.0, kappa1 = 0.0;
  double delta0 = 0.0, delta1 = 0.0;
  int pulse = 0;  // 1-based index into ControlSchedule::pulse_beta; 0 = none
  double dt = 0.2e-9;
  bool kappa_guard = false;  // cavity must be near-empty when kappa changes
};

struct ControlSchedule {
  std::vector<Segment> segments;
  // Drive waveforms sampled on the half-step grid of their segment:
  // 2*nsteps+1 values covering the segment inclusive of both endpoints.
  std::vector<std::vector<std::complex<double>>> pulse_beta;

  double total_duration() const {
    double s = 0.0;
    for (const auto& sg : segments) s += sg.duration;
    return s;
  }
};

namespace detail {
inline void check_chirp_rate(const Segment& s, double rate) {
  if (s.duration <= 0.0) {
    if (s.delta0 != s.delta1)
      throw std::invalid_argument("schedule: detuning step in segment '" +
                                  s.label + "' with zero duration");
    return;
  }
  const double r = std::abs(s.delta1 - s.delta0) / s.duration;
  if (r > rate * (1.0 + 1e-9))
    throw std::invalid_argument("schedule: chirp rate exceeded in segment '" +
                                s.label + "'");
}
}  // namespace detail

// Integration-step tiers: chirps, swaps, and ramps resolve the fastest
// control rotation; holds and relaxation intervals are slower. The
// inversion-pulse segments get their own tier: the fastest rate there is
// the low-Q cavity linewidth (~9e7 rad/s), so they tolerate a larger step
// than the chirps, which matters because the two 1-us pulses would
// otherwise dominate the covariance-propagation cost.
struct StepTiers {
  // Swap-search resolution: the storage prefix used by the swap-duration
  // optimizer runs on this grid so the residual is smooth at the search
  // tolerance (0.1 ns).
  double fine = 0.05e-9;
  // Detuning chirps, linewidth ramps and swap windows in the full
  // schedule: the fastest rotation is the delivery detuning (6.3e8 rad/s),
  // kept below 0.16 rad per step.
  double chirp = 0.25e-9;
  // Holds at the parked detuning (3.1e8 rad/s): these carry most of the
  // schedule's duration, which makes this tier the covariance-cost lever.
  double coarse = 0.5e-9;
  // Resonant low-Q relaxation windows around the pulses: the fastest rate
  // there is the widened cavity linewidth (9.1e7 1/s).
  double relax = 2.0e-9;
  // Inversion-pulse segments: bounded by the drive Rabi rate (1.2e8 rad/s).
  double pulse = 1.0e-9;
};

// Build the full 21-part schedule. The two drive waveforms are attached
// afterwards (ControlSchedule::pulse_beta) by the caller once they are
// synthesized on the matching step grid.
inline ControlSchedule build_schedule(const ProtocolTiming& tm,
                                      const PhysicalParams& par,
                                      const StepTiers& tiers = {}) {
  const double kmin = par.kappa_min();
  const double kpul = par.kappa_pulse();
  const double dt = par.delta_target;
  const double dp = par.delta_parked;
  const double H = tiers.chirp, C = tiers.coarse, R = tiers.relax,
               P = tiers.pulse;

  auto seg = [](std::string label, double dur, double k0, double k1,
                double d0, double d1, int pulse, double step,
                bool guard = false) {
    Segment s;
    s.label = std::move(label);
    s.duration = dur;
    s.kappa0 = k0;
    s.kappa1 = k1;
    s.delta0 = d0;
    s.delta1 = d1;
    s.pulse = pulse;
    s.dt = step;
    s.kappa_guard = guard;
    return s;
  };

  ControlSchedule sch;
  sch.segments = {
      seg("p01_chirp_in", tm.t[1], kmin, kmin, dt, 0.0, 0, H),
      seg("p02_swap_in", tm.t[2], kmin, kmin, 0.0, 0.0, 0, H),
      seg("p03_chirp_park", tm.t[3], kmin, kmin, 0.0, dp, 0, H),
      seg("p04_hold", tm.t[4], kmin, kmin, dp, dp, 0, C),
      seg("p05_kappa_up", tm.t[5], kmin, kpul, dp, dp, 0, H, true),
      seg("p06_chirp_res", tm.t[6], kpul, kpul, dp, 0.0, 0, H),
      seg("p07_pulse1", tm.t[7], kpul, kpul, 0.0, 0.0, 1, P),
      seg("p08_relax", tm.t[8], kpul, kpul, 0.0, 0.0, 0, R),
      seg("p09_chirp_park", tm.t[9], kpul, kpul, 0.0, dp, 0, H),
      seg("p10_kappa_down", tm.t[10], kpul, kmin, dp, dp, 0, H, true),
      seg("p11_hold_echo", tm.t[11], kmin, kmin, dp, dp, 0, C),
      seg("p12_kappa_up", tm.t[12], kmin, kpul, dp, dp, 0, H, true),
      seg("p13_chirp_res", tm.t[13], kpul, kpul, dp, 0.0, 0, H),
      seg("p14_pulse2", tm.t[14], kpul, kpul, 0.0, 0.0, 2, P),
      seg("p15_relax", tm.t[15], kpul, kpul, 0.0, 0.0, 0, R),
      seg("p16_chirp_park", tm.t[16], kpul, kpul, 0.0, dp, 0, H),
      seg("p17_kappa_down", tm.t[17], kpul, kmin, dp, dp, 0, H, true),
      seg("p18_hold", tm.t[18], kmin, kmin, dp, dp, 0, C),
      seg("p19_chirp_res", tm.t[19], kmin, kmin, dp, 0.0, 0, H),
      seg("p20_swap_out", tm.t[20], kmin, kmin, 0.0, 0.0, 0, H),
      seg("p21_chirp_out", tm.t[21], kmin, kmin, 0.0, dt, 0, H),
  };
  sch.pulse_beta.resize(2);

  for (const auto& s : sch.segments) detail::check_chirp_rate(s, par.chirp_rate);

  // Continuity of the detuning profile across segment boundaries.
  for (std::size_t i = 1; i < sch.segments.size(); ++i)
    if (sch.segments[i - 1].delta1 != sch.segments[i].delta0)
      throw std::logic_error("schedule: detuning discontinuity at segment " +
                             sch.segments[i].label);
  return sch;
}

// Storage-only prefix (parts 1-3) used by the swap-duration search.
// include_chirps=false drops the chirp segments entirely (the idealized
// always-resonant limit).
inline ControlSchedule build_storage_schedule(double t_swap,
                                              const PhysicalParams& par,
                                              double kappa,
                                              bool include_chirps,
                                              const StepTiers& tiers = {}) {
  if (t_swap <= 0.0)
    throw std::invalid_argument("build_storage_schedule: t_swap must be > 0");
  const double F = tiers.fine;
  ControlSchedule sch;
  sch.pulse_beta.resize(2);
  Segment swap;
  swap.label = "p02_swap_in";
  swap.duration = t_swap;
  swap.kappa0 = swap.kappa1 = kappa;
  swap.dt = F;
  if (!include_chirps) {
    sch.segments = {swap};
    return sch;
  }
  Segment in;
  in.label = "p01_chirp_in";
  in.duration = par.t_chirp_target();
  in.kappa0 = in.kappa1 = kappa;
  in.delta0 = par.delta_target;
  in.delta1 = 0.0;
  in.dt = F;
  Segment park;
  park.label = "p03_chirp_park";
  park.duration = par.t_chirp_parked();
  park.kappa0 = park.kappa1 = kappa;
  park.delta0 = 0.0;
  park.delta1 = par.delta_parked;
  park.dt = F;
  sch.segments = {in, swap, park};
  for (const auto& s : sch.segments) detail::check_chirp_rate(s, par.chirp_rate);
  return sch;
}

}  // namespace spinmem
