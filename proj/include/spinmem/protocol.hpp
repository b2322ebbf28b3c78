#pragma once
// Memory-protocol driver: swap-duration optimization, drive calibration,
// the effective-cavity-dwell fixed point, and the single- and multi-mode
// storage/retrieval runs built on the 21-part control schedule.
//
// A run stores a coherent cavity field in the spin ensemble (resonant
// swap), refocuses the inhomogeneous dephasing with two inversion pulses
// (the first echo forms while the cavity is parked off-resonance and is
// therefore silenced), and swaps the second, time-mirrored echo back into
// the cavity where it is read out after the final chirp.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spinmem/dynamics.hpp"
#include "spinmem/model.hpp"
#include "spinmem/params.hpp"
#include "spinmem/schedule.hpp"
#include "spinmem/sech.hpp"
#include "spinmem/state.hpp"

namespace spinmem {

// ---------------------------------------------------------------------------
// Trajectory sampling
// ---------------------------------------------------------------------------

struct TrajectoryPoint {
  double t = 0.0;
  double xc = 0.0, pc = 0.0;  // cavity quadrature means
  double var_sum = std::numeric_limits<double>::quiet_NaN();  // NaN: means-only
  double sx_eff = 0.0, sy_eff = 0.0;  // g-weighted transverse spin means
  double p_exc = 0.0, p_exc_eff = 0.0;
};
using Trajectory = std::vector<TrajectoryPoint>;

namespace detail {

// Append a sample; normalization of the transverse components matches
// bright_amplitude (a lossless swap maps |alpha| -> |S_perp^eff| = |alpha|).
inline void append_sample(Trajectory& traj, const EnsembleModel& model,
                          double t, const MomentState& st) {
  if (!traj.empty() && !(t > traj.back().t)) return;  // de-dup chunk borders
  TrajectoryPoint p;
  p.t = t;
  p.xc = st.mean(ix_cav_x);
  p.pc = st.mean(ix_cav_p);
  if (st.has_cov()) p.var_sum = cavity_var_sum(st.cov);
  const std::complex<double> b = bright_amplitude(model, st.mean);
  p.sx_eff = b.real();
  p.sy_eff = -b.imag();
  p.p_exc = p_exc(model, st.mean);
  p.p_exc_eff = p_exc_eff(model, st.mean);
  traj.push_back(p);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Swap-duration optimization (storage-only prefix)
// ---------------------------------------------------------------------------

struct TswapOptions {
  double kappa = -1.0;          // < 0: use kappa_min from the parameters
  bool include_chirps = true;   // false: the bare, always-resonant swap
  double tol = 0.1e-9;          // golden-section stopping width
  StepTiers tiers{};
};

// Residual cavity-field magnitude after the storage prefix (chirp to
// resonance, swap, chirp to the parked detuning) for a unit input.
inline double storage_residual(const EnsembleModel& model,
                               const PhysicalParams& par, double t_swap,
                               const TswapOptions& opt = {}) {
  const double kappa = opt.kappa >= 0.0 ? opt.kappa : par.kappa_min();
  const ControlSchedule sch = build_storage_schedule(
      t_swap, par, kappa, opt.include_chirps, opt.tiers);
  MomentState st = initial_state(model, {1.0, 0.0}, false);
  integrate(model, par, sch, st);
  return std::abs(cavity_amplitude(st.mean));
}

// Golden-section search for the swap duration that minimizes the residual
// cavity field, bracketed around the lowest-order estimate pi/(2 g_ens).
inline double optimize_tswap(const EnsembleModel& model,
                             const PhysicalParams& par,
                             const TswapOptions& opt = {}) {
  const double t0 = M_PI / (2.0 * model.g_ens());
  double a = 0.5 * t0, b = 1.5 * t0;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;

  auto f = [&](double ts) { return storage_residual(model, par, ts, opt); };
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > opt.tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double ts = 0.5 * (a + b);
  if (ts - 0.5 * t0 < 2.0 * opt.tol || 1.5 * t0 - ts < 2.0 * opt.tol)
    throw std::runtime_error(
        "optimize_tswap: minimum at bracket edge; widen the search interval");
  return ts;
}

// ---------------------------------------------------------------------------
// Inversion-pulse calibration
// ---------------------------------------------------------------------------

// The two synthesized drive waveforms (one starting from the polarized
// ground ensemble, one from the inverted ensemble) sharing a single
// calibrated envelope amplitude, on the half-step grid of the pulse
// segments.
struct CalibratedPulses {
  SechPulse shape;  // calibrated envelope (sign of the stored copy is -1)
  double a_max = 0.0;
  long nstep = 0;  // pulse-segment step count; waveforms hold 2*nstep+1
  std::vector<std::complex<double>> beta1, beta2;
  double peak_power1 = 0.0, peak_power2 = 0.0;
};

inline CalibratedPulses calibrate_protocol_pulses(const EnsembleModel& model,
                                                  const PhysicalParams& par,
                                                  const StepTiers& tiers = {},
                                                  long nstep = 0) {
  if (nstep <= 0) nstep = std::llround(par.t_pi / tiers.pulse);
  CalibratedPulses cp;
  cp.nstep = nstep;
  cp.shape.beta_s = par.beta_sech();
  cp.shape.mu = par.pulse_mu;
  cp.shape.duration = par.t_pi;
  cp.shape.sign = -1;
  const double kappa = par.kappa_pulse();
  cp.a_max =
      calibrate_pulse_amplitude(par.p_peak, cp.shape, kappa, model, par, nstep);
  cp.shape.a_max = cp.a_max;
  cp.beta1 = synthesize_drive(cp.shape, kappa, 0.0, model, par, nstep);
  SechPulse second = cp.shape;
  second.sign = +1;
  cp.beta2 = synthesize_drive(second, kappa, 0.0, model, par, nstep);
  cp.peak_power1 = peak_drive_power(cp.beta1, par);
  cp.peak_power2 = peak_drive_power(cp.beta2, par);
  return cp;
}

namespace detail {

// Attach the calibrated waveforms to a schedule, checking that each pulse
// segment's step grid matches the synthesis grid.
inline void attach_pulses(ControlSchedule& sch, const CalibratedPulses& cp) {
  for (const auto& seg : sch.segments) {
    if (seg.pulse == 0) continue;
    const long nstep = std::max<long>(1, std::llround(seg.duration / seg.dt));
    if (nstep != cp.nstep)
      throw std::invalid_argument(
          "attach_pulses: segment '" + seg.label +
          "' step grid does not match the synthesized waveforms");
  }
  sch.pulse_beta = {cp.beta1, cp.beta2};
}

inline void check_pulse_power(const CalibratedPulses& cp,
                              const PhysicalParams& par) {
  if (std::abs(cp.peak_power1 - par.p_peak) > 0.02 * par.p_peak ||
      cp.peak_power2 > 1.05 * par.p_peak) {
    std::ostringstream os;
    os << "run_memory: drive waveforms exceed the available peak power ("
       << cp.peak_power1 << " W / " << cp.peak_power2 << " W vs "
       << par.p_peak << " W)";
    throw std::runtime_error(os.str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Single-mode memory run
// ---------------------------------------------------------------------------

struct ProtocolSettings {
  double t_mem = 10e-6;
  double t_swap = 0.0;     // from optimize_tswap
  double t_cav_eff = 0.0;  // from fix_t_cav_eff
  bool with_cov = true;
  bool cov_coupling = false;
  int sample_stride = 8;
  // The low-|<a_c>| check on linewidth ramps is off by default here: the
  // discretized line's pulse residue rings far longer than a continuum
  // free-induction decay would and trips the threshold spuriously. Probe
  // runs without inversion pulses keep it on.
  bool enforce_kappa_guard = false;
  double kappa_guard_limit = 10.0;
  StepTiers tiers{};
};

struct MemoryRunResult {
  std::complex<double> alpha_out{0.0, 0.0};
  Eigen::Matrix2d cov_out;  // cavity covariance block (NaN in means-only)
  double var_sum = std::numeric_limits<double>::quiet_NaN();
  double p_exc_eff_mid = 0.0;  // plateau between the inversion pulses
  double p_exc_eff_end = 0.0;  // after the second pulse (read at t_mem)
  ProtocolTiming timing;
  Trajectory traj;
  MomentState final_state;
};

inline MemoryRunResult run_memory(
    const EnsembleModel& model, const PhysicalParams& par,
    const CalibratedPulses& pulses, std::complex<double> alpha_in,
    const ProtocolSettings& cfg,
    const std::function<void(double, const MomentState&)>& extra_observer =
        {}) {
  if (cfg.t_swap <= 0.0 || cfg.t_cav_eff <= 0.0)
    throw std::invalid_argument(
        "run_memory: t_swap and t_cav_eff must be calibrated (> 0)");
  detail::check_pulse_power(pulses, par);

  MemoryRunResult res;
  res.timing = solve_timing(cfg.t_mem, cfg.t_swap, cfg.t_cav_eff, par);
  ControlSchedule sch = build_schedule(res.timing, par, cfg.tiers);
  detail::attach_pulses(sch, pulses);

  MomentState st = initial_state(model, alpha_in, cfg.with_cov);
  IntegrateOptions opt;
  opt.cov_coupling = cfg.cov_coupling;
  opt.observer_stride = cfg.sample_stride;
  opt.enforce_kappa_guard = cfg.enforce_kappa_guard;
  opt.kappa_guard_limit = cfg.kappa_guard_limit;
  opt.observer = [&](double t, const MomentState& s) {
    detail::append_sample(res.traj, model, t, s);
    if (extra_observer) extra_observer(t, s);
  };
  integrate(model, par, sch, st, 0.0, opt);

  res.alpha_out = cavity_amplitude(st.mean);
  if (cfg.with_cov) {
    res.cov_out = st.cov.topLeftCorner<2, 2>();
    res.var_sum = cavity_var_sum(st.cov);
  } else {
    res.cov_out.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  const double t_mid = cfg.t_mem / 2.0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : res.traj) {
    const double d = std::abs(p.t - t_mid);
    if (d < best) {
      best = d;
      res.p_exc_eff_mid = p.p_exc_eff;
    }
  }
  res.p_exc_eff_end = res.traj.empty() ? 0.0 : res.traj.back().p_exc_eff;
  res.final_state = std::move(st);
  return res;
}

// ---------------------------------------------------------------------------
// Effective cavity-dwell time: revival fixed point
// ---------------------------------------------------------------------------

struct RevivalFixOptions {
  double t_mem = 10e-6;
  double t_swap = 0.0;
  double guess = 0.0;        // <= 0: start from t_swap / 2
  double probe_alpha = 1.0;  // probe amplitude for the differential pair
  double window_pad = 0.5e-6;  // extension of the final hold
  double tol = 1e-9;
  int max_iter = 4;
  int sample_stride = 4;
  StepTiers tiers{};
};

namespace detail {

// Bright-mode transverse amplitude |S_perp^eff| of the probe run minus the
// probe-free run, sampled over the extended final hold. The subtraction
// removes the input-independent residue left by the inversion pulses, so
// the revival of the stored field stands out cleanly.
struct RevivalTrace {
  std::vector<double> t;
  std::vector<double> q;
};

inline RevivalTrace revival_trace(const EnsembleModel& model,
                                  const PhysicalParams& par,
                                  const CalibratedPulses& pulses,
                                  const RevivalFixOptions& opt, double guess,
                                  double t_from) {
  ProtocolTiming tm = solve_timing(opt.t_mem, opt.t_swap, guess, par);
  ControlSchedule sch = build_schedule(tm, par, opt.tiers);
  attach_pulses(sch, pulses);
  sch.segments.resize(18);  // stop before the retrieval chirp
  sch.segments.back().duration += opt.window_pad;

  auto sample = [&](std::complex<double> alpha,
                    std::vector<std::complex<double>>& out,
                    std::vector<double>* ts) {
    MomentState st = initial_state(model, alpha, false);
    IntegrateOptions io;
    io.observer_stride = opt.sample_stride;
    io.enforce_kappa_guard = false;  // pulse residue; see ProtocolSettings
    io.observer = [&](double t, const MomentState& s) {
      if (t < t_from) return;
      out.push_back(bright_amplitude(model, s.mean));
      if (ts) ts->push_back(t);
    };
    integrate(model, par, sch, st, 0.0, io);
  };

  RevivalTrace tr;
  std::vector<std::complex<double>> b0, b1;
  sample({0.0, 0.0}, b0, nullptr);
  sample({opt.probe_alpha, 0.0}, b1, &tr.t);
  if (b0.size() != b1.size())
    throw std::logic_error("revival_trace: mismatched sample grids");
  tr.q.resize(b1.size());
  for (std::size_t i = 0; i < b1.size(); ++i) tr.q[i] = std::abs(b1[i] - b0[i]);
  return tr;
}

}  // namespace detail

// Locate the spin revival in a simulation whose retrieval swap is replaced
// by an extended off-resonant hold, and return the fixed-point dwell time:
// the revival lands at (t_mem - 2*guess) + dwell, so one refinement step
// recovers the dwell exactly and a second confirms stationarity.
inline double fix_t_cav_eff(const EnsembleModel& model,
                            const PhysicalParams& par,
                            const CalibratedPulses& pulses,
                            const RevivalFixOptions& opt) {
  if (opt.t_swap <= 0.0)
    throw std::invalid_argument("fix_t_cav_eff: t_swap must be > 0");
  double guess = opt.guess > 0.0 ? opt.guess : opt.t_swap / 2.0;
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    const double t_echo_g = opt.t_mem - 2.0 * guess;
    const double t_from = t_echo_g - 0.05e-6;
    const detail::RevivalTrace tr =
        detail::revival_trace(model, par, pulses, opt, guess, t_from);
    if (tr.q.size() < 5)
      throw std::runtime_error("fix_t_cav_eff: revival window too short");

    std::size_t imax = 0;
    for (std::size_t i = 1; i < tr.q.size(); ++i)
      if (tr.q[i] > tr.q[imax]) imax = i;
    const double edge = std::max(tr.q.front(), tr.q.back());
    if (imax == 0 || imax + 1 == tr.q.size() || tr.q[imax] < 2.0 * edge)
      throw std::runtime_error(
          "fix_t_cav_eff: no revival peak found in the extended hold");

    // Parabolic refinement on the (uniform) sample grid.
    const double y0 = tr.q[imax - 1], y1 = tr.q[imax], y2 = tr.q[imax + 1];
    const double denom = y0 - 2.0 * y1 + y2;
    double shift = 0.0;
    if (denom < 0.0) shift = 0.5 * (y0 - y2) / denom;
    const double h = tr.t[imax] - tr.t[imax - 1];
    const double t_rev = tr.t[imax] + shift * h;

    const double refined = t_rev - t_echo_g;
    if (refined <= 0.0)
      throw std::runtime_error(
          "fix_t_cav_eff: revival precedes the refocusing interval");
    if (std::abs(refined - guess) <= opt.tol) return refined;
    guess = refined;
  }
  throw std::runtime_error(
      "fix_t_cav_eff: revival fixed point did not converge");
}

// ---------------------------------------------------------------------------
// Multi-mode storage and retrieval
// ---------------------------------------------------------------------------

struct MultimodeSettings {
  double t_mem = 12e-6;
  double spacing = 0.29e-6;
  double initial_wait = 0.19e-6;
  double t_swap = 0.0;
  double t_cav_eff = 0.0;
  bool with_cov = true;
  bool cov_coupling = false;
  int sample_stride = 8;
  bool enforce_kappa_guard = false;  // see ProtocolSettings
  double kappa_guard_limit = 10.0;
  StepTiers tiers{};
};

struct MultimodeResult {
  std::vector<std::complex<double>> alpha_out;  // first-in, first-out order
  std::vector<double> var_sum;                  // cavity 2*sigma^2 per read
  std::vector<double> read_times;
  ProtocolTiming timing;
  Trajectory traj;
};

namespace detail {

struct TimedEvent {
  double t = 0.0;
  // 0 = replace cavity state with a fresh coherent field, 1 = reset the
  // cavity to vacuum, 2 = read out the retrieved state.
  int kind = 0;
  std::complex<double> alpha{0.0, 0.0};
  int slot = -1;
};

// Replace the cavity state: quadrature means from alpha, unit vacuum
// covariance, no cavity-spin correlations; the spin block is untouched.
inline void replace_cavity(MomentState& st, std::complex<double> alpha) {
  st.mean(ix_cav_x) = std::sqrt(2.0) * alpha.real();
  st.mean(ix_cav_p) = std::sqrt(2.0) * alpha.imag();
  if (st.has_cov()) {
    st.cov.row(ix_cav_x).setZero();
    st.cov.row(ix_cav_p).setZero();
    st.cov.col(ix_cav_x).setZero();
    st.cov.col(ix_cav_p).setZero();
    st.cov(ix_cav_x, ix_cav_x) = 1.0;
    st.cov(ix_cav_p, ix_cav_p) = 1.0;
  }
}

}  // namespace detail

// Sequential storage of several coherent fields in one ensemble and
// first-in first-out retrieval at the time-mirrored instants. Between the
// per-slot swap windows the cavity idles at the delivery detuning with a
// lower Q; each storage slot begins by replacing the cavity state with the
// fresh input, and each retrieval slot begins from a vacuum-reset cavity.
inline MultimodeResult run_multimode(const EnsembleModel& model,
                                     const PhysicalParams& par,
                                     const CalibratedPulses& pulses,
                                     const std::vector<std::complex<double>>&
                                         alphas,
                                     const MultimodeSettings& cfg) {
  const int K = static_cast<int>(alphas.size());
  if (K < 1) throw std::invalid_argument("run_multimode: need >= 1 input");
  if (cfg.t_swap <= 0.0 || cfg.t_cav_eff <= 0.0)
    throw std::invalid_argument(
        "run_multimode: t_swap and t_cav_eff must be calibrated (> 0)");

  // Degenerate single-slot case: identical to the single-mode run.
  if (K == 1 && cfg.initial_wait == 0.0) {
    ProtocolSettings ps;
    ps.t_mem = cfg.t_mem;
    ps.t_swap = cfg.t_swap;
    ps.t_cav_eff = cfg.t_cav_eff;
    ps.with_cov = cfg.with_cov;
    ps.cov_coupling = cfg.cov_coupling;
    ps.sample_stride = cfg.sample_stride;
    ps.enforce_kappa_guard = cfg.enforce_kappa_guard;
    ps.kappa_guard_limit = cfg.kappa_guard_limit;
    ps.tiers = cfg.tiers;
    MemoryRunResult one = run_memory(model, par, pulses, alphas[0], ps);
    MultimodeResult res;
    res.alpha_out = {one.alpha_out};
    res.var_sum = {one.var_sum};
    res.read_times = {cfg.t_mem};
    res.timing = one.timing;
    res.traj = std::move(one.traj);
    return res;
  }

  detail::check_pulse_power(pulses, par);
  const double tdt = par.t_chirp_target();
  const double tk = par.t_kappa;
  const double sp = cfg.spacing;
  const double w0 = cfg.initial_wait;
  if (w0 < tk)
    throw std::invalid_argument(
        "run_multimode: initial wait shorter than the first linewidth ramp");
  if (sp < cfg.t_swap + 2.0 * tdt + 2.0 * tk + 10e-9)
    throw std::invalid_argument(
        "run_multimode: slot spacing too small; swap windows overlap");

  // Pulse placement: the echo of the field stored at s refocuses at
  // (t_mem - 2*tc) + s, so centering the slot train maps each stored slot
  // onto the mirror image of the opposite slot's swap window.
  const double tc_multi =
      cfg.t_cav_eff + w0 + 0.5 * (K - 1) * sp;
  MultimodeResult res;
  res.timing = solve_timing(cfg.t_mem, cfg.t_swap, tc_multi, par);
  const ControlSchedule base = build_schedule(res.timing, par, cfg.tiers);

  const double d_store = res.timing.start_of(5);   // parts 1-4 window
  const double d_tail_start = res.timing.start_of(18);  // parts 18-21 window
  const double cyc = 2.0 * tdt + cfg.t_swap;  // chirp in, swap, chirp out
  const double kmin = par.kappa_min();
  const double kidl = par.kappa_idle();
  const double dtg = par.delta_target;
  const double dpk = par.delta_parked;
  const double H = cfg.tiers.chirp, C = cfg.tiers.coarse;
  // Idle segments sit at the delivery detuning, which rotates ~2x faster
  // than the parked holds the coarse tier is sized for.
  const double CI = std::min(H, 0.25e-9);
  const double t_tp = (dtg - dpk) / par.chirp_rate;  // target->parked chirp

  const double last_store_end = w0 + (K - 1) * sp + cyc + tk;
  if (last_store_end + t_tp + tk > d_store)
    throw std::invalid_argument(
        "run_multimode: storage slots do not fit before the first inversion "
        "pulse; reduce the mode count or spacing, or extend t_mem");

  auto seg = [](std::string label, double dur, double k0, double k1,
                double d0, double d1, double step, bool guard = false) {
    Segment s;
    s.label = std::move(label);
    s.duration = dur;
    s.kappa0 = k0;
    s.kappa1 = k1;
    s.delta0 = d0;
    s.delta1 = d1;
    s.dt = step;
    s.kappa_guard = guard;
    return s;
  };

  std::vector<Segment> segs;
  std::vector<std::pair<std::size_t, detail::TimedEvent>> events;

  // --- storage phase (replaces parts 1-4) ---
  double cursor = 0.0;
  for (int k = 0; k < K; ++k) {
    const double tk_start = w0 + k * sp;  // chirp-in start of slot k
    const double lead = tk_start - tk - cursor;
    if (lead > 0.0)
      segs.push_back(seg("mm_idle", lead, kidl, kidl, dtg, dtg, CI));
    segs.push_back(
        seg("mm_ramp_hiQ", tk, kidl, kmin, dtg, dtg, H, true));
    detail::TimedEvent ev;
    ev.t = tk_start;
    ev.kind = 0;
    ev.alpha = alphas[static_cast<std::size_t>(k)];
    ev.slot = k;
    events.emplace_back(segs.size(), ev);
    segs.push_back(seg("mm_chirp_in", tdt, kmin, kmin, dtg, 0.0, H));
    segs.push_back(seg("mm_swap_in", cfg.t_swap, kmin, kmin, 0.0, 0.0, H));
    segs.push_back(seg("mm_chirp_back", tdt, kmin, kmin, 0.0, dtg, H));
    segs.push_back(seg("mm_ramp_loQ", tk, kmin, kidl, dtg, dtg, H, true));
    cursor = tk_start + cyc + tk;
  }
  // Transition to the parked hold expected by part 5.
  const double fill = d_store - cursor - t_tp - tk;
  segs.push_back(seg("mm_idle", fill, kidl, kidl, dtg, dtg, CI));
  segs.push_back(seg("mm_chirp_park", t_tp, kidl, kidl, dtg, dpk, H));
  segs.push_back(seg("mm_ramp_hiQ", tk, kidl, kmin, dpk, dpk, H, true));

  // --- refocusing backbone (parts 5-17 unchanged) ---
  for (int j = 5; j <= 17; ++j)
    segs.push_back(base.segments[static_cast<std::size_t>(j - 1)]);

  // --- retrieval phase (replaces parts 18-21), the mirror image ---
  cursor = d_tail_start;
  const double head_hold =
      (cfg.t_mem - (w0 + (K - 1) * sp + cyc + tk)) - (t_tp + tk) - cursor;
  if (head_hold < 0.0)
    throw std::invalid_argument(
        "run_multimode: retrieval slots overlap the second inversion pulse");
  segs.push_back(seg("mm_hold_parked", head_hold, kmin, kmin, dpk, dpk, C));
  segs.push_back(seg("mm_ramp_loQ", tk, kmin, kidl, dpk, dpk, H, true));
  segs.push_back(seg("mm_chirp_target", t_tp, kidl, kidl, dpk, dtg, H));
  cursor = cfg.t_mem - (w0 + (K - 1) * sp + cyc + tk);
  for (int k = 0; k < K; ++k) {
    // Slot k leaves at the mirror of slot (K-1-k)'s storage window.
    const double mirror_of = w0 + (K - 1 - k) * sp;
    const double ramp_start = cfg.t_mem - mirror_of - cyc - tk;
    const double lead = ramp_start - cursor;
    if (lead > 0.0)
      segs.push_back(seg("mm_idle", lead, kidl, kidl, dtg, dtg, CI));
    detail::TimedEvent ev;
    ev.t = ramp_start;
    ev.kind = 1;  // vacuum reset before pulling the next echo
    ev.slot = k;
    events.emplace_back(segs.size(), ev);
    segs.push_back(seg("mm_ramp_hiQ", tk, kidl, kmin, dtg, dtg, H, true));
    segs.push_back(seg("mm_chirp_in", tdt, kmin, kmin, dtg, 0.0, H));
    segs.push_back(seg("mm_swap_out", cfg.t_swap, kmin, kmin, 0.0, 0.0, H));
    segs.push_back(seg("mm_chirp_back", tdt, kmin, kmin, 0.0, dtg, H));
    detail::TimedEvent rd;
    rd.t = ramp_start + tk + cyc;
    rd.kind = 2;
    rd.slot = k;
    events.emplace_back(segs.size(), rd);
    segs.push_back(seg("mm_ramp_loQ", tk, kmin, kidl, dtg, dtg, H, true));
    cursor = ramp_start + tk + cyc + tk;
  }
  const double tail = cfg.t_mem - cursor;
  if (tail > 0.0)
    segs.push_back(seg("mm_idle", tail, kidl, kidl, dtg, dtg, CI));

  // --- integrate chunk by chunk, applying events between chunks ---
  MomentState st = initial_state(model, {0.0, 0.0}, cfg.with_cov);
  res.alpha_out.assign(static_cast<std::size_t>(K), {0.0, 0.0});
  res.var_sum.assign(static_cast<std::size_t>(K),
                     std::numeric_limits<double>::quiet_NaN());
  res.read_times.assign(static_cast<std::size_t>(K), 0.0);

  IntegrateOptions opt;
  opt.cov_coupling = cfg.cov_coupling;
  opt.observer_stride = cfg.sample_stride;
  opt.enforce_kappa_guard = cfg.enforce_kappa_guard;
  opt.kappa_guard_limit = cfg.kappa_guard_limit;
  opt.observer = [&](double t, const MomentState& s) {
    detail::append_sample(res.traj, model, t, s);
  };

  std::size_t next_event = 0;
  std::size_t begin = 0;
  double t = 0.0;
  std::sort(events.begin(), events.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  while (begin < segs.size()) {
    std::size_t end = segs.size();
    if (next_event < events.size()) end = events[next_event].first;
    if (end > begin) {
      ControlSchedule chunk;
      chunk.segments.assign(segs.begin() + static_cast<long>(begin),
                            segs.begin() + static_cast<long>(end));
      chunk.pulse_beta = {pulses.beta1, pulses.beta2};
      t = integrate(model, par, chunk, st, t, opt);
      begin = end;
    }
    while (next_event < events.size() && events[next_event].first == begin) {
      const detail::TimedEvent& ev = events[next_event].second;
      if (std::abs(ev.t - t) > 1e-12)
        throw std::logic_error("run_multimode: event time drifted off grid");
      if (ev.kind == 0) {
        detail::replace_cavity(st, ev.alpha);
      } else if (ev.kind == 1) {
        detail::replace_cavity(st, {0.0, 0.0});
      } else {
        const auto slot = static_cast<std::size_t>(ev.slot);
        res.alpha_out[slot] = cavity_amplitude(st.mean);
        if (cfg.with_cov) res.var_sum[slot] = cavity_var_sum(st.cov);
        res.read_times[slot] = t;
      }
      ++next_event;
    }
    if (begin == segs.size()) break;
  }
  return res;
}

// Amplitude cross-talk matrix from one-hot unit-input runs: entry (j, k)
// is the magnitude of retrieved slot j when slot k alone carries a unit
// field, with the input-free background run subtracted. The cross-talk
// figure is the largest off-diagonal entry.
inline Eigen::MatrixXd multimode_crosstalk_matrix(
    const EnsembleModel& model, const PhysicalParams& par,
    const CalibratedPulses& pulses, int n_slots, MultimodeSettings cfg) {
  cfg.with_cov = false;
  const auto zero = run_multimode(
      model, par, pulses,
      std::vector<std::complex<double>>(static_cast<std::size_t>(n_slots)),
      cfg);
  Eigen::MatrixXd x(n_slots, n_slots);
  for (int k = 0; k < n_slots; ++k) {
    std::vector<std::complex<double>> in(static_cast<std::size_t>(n_slots));
    in[static_cast<std::size_t>(k)] = {1.0, 0.0};
    const auto one = run_multimode(model, par, pulses, in, cfg);
    for (int j = 0; j < n_slots; ++j)
      x(j, k) = std::abs(one.alpha_out[static_cast<std::size_t>(j)] -
                         zero.alpha_out[static_cast<std::size_t>(j)]);
  }
  return x;
}

}  // namespace spinmem
