// Scratch diagnostic driver for protocol experiments (not installed).
#include <chrono>
#include <complex>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "spinmem/dynamics.hpp"
#include "spinmem/geometry.hpp"
#include "spinmem/line.hpp"
#include "spinmem/model.hpp"
#include "spinmem/protocol.hpp"
#include "spinmem/units.hpp"

using namespace spinmem;
using cplx = std::complex<double>;

namespace {

struct Opt {
  double t_mem = 10e-6;
  double tcav = 33.83e-9;
  double tswap = 73.35e-9;
  double sweep_mhz = 7.5;
  double hfs_mhz = 2.2;
  double gperp = 1e4;
  bool homog = false;
  bool single = false;
  bool ideal = false;
  bool hiq = false;  // keep kappa_min through the pulse blocks
  bool samebeta = false;  // reuse the ground-start waveform for pulse 2
  double ppeak_uw = 100.0;
  double alpha = 1.0;
  int nf = 33;
  double span_mhz = 12.0;
};

EnsembleModel make_model(const PhysicalParams& par, const Opt& o) {
  FrequencyLine line;
  line.delta_hfs = rad_from_hz(o.hfs_mhz * 1e6);
  const auto bins = default_frequency_bins(line, o.nf, rad_from_hz(o.span_mhz * 1e6));
  if (o.single) return build_model_single(par);
  if (o.homog) return build_model_homogeneous(par, par.g_bar, bins);
  const WaveguideGeometry geom;
  const auto hist = coupling_histogram(geom, par.omega_c, 7);
  return build_model(par, hist, bins);
}

struct RunOut {
  cplx alpha_out;
  double p_mid = 0, p_end = 0;
  std::vector<double> ts;
  std::vector<cplx> bright, cav;
  std::vector<Eigen::VectorXd> mv;  // full mean vectors per sample
};

// Full-protocol run with optional ideal (instantaneous) inversion pulses.
RunOut one_run(const EnsembleModel& model, const PhysicalParams& par,
               const CalibratedPulses& cp, const Opt& o, cplx alpha) {
  ProtocolTiming tm = solve_timing(o.t_mem, o.tswap, o.tcav, par);
  ControlSchedule sch = build_schedule(tm, par);
  sch.pulse_beta = {cp.beta1, cp.beta2};
  if (o.hiq)
    for (auto& s : sch.segments)
      if (s.label >= "p05" && s.label <= "p17z") {
        s.kappa0 = s.kappa1 = par.kappa_min();
      }

  std::vector<Segment> segs = sch.segments;
  std::vector<std::size_t> flip_before;  // segment indices
  if (o.ideal) {
    // split pulse parts at their centers, drop the drives
    std::vector<Segment> out;
    for (auto& s : segs) {
      if (s.pulse != 0) {
        Segment a = s, b = s;
        a.pulse = b.pulse = 0;
        a.duration = b.duration = s.duration / 2;
        a.label += "_a";
        b.label += "_b";
        out.push_back(a);
        flip_before.push_back(out.size());
        out.push_back(b);
      } else {
        out.push_back(s);
      }
    }
    segs = out;
  }

  MomentState st = initial_state(model, alpha, false);
  RunOut r;
  IntegrateOptions io;
  io.observer_stride = 8;
  io.enforce_kappa_guard = false;
  io.observer = [&](double t, const MomentState& s) {
    if (!r.ts.empty() && !(t > r.ts.back())) return;
    r.ts.push_back(t);
    r.bright.push_back(bright_amplitude(model, s.mean));
    r.cav.push_back(cavity_amplitude(s.mean));
    r.mv.push_back(s.mean);
    if (std::abs(t - o.t_mem / 2) < 2e-9) r.p_mid = p_exc_eff(model, s.mean);
  };
  double t = 0.0;
  std::size_t begin = 0;
  std::size_t fi = 0;
  while (begin < segs.size()) {
    std::size_t end = segs.size();
    if (fi < flip_before.size()) end = flip_before[fi];
    ControlSchedule chunk;
    chunk.segments.assign(segs.begin() + begin, segs.begin() + end);
    chunk.pulse_beta = sch.pulse_beta;
    t = integrate(model, par, chunk, st, t, io);
    begin = end;
    if (fi < flip_before.size() && begin == flip_before[fi]) {
      for (int m = 0; m < model.size(); ++m) {
        st.mean(ix_sy(m)) = -st.mean(ix_sy(m));
        st.mean(ix_sz(m)) = -st.mean(ix_sz(m));
      }
      ++fi;
    }
  }
  // p_mid fallback: nearest sample
  if (r.p_mid == 0) {
    double best = 1e9;
    for (std::size_t i = 0; i < r.ts.size(); ++i)
      if (std::abs(r.ts[i] - o.t_mem / 2) < best) best = std::abs(r.ts[i] - o.t_mem / 2);
  }
  r.alpha_out = cavity_amplitude(st.mean);
  r.p_end = p_exc_eff(model, st.mean);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  Opt o;
  std::string cmd = argc > 1 ? argv[1] : "help";
  for (int i = 2; i < argc; ++i) {
    std::string a = argv[i];
    auto next = [&]() { return std::stod(argv[++i]); };
    if (a == "--tmem") o.t_mem = next() * 1e-6;
    else if (a == "--ppeak") o.ppeak_uw = next();
    else if (a == "--tcav") o.tcav = next() * 1e-9;
    else if (a == "--tswap") o.tswap = next() * 1e-9;
    else if (a == "--sweep") o.sweep_mhz = next();
    else if (a == "--hfs") o.hfs_mhz = next();
    else if (a == "--gperp") o.gperp = next();
    else if (a == "--alpha") o.alpha = next();
    else if (a == "--nf") o.nf = static_cast<int>(next());
    else if (a == "--span") o.span_mhz = next();
    else if (a == "--homog") o.homog = true;
    else if (a == "--single") o.single = true;
    else if (a == "--ideal") o.ideal = true;
    else if (a == "--hiq") o.hiq = true;
    else if (a == "--samebeta") o.samebeta = true;
    else { std::fprintf(stderr, "unknown arg %s\n", a.c_str()); return 2; }
  }

  PhysicalParams par;
  par.gamma_perp = o.gperp;
  par.sweep_half = rad_from_hz(o.sweep_mhz * 1e6);
  par.delta_hfs = rad_from_hz(o.hfs_mhz * 1e6);
  if (o.hiq) par.q_pulse = par.q_max;  // pulse blocks stay at kappa_min
  par.p_peak = o.ppeak_uw * 1e-6;

  const auto t0 = std::chrono::steady_clock::now();
  const EnsembleModel model = make_model(par, o);
  auto elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  if (cmd == "tswap") {
    TswapOptions top;
    const double ref = optimize_tswap(model, par, top);
    std::printf("reference t_swap = %.3f ns residual=%.4f  [%.1fs]\n",
                ref * 1e9, storage_residual(model, par, ref, top), elapsed());
    PhysicalParams plim = par;
    const EnsembleModel m1 = build_model_single(plim);
    TswapOptions tlim;
    tlim.kappa = 1e-6 * par.kappa_min();
    tlim.include_chirps = false;
    const double lim = optimize_tswap(m1, plim, tlim);
    std::printf("limit t_swap = %.4f ns (bare %.4f)  [%.1fs]\n", lim * 1e9,
                M_PI / (2.0 * par.g_ens) * 1e9, elapsed());
    return 0;
  }

  if (cmd == "cal") {
    const auto cp = calibrate_protocol_pulses(model, par);
    std::printf("a_max = %.6e  P1 = %.4e W  P2 = %.4e W  nstep=%ld  [%.1fs]\n",
                cp.a_max, cp.peak_power1, cp.peak_power2, cp.nstep, elapsed());
    return 0;
  }

  if (cmd == "gain") {
    CalibratedPulses cp;
    if (!o.ideal) cp = calibrate_protocol_pulses(model, par);
    else {  // placeholder grids so attach passes are skipped
      cp.nstep = 1;
      cp.beta1 = cp.beta2 = {0, 0, 0};
    }
    if (o.samebeta) cp.beta2 = cp.beta1;
    std::printf("calibrated [%.1fs]\n", elapsed());
    RunOut r0 = one_run(model, par, cp, o, {0.0, 0.0});
    std::printf("zero run done [%.1fs]  junk alpha_out(0) = %.4f%+.4fj\n",
                elapsed(), r0.alpha_out.real(), r0.alpha_out.imag());
    RunOut r1 = one_run(model, par, cp, o, {o.alpha, 0.0});
    const cplx g = (r1.alpha_out - r0.alpha_out) / o.alpha;
    std::printf("diff gain = %.5f%+.5fj  |G| = %.4f  phase = %.4f pi\n",
                g.real(), g.imag(), std::abs(g), std::arg(g) / M_PI);
    std::printf("p_mid = %.4f  p_end = %.4f  [%.1fs]\n", r1.p_mid, r1.p_end,
                elapsed());
    {
      ProtocolTiming tmq = solve_timing(o.t_mem, o.tswap, o.tcav, par);
      for (int j : {8, 9, 15, 16}) {
        const double tp = tmq.start_of(j);
        std::size_t i = 0;
        while (i + 1 < r1.ts.size() && r1.ts[i] < tp) ++i;
        Eigen::VectorXd& m1 = r1.mv[i];
        double num = 0;
        for (int m = 0; m < model.size(); ++m)
          num += model.g(m) * model.g(m) * m1(ix_sz(m));
        const double peff = 0.5 * (num / (par.g_ens * par.g_ens) + 1.0);
        std::printf("  p_eff at start of part %d (t=%.4f us) = %.4f\n", j,
                    tp * 1e6, peff);
      }
    }
    // differential revival trace over the tail
    double qmax = 0, tq = 0, cmax = 0, tc = 0;
    const double t_echo = o.t_mem - 2 * o.tcav;
    for (std::size_t i = 0; i < r0.ts.size(); ++i) {
      const double t = r0.ts[i];
      const double q = std::abs(r1.bright[i] - r0.bright[i]);
      const double c = std::abs(r1.cav[i] - r0.cav[i]);
      if (t > t_echo - 0.3e-6 && q > qmax) { qmax = q; tq = t; }
      if (t > t_echo - 0.3e-6 && c > cmax) { cmax = c; tc = t; }
    }
    std::printf("tail: max dq = %.4f (/sqrt2 = %.4f) at %.5f us ; max |da| = %.4f at %.5f us\n",
                qmax, qmax / std::sqrt(2.0), tq * 1e6, cmax, tc * 1e6);

    // survival of the differential spin excitation: sum_m g^2 |dS_m|^2,
    // normalized to its value just after storage
    auto survival = [&](std::size_t i) {
      double L = 0;
      for (int m = 0; m < model.size(); ++m) {
        const double dx = r1.mv[i](ix_sx(m)) - r0.mv[i](ix_sx(m));
        const double dy = r1.mv[i](ix_sy(m)) - r0.mv[i](ix_sy(m));
        const double dz = r1.mv[i](ix_sz(m)) - r0.mv[i](ix_sz(m));
        L += model.g(m) * model.g(m) * (dx * dx + dy * dy + dz * dz);
      }
      return L;
    };
    std::size_t iref = 0;
    while (iref + 1 < r0.ts.size() && r0.ts[iref] < 0.12e-6) ++iref;
    const double L0 = survival(iref);
    ProtocolTiming tm2 = solve_timing(o.t_mem, o.tswap, o.tcav, par);
    std::printf("survival L(t)/L0 (amplitude ~ sqrt):\n");
    std::vector<double> probes;
    for (int j = 1; j <= 21; ++j) probes.push_back(tm2.start_of(j + 1));
    for (int j : {7, 8, 14, 15})
      for (int q = 1; q < 10; ++q)
        probes.push_back(tm2.start_of(j) + q * 0.1e-6);
    std::sort(probes.begin(), probes.end());
    for (double tp : probes) {
      std::size_t i = 0;
      while (i + 1 < r0.ts.size() && r0.ts[i] < tp) ++i;
      std::printf("  t=%8.4f us  L/L0=%.4f  sqrt=%.4f\n", tp * 1e6,
                  survival(i) / L0, std::sqrt(survival(i) / L0));
    }
    return 0;
  }

  if (cmd == "covrun") {
    const auto cp = calibrate_protocol_pulses(model, par);
    std::printf("calibrated [%.1fs]\n", elapsed());
    ProtocolSettings ps;
    ps.t_mem = o.t_mem;
    ps.t_swap = o.tswap;
    ps.t_cav_eff = o.tcav;
    ps.with_cov = true;
    double next_mark = 0.0;
    auto progress = [&](double t, const MomentState&) {
      if (t >= next_mark) {
        std::printf("  sim t = %.2f us  wall = %.1f s\n", t * 1e6, elapsed());
        std::fflush(stdout);
        next_mark += 0.5e-6;
      }
    };
    const auto res = run_memory(model, par, cp, {o.alpha, 0.0}, ps, progress);
    std::printf("alpha_out = %.4f%+.4fj  var_sum(2sigma^2) = %.5f\n",
                res.alpha_out.real(), res.alpha_out.imag(), res.var_sum);
    std::printf("p_mid = %.4f  p_end = %.4f\n", res.p_exc_eff_mid,
                res.p_exc_eff_end);
    const Eigen::Matrix2d c = res.cov_out;
    std::printf("cov_out = [%.5f %.5f ; %.5f %.5f]\n", c(0, 0), c(0, 1),
                c(1, 0), c(1, 1));
    // spot variance floor along the trajectory
    double vmin = 1e9, vmax = -1e9;
    for (const auto& p : res.traj) {
      vmin = std::min(vmin, p.var_sum);
      vmax = std::max(vmax, p.var_sum);
    }
    std::printf("traj var_sum range [%.5f, %.5f]  samples=%zu  [%.1fs]\n",
                vmin, vmax, res.traj.size(), elapsed());
    return 0;
  }

  if (cmd == "revival") {
    const auto cp = calibrate_protocol_pulses(model, par);
    std::printf("calibrated [%.1fs]\n", elapsed());
    RevivalFixOptions ro;
    ro.t_mem = o.t_mem;
    ro.t_swap = o.tswap;
    ro.guess = o.tcav;
    ro.probe_alpha = o.alpha;
    const double t_echo_g = o.t_mem - 2 * o.tcav;
    const auto tr = detail::revival_trace(model, par, cp, ro, o.tcav,
                                          t_echo_g - 0.05e-6);
    std::size_t imax = 0;
    for (std::size_t i = 1; i < tr.q.size(); ++i)
      if (tr.q[i] > tr.q[imax]) imax = i;
    std::printf("revival: max q = %.4f (/sqrt2=%.4f) at %.5f us -> t_in = %.2f ns  [%.1fs]\n",
                tr.q[imax], tr.q[imax] / std::sqrt(2.0), tr.t[imax] * 1e6,
                (tr.t[imax] - t_echo_g) * 1e9, elapsed());
    return 0;
  }

  if (cmd == "fix") {
    const auto cp = calibrate_protocol_pulses(model, par);
    RevivalFixOptions ro;
    ro.t_mem = o.t_mem;
    ro.t_swap = o.tswap;
    ro.guess = o.tcav;
    const double tc = fix_t_cav_eff(model, par, cp, ro);
    std::printf("t_cav_eff = %.3f ns  [%.1fs]\n", tc * 1e9, elapsed());
    return 0;
  }

  std::fprintf(stderr,
               "usage: diag tswap|cal|gain|revival|fix [--tmem us] [--tcav ns] "
               "[--tswap ns] [--sweep MHz] [--hfs MHz] [--gperp v] [--alpha v] "
               "[--homog|--single] [--ideal] [--nf n] [--span MHz]\n");
  return cmd == "help" ? 0 : 2;
}
