#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fes/axon_pool.hpp"
#include "fes/error.hpp"
#include "fes/rng.hpp"
#include "fes/stim_protocol.hpp"

namespace fes {

/// Contractile side of a motor unit. Twitch amplitude and fatigue rate both
/// grow with the parent axon's diameter: large units are strong and fatigable.
struct MotorUnit {
  int axon_id = 0;
  double twitch_peak_n = 0.01;
  double contraction_time_s = 0.06;
  double fatigue_rate_per_s = 0.01;
  double recovery_rate_per_s = 0.004;
  double rate_max_hz = 40.0;
  double phi_min = 0.2;
  double recruit_threshold = 0.0; ///< voluntary drive level where the unit turns on
  double fatigue_factor = 1.0;    ///< phi, state in [phi_min, 1]
};

struct UnitConfig {
  double twitch_peak_min_n = 0.010;
  double twitch_peak_ratio = 15.0; ///< largest/smallest twitch peak
  double contraction_time_min_s = 0.040;
  double contraction_time_max_s = 0.090;
  double rate_max_hz = 40.0;
  double phi_min = 0.2;
  double fatigue_rate_max_per_s = 0.035; ///< fatigue rate of the largest unit
  double recovery_rate_per_s = 0.040;
  double recruit_range = 0.65;  ///< drive at which the last unit recruits
  double recruit_ratio = 30.0;  ///< spread of recruitment thresholds
};

struct ForceTrace {
  double sample_rate_hz = 1000.0;
  std::vector<double> samples_n;
};

/// Coarse per-unit fatigue-factor history, used to modulate MUAP amplitudes.
struct PhiTimeline {
  double dt_s = 0.1;
  std::vector<std::vector<float>> per_unit;

  double at(std::size_t unit, double t_s) const {
    if (per_unit.empty() || per_unit[unit].empty()) return 1.0;
    const auto& row = per_unit[unit];
    double x = t_s / dt_s;
    if (x <= 0.0) return row.front();
    std::size_t i = static_cast<std::size_t>(x);
    if (i + 1 >= row.size()) return row.back();
    double f = x - static_cast<double>(i);
    return row[i] * (1.0 - f) + row[i + 1] * f;
  }
};

struct ForceResult {
  ForceTrace trace;
  PhiTimeline phi;
};

/// Builds the contractile units for a pool, index-aligned with pool.axons
/// (descending diameter). Recruitment thresholds for voluntary drive follow
/// the size principle: ascending twitch peak.
inline std::vector<MotorUnit> make_units(const AxonPool& pool, const UnitConfig& cfg) {
  require_arg(!pool.axons.empty(), "pool must be nonempty");
  require_arg(cfg.twitch_peak_min_n > 0.0 && cfg.twitch_peak_ratio >= 1.0, "invalid twitch scale");
  int n = pool.size();
  std::vector<MotorUnit> units(n);
  double dmin = pool.distribution.min_um;
  double dmax = pool.distribution.max_um;
  for (int i = 0; i < n; ++i) {
    const Axon& a = pool.axons[i];
    double x = (a.diameter_um - dmin) / (dmax - dmin); // 0 = smallest possible, 1 = largest
    MotorUnit& u = units[i];
    u.axon_id = a.id;
    u.twitch_peak_n = cfg.twitch_peak_min_n * std::pow(cfg.twitch_peak_ratio, x);
    u.contraction_time_s =
        cfg.contraction_time_max_s - (cfg.contraction_time_max_s - cfg.contraction_time_min_s) * x;
    u.fatigue_rate_per_s = cfg.fatigue_rate_max_per_s * std::pow(cfg.twitch_peak_ratio, x - 1.0);
    u.recovery_rate_per_s = cfg.recovery_rate_per_s;
    u.rate_max_hz = cfg.rate_max_hz;
    u.phi_min = cfg.phi_min;
  }
  // Thresholds assigned by ascending twitch peak; the pool is stored by
  // descending diameter, so rank from the back.
  for (int i = 0; i < n; ++i) {
    double q = (n == 1) ? 1.0 : static_cast<double>(n - 1 - i) / static_cast<double>(n - 1);
    units[i].recruit_threshold =
        cfg.recruit_range * std::pow(cfg.recruit_ratio, q) / cfg.recruit_ratio;
  }
  return units;
}

/// Twitch kernel value at time t since the spike.
inline double twitch(const MotorUnit& unit, double t_s) {
  require_arg(t_s >= 0.0, "twitch time must be nonnegative");
  double x = t_s / unit.contraction_time_s;
  return unit.fatigue_factor * unit.twitch_peak_n * x * std::exp(1.0 - x);
}

/// One explicit-Euler step of the fatigue law. The equilibrium depends on the
/// firing rate, so sustained high-rate units settle near phi_min while units
/// firing slowly recover toward 1.
inline MotorUnit update_fatigue(MotorUnit unit, double rate_hz, double dt_s) {
  require_arg(rate_hz >= 0.0 && dt_s >= 0.0, "invalid fatigue update");
  double rho = rate_hz / unit.rate_max_hz;
  double phi = unit.fatigue_factor;
  double d = -unit.fatigue_rate_per_s * (phi - unit.phi_min) * rho +
             unit.recovery_rate_per_s * (1.0 - phi) * std::max(0.0, 1.0 - rho);
  unit.fatigue_factor = std::clamp(phi + dt_s * d, unit.phi_min, 1.0);
  return unit;
}

namespace detail {

/// Incremental force synthesis: twitches are scattered into the trace as
/// spikes arrive, and per-unit fatigue advances with a trailing 1 s rate
/// window. Spikes must be fed in nondecreasing step order.
class ForceEngine {
public:
  ForceEngine(std::vector<MotorUnit>& units, double sample_rate_hz, double duration_s,
              bool fatigue_enabled, double phi_timeline_dt_s = 0.1)
      : units_(units),
        fs_(sample_rate_hz),
        n_steps_(static_cast<std::int64_t>(std::llround(duration_s * sample_rate_hz))),
        fatigue_enabled_(fatigue_enabled),
        rate_window_(static_cast<std::int64_t>(std::llround(sample_rate_hz))) {
    trace_.assign(static_cast<std::size_t>(n_steps_), 0.0);
    kernels_.resize(units.size());
    for (std::size_t u = 0; u < units.size(); ++u) {
      const MotorUnit& unit = units[u];
      auto len = static_cast<std::size_t>(std::ceil(10.0 * unit.contraction_time_s * fs_));
      kernels_[u].resize(len);
      for (std::size_t j = 0; j < len; ++j) {
        double x = static_cast<double>(j) / (fs_ * unit.contraction_time_s);
        kernels_[u][j] = unit.twitch_peak_n * x * std::exp(1.0 - x);
      }
    }
    spike_steps_.resize(units.size());
    window_head_.assign(units.size(), 0);
    timeline_stride_ = std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                     std::llround(phi_timeline_dt_s * fs_)));
    phi_.dt_s = static_cast<double>(timeline_stride_) / fs_;
    phi_.per_unit.assign(units.size(), {});
    record_phi();
  }

  std::int64_t steps() const { return n_steps_; }

  /// Force accumulated at a step; complete once every spike <= step was added.
  double force_at(std::int64_t step) const {
    return step < n_steps_ ? trace_[static_cast<std::size_t>(step)] : 0.0;
  }

  void advance_to(std::int64_t step) {
    step = std::min(step, n_steps_);
    while (now_ < step) {
      if (fatigue_enabled_) {
        for (std::size_t u = 0; u < units_.size(); ++u) {
          auto& sp = spike_steps_[u];
          std::size_t& head = window_head_[u];
          while (head < sp.size() && sp[head] <= now_ - rate_window_) ++head;
          double rate = static_cast<double>(sp.size() - head);
          units_[u] = update_fatigue(units_[u], rate, 1.0 / fs_);
        }
      }
      ++now_;
      if (now_ % timeline_stride_ == 0) record_phi();
    }
  }

  /// Registers a spike of unit u at the engine's current step.
  void spike(std::size_t u, std::int64_t step) {
    advance_to(step);
    if (step >= n_steps_) return;
    spike_steps_[u].push_back(step);
    const auto& ker = kernels_[u];
    double scale = units_[u].fatigue_factor;
    std::size_t limit = std::min<std::size_t>(ker.size(), static_cast<std::size_t>(n_steps_ - step));
    double* out = trace_.data() + step;
    for (std::size_t j = 0; j < limit; ++j) out[j] += scale * ker[j];
  }

  ForceResult finish() {
    advance_to(n_steps_);
    ForceResult result;
    result.trace.sample_rate_hz = fs_;
    result.trace.samples_n = std::move(trace_);
    result.phi = std::move(phi_);
    return result;
  }

private:
  void record_phi() {
    for (std::size_t u = 0; u < units_.size(); ++u)
      phi_.per_unit[u].push_back(static_cast<float>(units_[u].fatigue_factor));
  }

  std::vector<MotorUnit>& units_;
  double fs_;
  std::int64_t n_steps_;
  bool fatigue_enabled_;
  std::int64_t rate_window_;
  std::int64_t now_ = 0;
  std::vector<double> trace_;
  std::vector<std::vector<double>> kernels_;
  std::vector<std::vector<std::int64_t>> spike_steps_;
  std::vector<std::size_t> window_head_;
  std::int64_t timeline_stride_ = 100;
  PhiTimeline phi_;
};

} // namespace detail

/// Superimposes twitches for all spikes, advancing fatigue concurrently.
/// Units are mutated (final fatigue state remains in place).
inline ForceResult force_from_spikes(const SpikeTrainSet& spikes, std::vector<MotorUnit>& units,
                                     double duration_s, double sample_rate_hz = 1000.0,
                                     bool fatigue_enabled = true) {
  require_arg(spikes.spikes.size() == units.size(), "spike trains and units are not index-aligned");
  detail::ForceEngine engine(units, sample_rate_hz, duration_s, fatigue_enabled);

  std::vector<std::pair<std::int64_t, std::uint32_t>> events;
  events.reserve(spikes.total_count());
  for (std::size_t u = 0; u < spikes.spikes.size(); ++u)
    for (double t : spikes.spikes[u])
      events.emplace_back(static_cast<std::int64_t>(std::llround(t * sample_rate_hz)),
                          static_cast<std::uint32_t>(u));
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [step, u] : events) engine.spike(u, step);
  return engine.finish();
}

/// Steady-state tetanic force with every unit firing at rate_max and phi = 1:
/// simulated plateau, averaged over the final second.
inline double mvc(const std::vector<MotorUnit>& units, double sample_rate_hz = 1000.0) {
  require_arg(!units.empty(), "unit set must be nonempty");
  std::vector<MotorUnit> fresh = units;
  for (auto& u : fresh) u.fatigue_factor = 1.0;
  double duration = 4.0;
  detail::ForceEngine engine(fresh, sample_rate_hz, duration, /*fatigue_enabled=*/false);
  double rate = fresh.front().rate_max_hz;
  std::int64_t n = engine.steps();
  for (std::int64_t k = 0;; ++k) {
    std::int64_t step = static_cast<std::int64_t>(std::llround(k * sample_rate_hz / rate));
    if (step >= n) break;
    for (std::size_t u = 0; u < fresh.size(); ++u) engine.spike(u, step);
  }
  ForceResult r = engine.finish();
  std::int64_t lo = static_cast<std::int64_t>(std::llround((duration - 1.0) * sample_rate_hz));
  double sum = 0.0;
  for (std::int64_t i = lo; i < n; ++i) sum += r.trace.samples_n[i];
  return sum / static_cast<double>(n - lo);
}

struct CalibrationConfig {
  double tolerance_frac_mvc = 0.02;
  double amplitude_max_ma = 500.0;
  int max_iterations = 44;
  double sim_duration_s = 15.0;
  double window_start_s = 5.0;
  double window_end_s = 15.0;
};

struct CalibrationResult {
  double amplitude_ma = 0.0;
  double achieved_frac_mvc = 0.0;
  bool converged = false;
  int evaluations = 0;
};

namespace detail {

inline double mean_force_window(const ForceTrace& trace, double t0, double t1) {
  std::int64_t lo = static_cast<std::int64_t>(std::llround(t0 * trace.sample_rate_hz));
  std::int64_t hi = static_cast<std::int64_t>(std::llround(t1 * trace.sample_rate_hz));
  hi = std::min<std::int64_t>(hi, static_cast<std::int64_t>(trace.samples_n.size()));
  double sum = 0.0;
  for (std::int64_t i = lo; i < hi; ++i) sum += trace.samples_n[i];
  return sum / static_cast<double>(hi - lo);
}

} // namespace detail

/// Bisection on stimulation amplitude until the mean force over the 5-15 s
/// window of a fresh trial lands within tolerance of target MVC fraction.
/// `unit_train` must be synthesized at amplitude 1 mA; currents scale linearly.
inline CalibrationResult calibrate_amplitude(const StimTrain& unit_train, const AxonPool& pool,
                                             const std::vector<MotorUnit>& units, double mvc_n,
                                             double target_frac, double dt_s,
                                             const CalibrationConfig& cfg = {}, int jobs = 1) {
  require_arg(target_frac > 0.0 && target_frac < 1.0, "target must be in (0,1)");
  require_arg(mvc_n > 0.0, "MVC must be positive");
  auto runs = pulse_runs(unit_train);

  auto evaluate = [&](double amplitude) {
    SpikeTrainSet spikes;
    spikes.spikes.resize(pool.axons.size());
    parallel_chunks(pool.axons.size(), jobs, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        spikes.spikes[i] = detail::simulate_axon_runs(
            pool.axons[i], runs, amplitude, pool.anodic_efficacy, unit_train.sample_rate_hz,
            dt_s, unit_train.size(),
            derive_seed(pool.seed, "thr-noise", static_cast<std::uint64_t>(i)));
    });
    std::vector<MotorUnit> fresh = units;
    for (auto& u : fresh) u.fatigue_factor = 1.0;
    ForceResult force = force_from_spikes(spikes, fresh, cfg.sim_duration_s);
    return detail::mean_force_window(force.trace, cfg.window_start_s, cfg.window_end_s) / mvc_n;
  };

  CalibrationResult result;
  double lo = 0.0, f_lo = 0.0;
  double hi = 1.0, f_hi = 0.0;
  double best_a = 0.0, best_err = target_frac;
  auto consider = [&](double a, double f) {
    double err = std::abs(f - target_frac);
    if (err < best_err) {
      best_err = err;
      best_a = a;
      result.achieved_frac_mvc = f;
    }
  };

  while (true) {
    f_hi = evaluate(hi);
    ++result.evaluations;
    consider(hi, f_hi);
    if (f_hi >= target_frac) break;
    lo = hi;
    f_lo = f_hi;
    hi *= 2.0;
    if (hi > cfg.amplitude_max_ma) {
      result.amplitude_ma = best_a;
      result.converged = best_err <= cfg.tolerance_frac_mvc;
      return result; // target unreachable within amplitude bounds
    }
  }
  (void)f_lo;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (best_err <= 0.25 * cfg.tolerance_frac_mvc) break;
    double mid = 0.5 * (lo + hi);
    double f_mid = evaluate(mid);
    ++result.evaluations;
    consider(mid, f_mid);
    if (f_mid < target_frac)
      lo = mid;
    else
      hi = mid;
  }
  result.amplitude_ma = best_a;
  result.converged = best_err <= cfg.tolerance_frac_mvc;
  return result;
}

struct VoluntaryConfig {
  double controller_gain_per_s = 3.0;
  double rate_min_hz = 8.0;
  /// Sustained voluntary firing stays below the tetanic rate_max used for
  /// the MVC definition (onion-skin behavior).
  double rate_ceiling_hz = 30.0;
  double isi_jitter_cv = 0.15;
  double refractory_s = 0.005;
};

struct VoluntaryResult {
  SpikeTrainSet spikes;
  ForceResult force;
  double drive_final = 0.0;
};

/// Voluntary contraction: a common-drive integral controller tracks the
/// target force, recruiting units by ascending twitch peak and rate-coding
/// them between rate_min and rate_max. Drive saturates at 1; force declines
/// only once no further compensation is available.
inline VoluntaryResult voluntary_trial(std::vector<MotorUnit>& units, double mvc_n,
                                       double target_frac, double duration_s,
                                       const VoluntaryConfig& cfg, std::uint64_t seed,
                                       double sample_rate_hz = 1000.0,
                                       bool fatigue_enabled = true) {
  require_arg(target_frac > 0.0 && target_frac <= 1.0, "target must be in (0,1]");
  require_arg(mvc_n > 0.0, "MVC must be positive");

  detail::ForceEngine engine(units, sample_rate_hz, duration_s, fatigue_enabled);
  std::int64_t n = engine.steps();
  double dt = 1.0 / sample_rate_hz;

  std::size_t m = units.size();
  std::vector<Rng> rng;
  rng.reserve(m);
  for (std::size_t u = 0; u < m; ++u) rng.emplace_back(derive_seed(seed, "vol-unit", u));

  std::vector<std::int64_t> next_fire(m, -1);
  SpikeTrainSet spikes;
  spikes.spikes.resize(m);

  double drive = 0.0;
  auto rate_of = [&](std::size_t u) {
    double thr = units[u].recruit_threshold;
    double span = std::max(1e-9, 1.0 - thr);
    double x = std::clamp((drive - thr) / span, 0.0, 1.0);
    double ceiling = std::min(cfg.rate_ceiling_hz, units[u].rate_max_hz);
    return cfg.rate_min_hz + (ceiling - cfg.rate_min_hz) * x;
  };

  for (std::int64_t step = 0; step < n; ++step) {
    engine.advance_to(step);
    double error = target_frac - engine.force_at(step) / mvc_n;
    drive = std::clamp(drive + cfg.controller_gain_per_s * error * dt, 0.0, 1.0);

    for (std::size_t u = 0; u < m; ++u) {
      if (drive <= units[u].recruit_threshold) {
        next_fire[u] = -1; // derecruited
        continue;
      }
      double rate = rate_of(u);
      if (next_fire[u] < 0) {
        // Random initial phase avoids artificial synchrony at recruitment.
        double phase = rng[u].uniform01() / rate;
        next_fire[u] = step + std::max<std::int64_t>(1, std::llround(phase * sample_rate_hz));
        continue;
      }
      if (step >= next_fire[u]) {
        engine.spike(u, step);
        spikes.spikes[u].push_back(static_cast<double>(step) * dt);
        double isi = (1.0 / rate) * std::max(0.4, 1.0 + cfg.isi_jitter_cv * rng[u].normal());
        isi = std::max(isi, cfg.refractory_s);
        next_fire[u] = step + std::max<std::int64_t>(1, std::llround(isi * sample_rate_hz));
      }
    }
  }

  VoluntaryResult result;
  result.spikes = std::move(spikes);
  result.force = engine.finish();
  result.drive_final = drive;
  return result;
}

} // namespace fes
