#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "fes/error.hpp"
#include "fes/parallel.hpp"
#include "fes/rng.hpp"
#include "fes/stim_protocol.hpp"

namespace fes {

/// One motor axon modelled as a leaky integrator with hard threshold, reset
/// and absolute refractory period. Depolarization efficacy (gain) grows with
/// diameter, so larger axons accumulate to threshold in fewer pulses.
struct Axon {
  int id = 0;
  double diameter_um = 0.0;
  double gain_mv_per_ma_s = 0.0;
  double tau_m_s = 0.040;
  double threshold_mv = 1.0;
  double refractory_s = 0.005;
  /// After each spike the effective threshold is redrawn as
  /// threshold * (1 - u * threshold_noise_frac), u ~ U[0,1). The first
  /// crossing always uses the base threshold, so recruitment order and
  /// pulse counts to the first spike stay exact.
  double threshold_noise_frac = 0.0;
  double membrane_v_mv = 0.0; // state, 0 at rest
};

struct DiameterDistribution {
  double min_um = 8.0;
  double max_um = 20.0;
  /// 0 gives uniform diameters; larger values skew toward the minimum
  /// (many small axons, few large ones).
  double exponent = 1.2;
};

struct AxonPhysiology {
  /// Gain of the largest possible axon (diameter == distribution max),
  /// in mV per (mA * s) of rectified current.
  double gain_scale_mv_per_ma_s = 55.0;
  double tau_m_s = 0.012;
  double threshold_mv = 1.0;
  /// Long lumped refractory period standing in for the slow recovery
  /// processes that keep sustained firing rates physiological.
  double refractory_s = 0.030;
  /// Efficacy of the negative (anodic) phase relative to the cathodic phase.
  /// 0 means pure rectification; kilohertz pulses excite on both phases at
  /// reduced efficacy.
  double anodic_efficacy = 0.9;
  /// Per-spike threshold redraw span (fraction of threshold, downward only).
  double threshold_noise_frac = 0.18;
  /// Optional static per-axon threshold jitter (standard deviation, mV).
  double threshold_jitter_sd = 0.0;
};

struct AxonPool {
  std::vector<Axon> axons; // ordered by descending diameter
  std::uint64_t seed = 0;
  DiameterDistribution distribution;
  double anodic_efficacy = 0.0;

  int size() const { return static_cast<int>(axons.size()); }
};

/// Spike times per axon, seconds, strictly increasing.
struct SpikeTrainSet {
  std::vector<std::vector<double>> spikes;

  std::size_t total_count() const {
    std::size_t k = 0;
    for (const auto& s : spikes) k += s.size();
    return k;
  }
};

inline AxonPool build_pool(int n, const DiameterDistribution& dist, const AxonPhysiology& phys,
                           std::uint64_t seed) {
  require_arg(n >= 1, "pool must contain at least one axon");
  require_arg(dist.min_um < dist.max_um && dist.min_um > 0.0, "invalid diameter range");
  require_arg(dist.exponent >= 0.0, "diameter exponent must be nonnegative");

  Rng rng(derive_seed(seed, "axon-pool"));
  std::vector<double> diameters(n);
  for (int i = 0; i < n; ++i) {
    // Stratified draw: strictly increasing in i, so diameters are distinct.
    double u = (static_cast<double>(i) + rng.uniform(0.05, 0.95)) / static_cast<double>(n);
    double v = std::pow(u, 1.0 + dist.exponent);
    diameters[i] = dist.min_um + (dist.max_um - dist.min_um) * v;
  }
  std::sort(diameters.begin(), diameters.end(), std::greater<double>());

  AxonPool pool;
  pool.seed = seed;
  pool.distribution = dist;
  pool.anodic_efficacy = phys.anodic_efficacy;
  pool.axons.resize(n);
  for (int i = 0; i < n; ++i) {
    Axon& a = pool.axons[i];
    a.id = i;
    a.diameter_um = diameters[i];
    a.gain_mv_per_ma_s = phys.gain_scale_mv_per_ma_s * (diameters[i] / dist.max_um);
    a.tau_m_s = phys.tau_m_s;
    a.threshold_mv = phys.threshold_mv;
    a.refractory_s = phys.refractory_s;
    a.threshold_noise_frac = phys.threshold_noise_frac;
    if (phys.threshold_jitter_sd > 0.0) {
      a.threshold_mv =
          std::max(0.1 * phys.threshold_mv, rng.normal(phys.threshold_mv, phys.threshold_jitter_sd));
    }
  }
  return pool;
}

namespace detail {

/// Leaky-integrate-and-fire sweep over constant-current runs. The per-substep
/// map V -> rho*V + c is applied in closed form across each run; inside a run
/// V is monotone toward the fixed point, so threshold crossings are resolved
/// by solving for the first substep at or above threshold.
class LifSweep {
public:
  LifSweep(const Axon& axon, double anodic_efficacy, double dt_s, Rng* noise_rng = nullptr)
      : dt_(dt_s),
        tau_(axon.tau_m_s),
        rho_(std::isfinite(axon.tau_m_s) && axon.tau_m_s > 0.0 ? std::exp(-dt_s / axon.tau_m_s)
                                                               : 1.0),
        gain_(axon.gain_mv_per_ma_s),
        eta_(anodic_efficacy),
        base_threshold_(axon.threshold_mv),
        threshold_(axon.threshold_mv),
        noise_frac_(axon.threshold_noise_frac),
        noise_rng_(noise_rng),
        refractory_steps_(static_cast<std::int64_t>(std::ceil(axon.refractory_s / dt_s - 1e-9))) {}

  double rectified(double amplitude_ma) const {
    return amplitude_ma >= 0.0 ? amplitude_ma : -eta_ * amplitude_ma;
  }

  /// Advances over [t, t+steps) of zero input.
  void decay(std::int64_t steps) {
    if (steps <= 0 || rho_ == 1.0) return;
    v_ *= std::exp(-static_cast<double>(steps) * dt_ / tau_);
  }

  /// Advances over a constant-current run, appending spike substep indices
  /// (relative to run start) to on_spike. Returns after the full run elapsed.
  template <typename OnSpike>
  void run(std::int64_t start_step, std::int64_t steps, double amplitude_ma, OnSpike&& on_spike) {
    double c = gain_ * rectified(amplitude_ma) * dt_;
    std::int64_t pos = start_step;
    std::int64_t end = start_step + steps;
    if (refractory_until_ >= end && c >= 0.0) {
      // Entire run inside refractory: membrane held at reset.
      return;
    }
    if (refractory_until_ > pos) {
      pos = refractory_until_;
      v_ = 0.0;
    }
    if (c <= 0.0) {
      decay(end - pos);
      return;
    }
    while (pos < end) {
      std::int64_t remaining = end - pos;
      double v_end = value_after(v_, c, remaining);
      if (v_end < threshold_) {
        v_ = v_end;
        return;
      }
      std::int64_t j = first_crossing(v_, c, remaining);
      on_spike(pos + j);
      v_ = 0.0;
      if (noise_rng_ && noise_frac_ > 0.0)
        threshold_ = base_threshold_ * (1.0 - noise_frac_ * noise_rng_->uniform01());
      pos = pos + j + refractory_steps_;
      if (pos >= end) {
        refractory_until_ = pos;
        return;
      }
    }
  }

  double membrane() const { return v_; }
  void reset() {
    v_ = 0.0;
    refractory_until_ = 0;
  }
  std::int64_t refractory_steps() const { return refractory_steps_; }

private:
  double value_after(double v, double c, std::int64_t k) const {
    if (rho_ == 1.0) return v + c * static_cast<double>(k);
    double p = c / (1.0 - rho_);
    return p + (v - p) * std::pow(rho_, static_cast<double>(k));
  }

  std::int64_t first_crossing(double v, double c, std::int64_t k_max) const {
    std::int64_t guess;
    if (rho_ == 1.0) {
      guess = static_cast<std::int64_t>(std::ceil((threshold_ - v) / c));
    } else {
      double p = c / (1.0 - rho_);
      double ratio = (threshold_ - p) / (v - p); // both negative when p > threshold > v
      guess = static_cast<std::int64_t>(std::ceil(std::log(ratio) / std::log(rho_)));
    }
    guess = std::clamp<std::int64_t>(guess, 1, k_max);
    // Floating-point guard: walk to the true first crossing.
    while (guess > 1 && value_after(v, c, guess - 1) >= threshold_) --guess;
    while (guess < k_max && value_after(v, c, guess) < threshold_) ++guess;
    return guess;
  }

  double dt_;
  double tau_;
  double rho_;
  double gain_;
  double eta_;
  double base_threshold_;
  double threshold_;
  double noise_frac_;
  Rng* noise_rng_;
  std::int64_t refractory_steps_;
  double v_ = 0.0;
  std::int64_t refractory_until_ = 0;
};

inline std::int64_t substeps_per_sample(double sample_rate_hz, double dt_s) {
  double r = 1.0 / (dt_s * sample_rate_hz);
  std::int64_t k = static_cast<std::int64_t>(std::llround(r));
  require_arg(k >= 1 && std::abs(r - static_cast<double>(k)) <= 1e-6,
              "dt must divide the train sample period");
  return k;
}

/// Core sweep shared by simulate_pool and the amplitude-calibration path:
/// iterates the run-length representation with an amplitude scale factor.
inline std::vector<double> simulate_axon_runs(const Axon& axon, const std::vector<PulseRun>& runs,
                                              double amplitude_scale, double anodic_efficacy,
                                              double sample_rate_hz, double dt_s,
                                              std::int64_t total_samples,
                                              std::uint64_t noise_seed = 0) {
  std::int64_t sub = substeps_per_sample(sample_rate_hz, dt_s);
  Rng noise(noise_seed);
  LifSweep sweep(axon, anodic_efficacy, dt_s, axon.threshold_noise_frac > 0.0 ? &noise : nullptr);
  std::vector<double> spikes;
  std::int64_t cursor = 0; // in samples
  for (const PulseRun& r : runs) {
    if (r.begin > cursor) {
      // Gap: pure decay, cannot cross threshold.
      sweep.run(cursor * sub, (r.begin - cursor) * sub, 0.0, [](std::int64_t) {});
    }
    sweep.run(r.begin * sub, r.length * sub, r.amplitude_ma * amplitude_scale,
              [&](std::int64_t step) { spikes.push_back(static_cast<double>(step) * dt_s); });
    cursor = r.begin + r.length;
  }
  if (cursor < total_samples)
    sweep.run(cursor * sub, (total_samples - cursor) * sub, 0.0, [](std::int64_t) {});
  return spikes;
}

} // namespace detail

/// Simulates every axon of the pool against the train. Axons are independent;
/// work is chunked deterministically, so results do not depend on `jobs`.
inline SpikeTrainSet simulate_pool(const AxonPool& pool, const StimTrain& train, double dt_s,
                                   int jobs = 1) {
  require_arg(dt_s > 0.0, "dt must be positive");
  auto runs = pulse_runs(train);
  if (!runs.empty()) {
    std::int64_t min_len = runs.front().length;
    for (const auto& r : runs) min_len = std::min(min_len, r.length);
    double min_width_s = static_cast<double>(min_len) / train.sample_rate_hz;
    require_arg(dt_s <= min_width_s / 4.0 + 1e-12,
                "dt must be at most a quarter of the pulse width");
  }
  detail::substeps_per_sample(train.sample_rate_hz, dt_s); // validates divisibility

  SpikeTrainSet result;
  result.spikes.resize(pool.axons.size());
  parallel_chunks(pool.axons.size(), jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      result.spikes[i] = detail::simulate_axon_runs(
          pool.axons[i], runs, 1.0, pool.anodic_efficacy, train.sample_rate_hz, dt_s,
          train.size(), derive_seed(pool.seed, "thr-noise", static_cast<std::uint64_t>(i)));
    }
  });
  return result;
}

/// Number of depolarizing carrier pulses until the axon first reaches
/// threshold under HF stimulation, or nullopt if the steady-state membrane
/// peak stays below threshold.
inline std::optional<std::int64_t> pulses_to_first_spike(const Axon& axon, const HfParams& params,
                                                         double amplitude_ma,
                                                         double anodic_efficacy = 0.0) {
  params.validate();
  require_arg(amplitude_ma >= 0.0, "amplitude must be nonnegative");
  if (amplitude_ma == 0.0) return std::nullopt;

  // Fixed internal resolution: 8 substeps per pulse width.
  double dt = params.pulse_width_s / 8.0;
  std::int64_t on_steps = 8;
  std::int64_t gap_steps =
      static_cast<std::int64_t>(std::llround(params.pulse_interval_s / dt));
  std::int64_t per_polarity = params.pulses_per_polarity();
  double burst_period_steps = 1.0 / (params.burst_frequency_hz * dt);

  detail::LifSweep sweep(axon, anodic_efficacy, dt);
  bool depolarizing_negative = anodic_efficacy > 0.0;

  std::int64_t pulse_count = 0;
  double previous_peak = -1.0;
  constexpr std::int64_t kMaxBursts = 20000;
  for (std::int64_t burst = 0; burst < kMaxBursts; ++burst) {
    std::int64_t burst_start =
        static_cast<std::int64_t>(std::llround(static_cast<double>(burst) * burst_period_steps));
    double peak = 0.0;
    std::int64_t cursor = burst_start;
    for (std::int64_t p = 0; p < 2 * per_polarity; ++p) {
      double amp = (p < per_polarity) ? amplitude_ma : -amplitude_ma;
      bool counts = amp > 0.0 || depolarizing_negative;
      if (counts) ++pulse_count;
      bool fired = false;
      sweep.run(cursor, on_steps, amp, [&](std::int64_t) { fired = true; });
      if (fired) return pulse_count;
      peak = std::max(peak, sweep.membrane());
      cursor += on_steps;
      sweep.run(cursor, gap_steps, 0.0, [](std::int64_t) {});
      cursor += gap_steps;
    }
    // Decay over the remainder of the burst period.
    std::int64_t next_start = static_cast<std::int64_t>(
        std::llround(static_cast<double>(burst + 1) * burst_period_steps));
    if (next_start > cursor) sweep.run(cursor, next_start - cursor, 0.0, [](std::int64_t) {});
    if (peak < axon.threshold_mv && peak - previous_peak <= 1e-12 * axon.threshold_mv)
      return std::nullopt; // steady state below threshold
    previous_peak = peak;
  }
  return std::nullopt;
}

/// Phase-locking of pooled spikes to lock_frequency: |sum exp(i*2*pi*f*t)| / K.
inline std::optional<double> vector_strength(const SpikeTrainSet& spikes, double lock_frequency_hz) {
  double c = 0.0, s = 0.0;
  std::size_t k = 0;
  for (const auto& train : spikes.spikes) {
    for (double t : train) {
      double a = 6.283185307179586476925286766559 * lock_frequency_hz * t;
      c += std::cos(a);
      s += std::sin(a);
      ++k;
    }
  }
  if (k == 0) return std::nullopt;
  return std::sqrt(c * c + s * s) / static_cast<double>(k);
}

} // namespace fes
