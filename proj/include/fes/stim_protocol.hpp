#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fes/error.hpp"

namespace fes {

enum class Protocol { lf, hf };

inline const char* protocol_name(Protocol p) { return p == Protocol::lf ? "LF" : "HF"; }

/// Conventional low-frequency stimulation: one biphasic rectangular pulse per
/// period (positive phase immediately followed by an equal negative phase).
struct LfParams {
  double base_frequency_hz = 30.0;
  double pulse_width_s = 500e-6;
  double amplitude_ma = 5.22;

  void validate() const {
    require_arg(base_frequency_hz > 0.0, "LF base frequency must be positive");
    require_arg(pulse_width_s > 0.0, "LF pulse width must be positive");
    require_arg(2.0 * pulse_width_s <= 1.0 / base_frequency_hz,
                "LF biphasic pulse does not fit in one period");
    require_arg(amplitude_ma >= 0.0, "LF amplitude must be nonnegative");
  }
};

/// Continuous kilohertz stimulation: bursts at burst_frequency, each burst a
/// block of positive carrier pulses followed by an equal block of negative
/// pulses. Defaults give a 10 kHz carrier at 80 % duty cycle.
struct HfParams {
  double burst_frequency_hz = 30.0;
  double pulse_width_s = 80e-6;
  double pulse_interval_s = 20e-6;
  double amplitude_ma = 3.55;

  double carrier_period_s() const { return pulse_width_s + pulse_interval_s; }
  double carrier_frequency_hz() const { return 1.0 / carrier_period_s(); }
  double nominal_duty_cycle() const { return pulse_width_s / carrier_period_s(); }

  /// Pulses per polarity per burst; the burst holds 2*N pulses.
  std::int64_t pulses_per_polarity() const {
    double slots = std::floor(1.0 / (burst_frequency_hz * carrier_period_s()) + 1e-9);
    return static_cast<std::int64_t>(slots) / 2;
  }

  void validate() const {
    require_arg(burst_frequency_hz > 0.0, "HF burst frequency must be positive");
    require_arg(pulse_width_s > 0.0 && pulse_interval_s >= 0.0 && carrier_period_s() > 0.0,
                "HF carrier timing invalid");
    require_arg(amplitude_ma >= 0.0, "HF amplitude must be nonnegative");
    require_arg(pulses_per_polarity() >= 1,
                "HF burst cannot hold one charge-balanced pulse pair");
  }
};

/// Sample-accurate stimulation current waveform.
struct StimTrain {
  double sample_rate_hz = 0.0;
  Protocol protocol = Protocol::lf;
  double duration_s = 0.0;
  std::vector<double> samples_ma;

  std::int64_t size() const { return static_cast<std::int64_t>(samples_ma.size()); }
};

/// One rectangle of constant nonzero current, in sample indices.
struct PulseRun {
  std::int64_t begin = 0;
  std::int64_t length = 0;
  double amplitude_ma = 0.0;
};

namespace detail {

inline std::int64_t round_samples(double x) { return static_cast<std::int64_t>(std::llround(x)); }

inline std::int64_t exact_samples(double seconds, double rate_hz, const char* what) {
  double x = seconds * rate_hz;
  std::int64_t n = round_samples(x);
  require_arg(std::abs(x - static_cast<double>(n)) <= 1e-6 * std::max(1.0, std::abs(x)),
              std::string(what) + " is not an integer number of samples at this rate");
  return n;
}

} // namespace detail

inline StimTrain synthesize_lf(const LfParams& params, double duration_s, double sample_rate_hz) {
  params.validate();
  require_arg(duration_s > 0.0, "duration must be positive");
  require_arg(sample_rate_hz >= 10.0 / params.pulse_width_s,
              "sample rate too low to represent the LF pulse (need >= 10 samples per phase)");

  std::int64_t n = detail::round_samples(duration_s * sample_rate_hz);
  std::int64_t phase = detail::round_samples(params.pulse_width_s * sample_rate_hz);

  StimTrain train;
  train.sample_rate_hz = sample_rate_hz;
  train.protocol = Protocol::lf;
  train.duration_s = duration_s;
  train.samples_ma.assign(static_cast<std::size_t>(n), 0.0);

  double a = params.amplitude_ma;
  for (std::int64_t k = 0;; ++k) {
    std::int64_t start =
        detail::round_samples(static_cast<double>(k) * sample_rate_hz / params.base_frequency_hz);
    if (start + 2 * phase > n) break;
    for (std::int64_t i = 0; i < phase; ++i) train.samples_ma[start + i] = a;
    for (std::int64_t i = 0; i < phase; ++i) train.samples_ma[start + phase + i] = -a;
  }
  return train;
}

inline StimTrain synthesize_hf(const HfParams& params, double duration_s, double sample_rate_hz) {
  params.validate();
  require_arg(duration_s > 0.0, "duration must be positive");

  std::int64_t spc = detail::exact_samples(params.carrier_period_s(), sample_rate_hz,
                                           "HF carrier period");
  std::int64_t on = detail::exact_samples(params.pulse_width_s, sample_rate_hz, "HF pulse width");
  require_arg(on >= 1 && spc >= on, "sample rate cannot resolve the HF carrier");

  std::int64_t n = detail::round_samples(duration_s * sample_rate_hz);
  std::int64_t per_polarity = params.pulses_per_polarity();
  std::int64_t extent = 2 * per_polarity * spc;

  StimTrain train;
  train.sample_rate_hz = sample_rate_hz;
  train.protocol = Protocol::hf;
  train.duration_s = duration_s;
  train.samples_ma.assign(static_cast<std::size_t>(n), 0.0);

  double a = params.amplitude_ma;
  // Only complete bursts are emitted; a truncated burst would break charge balance.
  for (std::int64_t b = 0;; ++b) {
    std::int64_t start =
        detail::round_samples(static_cast<double>(b) * sample_rate_hz / params.burst_frequency_hz);
    if (start + extent > n) break;
    for (std::int64_t p = 0; p < 2 * per_polarity; ++p) {
      double value = (p < per_polarity) ? a : -a;
      std::int64_t ps = start + p * spc;
      for (std::int64_t i = 0; i < on; ++i) train.samples_ma[ps + i] = value;
    }
  }
  return train;
}

struct ChargeBalance {
  double net_ma_s = 0.0;       ///< signed charge, milliamp-seconds
  double total_abs_ma_s = 0.0; ///< total rectified charge
  bool flagged = false;        ///< |net| exceeds 1e-9 of total
};

inline ChargeBalance verify_charge_balance(const StimTrain& train) {
  double net = 0.0, total = 0.0;
  for (double s : train.samples_ma) {
    net += s;
    total += std::abs(s);
  }
  ChargeBalance result;
  result.net_ma_s = net / train.sample_rate_hz;
  result.total_abs_ma_s = total / train.sample_rate_hz;
  result.flagged = std::abs(result.net_ma_s) > 1e-9 * result.total_abs_ma_s;
  return result;
}

/// Fraction of samples carrying nonzero current.
inline double measure_duty_cycle(const StimTrain& train) {
  require_arg(!train.samples_ma.empty(), "duty cycle of an empty train is undefined");
  std::int64_t on = 0;
  for (double s : train.samples_ma)
    if (s != 0.0) ++on;
  return static_cast<double>(on) / static_cast<double>(train.samples_ma.size());
}

/// Run-length view of the nonzero rectangles; the fast simulation path
/// consumes this instead of raw samples.
inline std::vector<PulseRun> pulse_runs(const StimTrain& train) {
  std::vector<PulseRun> runs;
  const auto& s = train.samples_ma;
  std::int64_t n = train.size();
  std::int64_t i = 0;
  while (i < n) {
    if (s[i] == 0.0) {
      ++i;
      continue;
    }
    std::int64_t j = i + 1;
    while (j < n && s[j] == s[i]) ++j;
    runs.push_back({i, j - i, s[i]});
    i = j;
  }
  return runs;
}

} // namespace fes
