#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fes/emg_synth.hpp"
#include "fes/error.hpp"
#include "fes/muscle_force.hpp"
#include "fes/spline.hpp"

namespace fes {

/// Analysis time periods in seconds. The first period is always 5-15 s (the
/// normalization window); the initial 5 s are excluded from every period.
struct PeriodSet {
  std::vector<std::pair<double, double>> periods;

  void validate(double trial_duration_s) const {
    require_arg(!periods.empty(), "period set must be nonempty");
    require_arg(periods.front().first == 5.0 && periods.front().second == 15.0,
                "first period must be 5-15 s");
    double prev_end = 0.0;
    for (const auto& [a, b] : periods) {
      require_arg(a < b, "period bounds must be increasing");
      require_arg(a >= prev_end, "periods must not overlap");
      require_arg(b <= trial_duration_s + 1e-9, "period exceeds trial duration");
      prev_end = b;
    }
  }
};

/// Default period boundaries per force level. The 40 % set uses the known
/// boundaries (5-15, 15-50, 50-80, 80-120, 120-165); the other levels split
/// the remainder after 5-15 s into five equal periods.
inline PeriodSet make_default_periods(double level_frac, double trial_duration_s) {
  PeriodSet set;
  if (std::abs(level_frac - 0.40) < 1e-9) {
    set.periods = {{5, 15}, {15, 50}, {50, 80}, {80, 120}, {120, 165}};
  } else {
    set.periods.emplace_back(5.0, 15.0);
    int n = 5;
    double span = (trial_duration_s - 15.0) / n;
    for (int i = 0; i < n; ++i)
      set.periods.emplace_back(15.0 + i * span, 15.0 + (i + 1) * span);
  }
  set.validate(trial_duration_s);
  return set;
}

/// Moving-average force series: window means emitted every step.
struct SmoothedForce {
  double window_s = 1.0;
  double step_s = 0.5;
  std::vector<double> values;

  double center_time(std::size_t i) const {
    return static_cast<double>(i) * step_s + window_s / 2.0;
  }
};

inline SmoothedForce smooth_force(const ForceTrace& trace, double window_s = 1.0,
                                  double step_s = 0.5) {
  require_arg(window_s > 0.0 && step_s > 0.0, "invalid smoothing parameters");
  std::int64_t n = static_cast<std::int64_t>(trace.samples_n.size());
  std::int64_t win = static_cast<std::int64_t>(std::llround(window_s * trace.sample_rate_hz));
  std::int64_t step = static_cast<std::int64_t>(std::llround(step_s * trace.sample_rate_hz));
  require_arg(n >= win && win >= 1 && step >= 1, "trace shorter than one smoothing window");

  SmoothedForce out;
  out.window_s = window_s;
  out.step_s = step_s;
  for (std::int64_t start = 0; start + win <= n; start += step) {
    double sum = 0.0;
    for (std::int64_t i = start; i < start + win; ++i) sum += trace.samples_n[i];
    out.values.push_back(sum / static_cast<double>(win));
  }
  return out;
}

/// Mean of the smoothed series per period; membership by window center time,
/// half-open intervals so no sample lands in two periods.
inline std::vector<double> period_average(const SmoothedForce& series, const PeriodSet& set) {
  std::vector<double> means;
  means.reserve(set.periods.size());
  for (const auto& [a, b] : set.periods) {
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < series.values.size(); ++i) {
      double c = series.center_time(i);
      if (c >= a && c < b) {
        sum += series.values[i];
        ++count;
      }
    }
    require_arg(count > 0, "empty analysis period");
    means.push_back(sum / static_cast<double>(count));
  }
  return means;
}

/// Mean force over the last period, as % MVC.
inline double residual_force(const SmoothedForce& series, const PeriodSet& set, double mvc_n) {
  require_arg(mvc_n > 0.0, "MVC must be positive");
  PeriodSet last;
  last.periods = {set.periods.front(), set.periods.back()};
  auto means = period_average(series, last);
  return 100.0 * means.back() / mvc_n;
}

/// Mean over consecutive non-overlapping 1 s segments of per-segment RMS;
/// the trailing partial second is dropped.
inline double segment_rms(const float* x, std::int64_t n, double fs_hz, double t0, double t1) {
  require_arg(t1 - t0 >= 1.0 - 1e-9, "RMS period must be at least 1 s");
  std::int64_t seg = static_cast<std::int64_t>(std::llround(fs_hz));
  std::int64_t lo = static_cast<std::int64_t>(std::llround(t0 * fs_hz));
  std::int64_t hi = std::min<std::int64_t>(static_cast<std::int64_t>(std::llround(t1 * fs_hz)), n);
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::int64_t s = lo; s + seg <= hi; s += seg) {
    double acc = 0.0;
    for (std::int64_t i = s; i < s + seg; ++i)
      acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    sum += std::sqrt(acc / static_cast<double>(seg));
    ++count;
  }
  require_arg(count > 0, "period holds no complete 1 s segment");
  return sum / static_cast<double>(count);
}

/// Per-period muscle activation of a grid record: per-channel segment RMS,
/// averaged over all channels.
inline std::vector<double> emg_period_rms(const EmgGridRecord& rec, const PeriodSet& set) {
  std::vector<double> out;
  out.reserve(set.periods.size());
  int channels = rec.layout.channels();
  for (const auto& [a, b] : set.periods) {
    double sum = 0.0;
    for (int ch = 0; ch < channels; ++ch)
      sum += segment_rms(rec.channel(ch), rec.n_samples, rec.sample_rate_hz, a, b);
    out.push_back(sum / channels);
  }
  return out;
}

/// Divides every period value by the initial (5-15 s) value.
inline std::vector<double> normalized_rms(const std::vector<double>& per_period) {
  require_arg(!per_period.empty(), "empty RMS series");
  require_arg(per_period.front() > 0.0, "initial-period RMS must be positive");
  std::vector<double> out(per_period.size());
  for (std::size_t i = 0; i < per_period.size(); ++i) out[i] = per_period[i] / per_period.front();
  return out;
}

struct SpatialRmsMap {
  int rows = 8, cols = 16;
  int factor = 10;
  std::vector<double> base;         ///< rows x cols, row-major
  std::vector<double> interpolated; ///< (rows*factor) x (cols*factor)
};

/// Per-channel RMS over a window arranged on the grid, densified by a factor
/// of 10 per axis with a natural bicubic spline. Interpolated values may
/// overshoot between nodes; raw values are preserved here and only clamped
/// for display.
inline SpatialRmsMap spatial_rms_map(const EmgGridRecord& rec, double t0, double t1,
                                     int factor = 10) {
  require_arg(t1 - t0 >= 1.0 - 1e-9, "spatial map window must be at least 1 s");
  SpatialRmsMap map;
  map.rows = rec.layout.rows;
  map.cols = rec.layout.cols;
  map.factor = factor;
  map.base.resize(static_cast<std::size_t>(map.rows) * map.cols);
  std::int64_t lo = static_cast<std::int64_t>(std::llround(t0 * rec.sample_rate_hz));
  std::int64_t hi =
      std::min<std::int64_t>(static_cast<std::int64_t>(std::llround(t1 * rec.sample_rate_hz)),
                             rec.n_samples);
  require_arg(hi > lo, "spatial map window outside record");
  for (int ch = 0; ch < rec.layout.channels(); ++ch) {
    const float* x = rec.channel(ch);
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i)
      acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    map.base[ch] = std::sqrt(acc / static_cast<double>(hi - lo));
  }
  map.interpolated = spline_densify_grid(map.base, map.rows, map.cols, factor);
  return map;
}

} // namespace fes
