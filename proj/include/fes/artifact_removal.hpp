#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "fes/emg_synth.hpp"
#include "fes/error.hpp"
#include "fes/parallel.hpp"
#include "fes/rng.hpp"

namespace fes {

struct LfRemovalParams {
  double stim_frequency_hz = 30.0;
  double search_margin_s = 2.5e-3;
  double replace_window_s = 5.0e-3;

  void validate() const {
    require_arg(stim_frequency_hz > 0.0, "stimulation frequency must be positive");
    require_arg(replace_window_s < 1.0 / stim_frequency_hz,
                "replacement window must be shorter than the interstimulus interval");
    require_arg(search_margin_s >= 0.0, "search margin must be nonnegative");
  }
};

struct HfRemovalParams {
  double window_s = 0.5;
  double step_s = 0.5;
  int group = 8; ///< consecutive windows per processing block (4 s at defaults)
  int max_shift_samples = 10;

  void validate() const {
    require_arg(window_s > 0.0 && group >= 2, "invalid HF removal window/group");
    require_arg(step_s == window_s, "only non-overlapping sliding windows are supported");
    require_arg(max_shift_samples >= 0, "invalid alignment range");
  }
};

/// Peak-based LF artifact event detection. The first event is the absolute
/// peak within the first interstimulus interval; each subsequent event is the
/// absolute peak within prev + 1/f, give or take the search margin.
inline std::vector<double> detect_lf_artifacts(const float* x, std::int64_t n, double fs_hz,
                                               const LfRemovalParams& params) {
  params.validate();
  double interval = fs_hz / params.stim_frequency_hz; // samples
  require_arg(static_cast<double>(n) > interval, "record shorter than one interstimulus interval");

  auto abs_peak = [&](std::int64_t lo, std::int64_t hi) {
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min(hi, n);
    std::int64_t best = lo;
    double best_v = -1.0;
    for (std::int64_t i = lo; i < hi; ++i) {
      double v = std::abs(static_cast<double>(x[i]));
      if (v > best_v) {
        best_v = v;
        best = i;
      }
    }
    return best;
  };

  std::vector<double> events;
  std::int64_t margin = static_cast<std::int64_t>(std::llround(params.search_margin_s * fs_hz));
  std::int64_t peak = abs_peak(0, static_cast<std::int64_t>(interval));
  events.push_back(static_cast<double>(peak) / fs_hz);
  while (true) {
    double expected = static_cast<double>(peak) + interval;
    if (expected >= static_cast<double>(n)) break;
    std::int64_t center = static_cast<std::int64_t>(std::llround(expected));
    peak = abs_peak(center - margin, center + margin + 1);
    events.push_back(static_cast<double>(peak) / fs_hz);
  }
  return events;
}

struct LfRemovalReport {
  std::vector<int> events_per_channel;
  std::vector<std::vector<double>> event_times_s; ///< per channel
};

/// Replaces a window centered on every detected artifact with a seeded random
/// slice of that channel's rest-state baseline. Samples outside the windows
/// are untouched.
inline std::pair<EmgGridRecord, LfRemovalReport>
remove_lf(const EmgGridRecord& record, const LfRemovalParams& params,
          const EmgGridRecord& baseline, std::uint64_t seed, int jobs = 1) {
  params.validate();
  require(baseline.layout.rows == record.layout.rows &&
              baseline.layout.cols == record.layout.cols && baseline.n_samples > 0,
          ErrorCategory::data, "baseline record missing or incompatible");

  std::int64_t win = static_cast<std::int64_t>(std::llround(params.replace_window_s *
                                                            record.sample_rate_hz));
  require(baseline.n_samples >= win, ErrorCategory::data, "baseline shorter than one window");

  EmgGridRecord out = record;
  out.label = EmgLabel::clean;
  int channels = record.layout.channels();
  LfRemovalReport report;
  report.events_per_channel.assign(channels, 0);
  report.event_times_s.resize(channels);

  // Slice choices drawn up-front per channel so results are independent of jobs.
  std::vector<std::uint64_t> channel_seed(channels);
  {
    Rng rng(derive_seed(seed, "lf-removal"));
    for (int ch = 0; ch < channels; ++ch) channel_seed[ch] = rng.next_u64();
  }

  parallel_chunks(static_cast<std::size_t>(channels), jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t ch = b; ch < e; ++ch) {
      auto events = detect_lf_artifacts(record.channel(static_cast<int>(ch)), record.n_samples,
                                        record.sample_rate_hz, params);
      report.events_per_channel[ch] = static_cast<int>(events.size());
      report.event_times_s[ch] = events;
      Rng rng(channel_seed[ch]);
      float* o = out.channel(static_cast<int>(ch));
      const float* base = baseline.channel(static_cast<int>(ch));
      for (double t : events) {
        std::int64_t center = static_cast<std::int64_t>(std::llround(t * record.sample_rate_hz));
        std::int64_t start = center - win / 2;
        std::int64_t slice =
            static_cast<std::int64_t>(rng.uniform_index(baseline.n_samples - win + 1));
        for (std::int64_t j = 0; j < win; ++j) {
          std::int64_t idx = start + j;
          if (idx < 0 || idx >= record.n_samples) continue;
          o[idx] = base[slice + j];
        }
      }
    }
  });
  return {out, report};
}

namespace detail {

inline double dot_rotated(const std::vector<double>& x, const std::vector<double>& t, int shift) {
  // <x, rotate(t, shift)> where rotate delays t by shift samples (circular).
  std::size_t n = x.size();
  double acc = 0.0;
  std::size_t src = (shift >= 0) ? n - static_cast<std::size_t>(shift)
                                 : static_cast<std::size_t>(-shift);
  for (std::size_t i = 0; i < n; ++i) {
    acc += x[i] * t[src];
    if (++src == n) src = 0;
  }
  return acc;
}

} // namespace detail

struct AlignResult {
  std::vector<double> cleaned;
  int shift = 0;
  double gain = 0.0;
};

/// Least-squares fit of the template to the segment over integer circular
/// shifts in [-max_shift, max_shift]; subtracts gain * shifted template.
inline AlignResult align_and_subtract(const std::vector<double>& segment,
                                      const std::vector<double>& tmpl, int max_shift = 10) {
  require_arg(segment.size() == tmpl.size() && !segment.empty(),
              "segment and template must have equal nonzero length");
  double tt = 0.0;
  for (double v : tmpl) tt += v * v;

  AlignResult result;
  result.cleaned = segment;
  if (tt <= 0.0) return result;

  double best_score = -1.0;
  for (int k = -max_shift; k <= max_shift; ++k) {
    double xt = detail::dot_rotated(segment, tmpl, k);
    double score = xt * xt; // MSE minimized <=> |<x,T_k>| maximized (||T_k|| constant)
    if (score > best_score) {
      best_score = score;
      result.shift = k;
      result.gain = xt / tt;
    }
  }
  std::size_t n = segment.size();
  std::size_t src = (result.shift >= 0) ? n - static_cast<std::size_t>(result.shift)
                                        : static_cast<std::size_t>(-result.shift);
  for (std::size_t i = 0; i < n; ++i) {
    result.cleaned[i] = segment[i] - result.gain * tmpl[src];
    if (++src == n) src = 0;
  }
  return result;
}

/// Spike-triggered-average template over the segments of one block: segments
/// are aligned to the first one (integer circular shift), then averaged.
/// Returns nullopt when fewer than two full segments are available.
inline std::optional<std::vector<double>> extract_hf_template(const std::vector<double>& block,
                                                              double fs_hz,
                                                              const HfRemovalParams& params) {
  params.validate();
  std::size_t win = static_cast<std::size_t>(std::llround(params.window_s * fs_hz));
  std::size_t segments = block.size() / win;
  if (segments < 2) return std::nullopt;
  segments = std::min<std::size_t>(segments, static_cast<std::size_t>(params.group));

  std::vector<double> reference(block.begin(), block.begin() + win);
  std::vector<double> tmpl(win, 0.0);
  for (std::size_t i = 0; i < win; ++i) tmpl[i] = reference[i];

  std::vector<double> seg(win);
  for (std::size_t s = 1; s < segments; ++s) {
    std::copy(block.begin() + s * win, block.begin() + (s + 1) * win, seg.begin());
    int best_shift = 0;
    double best = -1.0;
    for (int k = -params.max_shift_samples; k <= params.max_shift_samples; ++k) {
      double d = detail::dot_rotated(reference, seg, k);
      if (std::abs(d) > best) {
        best = std::abs(d);
        best_shift = k;
      }
    }
    // Undo the estimated delay before averaging.
    std::size_t n = win;
    std::size_t src = (best_shift >= 0) ? n - static_cast<std::size_t>(best_shift)
                                        : static_cast<std::size_t>(-best_shift);
    for (std::size_t i = 0; i < n; ++i) {
      tmpl[i] += seg[src];
      if (++src == n) src = 0;
    }
  }
  for (double& v : tmpl) v /= static_cast<double>(segments);
  return tmpl;
}

struct OutlierResult {
  std::vector<double> values;
  int replaced = 0;
  bool all_outliers = false;
};

/// Replaces samples outside mean +/- 3*std (statistics computed once on the
/// input) with the average of the nearest preceding and following non-outlier
/// samples; boundary outliers take the single nearest non-outlier.
inline OutlierResult smooth_outliers(const std::vector<double>& v) {
  require_arg(!v.empty(), "vector must be nonempty");
  std::size_t n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  double sd = (n > 1) ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  double lo = mean - 3.0 * sd, hi = mean + 3.0 * sd;

  OutlierResult result;
  result.values = v;
  std::vector<char> ok(n);
  bool any_ok = false;
  for (std::size_t i = 0; i < n; ++i) {
    ok[i] = (v[i] >= lo && v[i] <= hi);
    any_ok |= ok[i];
  }
  if (!any_ok) {
    result.all_outliers = true;
    return result;
  }
  std::vector<std::int64_t> prev_ok(n, -1), next_ok(n, -1);
  std::int64_t last = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) last = static_cast<std::int64_t>(i);
    prev_ok[i] = last;
  }
  last = -1;
  for (std::size_t i = n; i-- > 0;) {
    if (ok[i]) last = static_cast<std::int64_t>(i);
    next_ok[i] = last;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (ok[i]) continue;
    double replacement;
    if (prev_ok[i] >= 0 && next_ok[i] >= 0)
      replacement = 0.5 * (v[prev_ok[i]] + v[next_ok[i]]);
    else if (prev_ok[i] >= 0)
      replacement = v[prev_ok[i]];
    else
      replacement = v[next_ok[i]];
    result.values[i] = replacement;
    ++result.replaced;
  }
  return result;
}

struct HfRemovalReport {
  std::vector<int> blocks_processed;   ///< per channel
  std::vector<int> segments_processed; ///< per channel
  std::vector<int> outliers_replaced;  ///< per channel
  std::vector<char> trailing_passthrough; ///< per channel: tail left unmodified
};

/// Template-subtraction pipeline: per channel, per 4 s block: extract the STA
/// template, align-and-subtract it from each 0.5 s segment, smooth outliers
/// over the block, and concatenate. Output length equals input length; a
/// trailing stretch with fewer than two full segments passes through.
inline std::pair<EmgGridRecord, HfRemovalReport> remove_hf(const EmgGridRecord& record,
                                                           const HfRemovalParams& params,
                                                           int jobs = 1) {
  params.validate();
  double fs = record.sample_rate_hz;
  std::int64_t win = static_cast<std::int64_t>(std::llround(params.window_s * fs));
  std::int64_t block_len = win * params.group;
  std::int64_t n = record.n_samples;
  int channels = record.layout.channels();

  EmgGridRecord out = record;
  out.label = EmgLabel::clean;
  HfRemovalReport report;
  report.blocks_processed.assign(channels, 0);
  report.segments_processed.assign(channels, 0);
  report.outliers_replaced.assign(channels, 0);
  report.trailing_passthrough.assign(channels, 0);

  parallel_chunks(static_cast<std::size_t>(channels), jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t ch = b; ch < e; ++ch) {
      const float* in = record.channel(static_cast<int>(ch));
      float* o = out.channel(static_cast<int>(ch));
      for (std::int64_t s0 = 0; s0 < n; s0 += block_len) {
        std::int64_t len = std::min(block_len, n - s0);
        std::int64_t segments = len / win;
        if (segments < 2) {
          report.trailing_passthrough[ch] = 1;
          break; // tail stays as-is (already copied)
        }
        std::vector<double> block(in + s0, in + s0 + segments * win);
        auto tmpl = extract_hf_template(block, fs, params);
        std::vector<double> cleaned;
        cleaned.reserve(block.size());
        std::vector<double> seg(win);
        for (std::int64_t s = 0; s < segments; ++s) {
          std::copy(block.begin() + s * win, block.begin() + (s + 1) * win, seg.begin());
          AlignResult r = align_and_subtract(seg, *tmpl, params.max_shift_samples);
          cleaned.insert(cleaned.end(), r.cleaned.begin(), r.cleaned.end());
        }
        OutlierResult smoothed = smooth_outliers(cleaned);
        report.outliers_replaced[ch] += smoothed.replaced;
        for (std::size_t i = 0; i < smoothed.values.size(); ++i)
          o[s0 + static_cast<std::int64_t>(i)] = static_cast<float>(smoothed.values[i]);
        report.blocks_processed[ch] += 1;
        report.segments_processed[ch] += static_cast<int>(segments);
        if (segments * win < len) report.trailing_passthrough[ch] = 1;
      }
    }
  });
  return {out, report};
}

} // namespace fes
