#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fes/dsp.hpp"
#include "fes/error.hpp"
#include "fes/muscle_force.hpp"
#include "fes/parallel.hpp"
#include "fes/rng.hpp"

namespace fes {

enum class EmgLabel { clean, lf_contaminated, hf_contaminated, vol };

inline const char* emg_label_name(EmgLabel l) {
  switch (l) {
  case EmgLabel::clean: return "clean";
  case EmgLabel::lf_contaminated: return "lf_contaminated";
  case EmgLabel::hf_contaminated: return "hf_contaminated";
  case EmgLabel::vol: return "vol";
  }
  return "clean";
}

inline EmgLabel emg_label_from_name(const std::string& s) {
  if (s == "clean") return EmgLabel::clean;
  if (s == "lf_contaminated") return EmgLabel::lf_contaminated;
  if (s == "hf_contaminated") return EmgLabel::hf_contaminated;
  if (s == "vol") return EmgLabel::vol;
  throw Error(ErrorCategory::data, "unknown EMG label: " + s);
}

struct GridLayout {
  int rows = 8;
  int cols = 16;
  double pitch_mm = 10.0;

  int channels() const { return rows * cols; }
};

/// Monopolar HD-sEMG grid record; samples stored channel-major as float32.
struct EmgGridRecord {
  double sample_rate_hz = 2048.0;
  GridLayout layout;
  EmgLabel label = EmgLabel::clean;
  std::int64_t n_samples = 0;
  std::vector<float> data; // layout.channels() * n_samples

  float* channel(int ch) { return data.data() + static_cast<std::size_t>(ch) * n_samples; }
  const float* channel(int ch) const {
    return data.data() + static_cast<std::size_t>(ch) * n_samples;
  }
  double duration_s() const { return static_cast<double>(n_samples) / sample_rate_hz; }

  static EmgGridRecord zeros(const GridLayout& layout, double duration_s,
                             double sample_rate_hz = 2048.0) {
    EmgGridRecord r;
    r.layout = layout;
    r.sample_rate_hz = sample_rate_hz;
    r.n_samples = static_cast<std::int64_t>(std::llround(duration_s * sample_rate_hz));
    r.data.assign(static_cast<std::size_t>(layout.rows) * layout.cols * r.n_samples, 0.0f);
    return r;
  }
};

/// Spatially distributed action-potential template of one motor unit.
struct MuapTemplate {
  int unit_id = 0;
  double center_row = 0.0; // grid units (row pitch)
  double center_col = 0.0;
  double spatial_decay_mm = 12.0;
  double amplitude_mv = 0.1;
  std::vector<double> waveform; // zero-mean kernel at the EMG rate, peak |1|
};

/// Unit placement policy. Stimulation recruits a spatially compact set with
/// the large units near the grid center; voluntary/HF activity is dispersed.
enum class SpatialPolicy { clustered, dispersed };

struct EmgSynthConfig {
  double muap_amplitude_max_mv = 0.40;
  /// MUAP amplitude grows sublinearly with unit size.
  double muap_amplitude_exponent = 0.6;
  double noise_rms_mv = 0.02;
  double spatial_decay_min_mm = 9.0;
  double spatial_decay_max_mm = 15.0;
  /// MUAP amplitude multiplier floor as fatigue_factor falls to phi_min:
  /// scale = floor + (1 - floor) * phi.
  double fatigue_amplitude_floor = 0.70;
  double band_lo_hz = 10.0;
  double band_hi_hz = 900.0;
};

struct ArtifactGroundTruth {
  EmgGridRecord artifact;             ///< contaminated - clean, sample-exact
  std::vector<double> event_times_s;  ///< stimulus (or burst) onsets
};

namespace detail {

inline std::vector<double> triphasic_waveform(Rng& rng, double fs_hz) {
  double duration_s = rng.uniform(0.010, 0.015);
  std::size_t len = static_cast<std::size_t>(std::llround(duration_s * fs_hz));
  len = std::max<std::size_t>(len, 8);
  double sigma = duration_s / 6.0;
  double t0 = duration_s * rng.uniform(0.38, 0.5);
  double c1 = rng.uniform(0.7, 1.0) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
  double c2 = rng.uniform(0.45, 0.95);
  std::vector<double> w(len);
  for (std::size_t i = 0; i < len; ++i) {
    double t = static_cast<double>(i) / fs_hz - t0;
    double g = std::exp(-t * t / (2.0 * sigma * sigma));
    double d1 = -(t / sigma) * g;
    double d2 = ((t * t) / (sigma * sigma) - 1.0) * g;
    w[i] = c1 * d1 + c2 * d2;
  }
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(len);
  for (double& v : w) v -= mean;
  double peak = 0.0;
  for (double v : w) peak = std::max(peak, std::abs(v));
  for (double& v : w) v /= peak;
  return w;
}

} // namespace detail

inline std::vector<MuapTemplate> make_templates(const std::vector<MotorUnit>& units,
                                                const GridLayout& layout, SpatialPolicy policy,
                                                const EmgSynthConfig& cfg, std::uint64_t seed,
                                                double sample_rate_hz = 2048.0) {
  require_arg(!units.empty(), "unit set must be nonempty");
  Rng rng(derive_seed(seed, "muap-templates"));
  double p_max = 0.0;
  for (const auto& u : units) p_max = std::max(p_max, u.twitch_peak_n);

  std::vector<MuapTemplate> templates(units.size());
  double cr = (layout.rows - 1) / 2.0;
  double cc = (layout.cols - 1) / 2.0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    MuapTemplate& t = templates[i];
    t.unit_id = units[i].axon_id;
    t.amplitude_mv = cfg.muap_amplitude_max_mv *
        std::pow(units[i].twitch_peak_n / p_max, cfg.muap_amplitude_exponent);
    t.spatial_decay_mm = rng.uniform(cfg.spatial_decay_min_mm, cfg.spatial_decay_max_mm);
    if (policy == SpatialPolicy::clustered) {
      // Large units pulled toward the grid center.
      double pull = 1.0 - 0.7 * (units[i].twitch_peak_n / p_max);
      t.center_row = cr + pull * rng.normal(0.0, 1.6);
      t.center_col = cc + pull * rng.normal(0.0, 3.0);
    } else {
      t.center_row = rng.uniform(0.0, layout.rows - 1.0);
      t.center_col = rng.uniform(0.0, layout.cols - 1.0);
    }
    t.center_row = std::clamp(t.center_row, -1.0, static_cast<double>(layout.rows));
    t.center_col = std::clamp(t.center_col, -1.0, static_cast<double>(layout.cols));
    t.waveform = detail::triphasic_waveform(rng, sample_rate_hz);
  }
  return templates;
}

/// Gaussian spatial attenuation of a template at an electrode.
inline double spatial_weight(const MuapTemplate& t, const GridLayout& layout, int row, int col) {
  double dr = (row - t.center_row) * layout.pitch_mm;
  double dc = (col - t.center_col) * layout.pitch_mm;
  double d2 = dr * dr + dc * dc;
  return std::exp(-d2 / (2.0 * t.spatial_decay_mm * t.spatial_decay_mm));
}

/// Superimposes MUAP trains for all spikes plus band-limited noise.
/// If phi is provided, template amplitudes follow each unit's fatigue factor
/// at the spike time (scale = floor + (1-floor)*phi).
inline EmgGridRecord synthesize_emg(const SpikeTrainSet& spikes,
                                    const std::vector<MuapTemplate>& templates,
                                    const GridLayout& layout, double duration_s,
                                    const EmgSynthConfig& cfg, std::uint64_t seed,
                                    const PhiTimeline* phi = nullptr, int jobs = 1,
                                    double sample_rate_hz = 2048.0) {
  require_arg(spikes.spikes.size() == templates.size(),
              "spike trains and templates are not index-aligned");
  EmgGridRecord rec = EmgGridRecord::zeros(layout, duration_s, sample_rate_hz);
  std::int64_t n = rec.n_samples;

  // Shared band-limited noise pool; channels take seeded circular offsets.
  std::vector<double> pool;
  std::vector<std::size_t> offsets(layout.channels(), 0);
  if (cfg.noise_rms_mv > 0.0) {
    Rng rng(derive_seed(seed, "emg-noise"));
    pool.resize(static_cast<std::size_t>(n) + 8192);
    for (double& v : pool) v = rng.normal();
    filtfilt(acquisition_band_sections(sample_rate_hz, cfg.band_lo_hz, cfg.band_hi_hz), pool);
    double r = rms(pool.data(), pool.size());
    for (double& v : pool) v /= r;
    for (auto& o : offsets) o = static_cast<std::size_t>(rng.uniform_index(pool.size()));
  }

  // Per-spike amplitude scales, shared across channels.
  std::vector<std::vector<float>> spike_scale(templates.size());
  for (std::size_t u = 0; u < templates.size(); ++u) {
    spike_scale[u].resize(spikes.spikes[u].size());
    for (std::size_t k = 0; k < spikes.spikes[u].size(); ++k) {
      double m = 1.0;
      if (phi) {
        double f = phi->at(u, spikes.spikes[u][k]);
        m = cfg.fatigue_amplitude_floor + (1.0 - cfg.fatigue_amplitude_floor) * f;
      }
      spike_scale[u][k] = static_cast<float>(m);
    }
  }

  parallel_chunks(static_cast<std::size_t>(layout.channels()), jobs,
                  [&](std::size_t cb, std::size_t ce) {
    for (std::size_t ch = cb; ch < ce; ++ch) {
      int row = static_cast<int>(ch) / layout.cols;
      int col = static_cast<int>(ch) % layout.cols;
      float* out = rec.channel(static_cast<int>(ch));
      for (std::size_t u = 0; u < templates.size(); ++u) {
        const MuapTemplate& t = templates[u];
        double w = spatial_weight(t, layout, row, col);
        // Contributions beyond 4 spatial decay constants are negligible.
        if (w < 3.4e-4) continue;
        float base = static_cast<float>(w * t.amplitude_mv);
        const auto& train = spikes.spikes[u];
        for (std::size_t k = 0; k < train.size(); ++k) {
          std::int64_t s0 = static_cast<std::int64_t>(std::llround(train[k] * sample_rate_hz));
          if (s0 >= n) continue;
          float a = base * spike_scale[u][k];
          std::size_t limit =
              std::min<std::size_t>(t.waveform.size(), static_cast<std::size_t>(n - s0));
          float* dst = out + s0;
          for (std::size_t j = 0; j < limit; ++j)
            dst[j] += a * static_cast<float>(t.waveform[j]);
        }
      }
      if (!pool.empty()) {
        std::size_t o = offsets[ch];
        for (std::int64_t i = 0; i < n; ++i) {
          out[i] += static_cast<float>(cfg.noise_rms_mv * pool[o]);
          if (++o == pool.size()) o = 0;
        }
      }
    }
  });
  return rec;
}

struct LfArtifactConfig {
  double transient_s = 2.4e-3;     ///< biphasic transient length
  double max_jitter_s = 2.0e-3;    ///< timing jitter bound (random walk)
  double jitter_step_s = 0.3e-3;   ///< per-event walk step bound
  double amplitude_jitter = 0.10;  ///< per-event, per-channel amplitude sd
  double fallback_rms_mv = 0.05;   ///< reference RMS for silent channels
};

namespace detail {

/// Sharp biphasic transient, peak +1 early in the window.
inline std::vector<double> lf_transient(double fs_hz, double length_s) {
  std::size_t len = std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(length_s * fs_hz)));
  std::vector<double> s(len);
  for (std::size_t i = 0; i < len; ++i) {
    double t = static_cast<double>(i) / fs_hz;
    s[i] = std::sin(2.0 * M_PI * t / length_s) * std::exp(-3.0 * t / length_s);
  }
  double peak = 0.0;
  std::size_t peak_at = 0;
  for (std::size_t i = 0; i < len; ++i)
    if (std::abs(s[i]) > peak) {
      peak = std::abs(s[i]);
      peak_at = i;
    }
  for (double& v : s) v /= peak;
  // Rotate so index 0 is the peak sample minus one; callers center on peak.
  std::rotate(s.begin(), s.begin() + peak_at, s.end());
  return s;
}

} // namespace detail

/// Adds sharp transients at (jittered) stimulus times. Peak amplitude per
/// channel is magnitude_ratio times that channel's clean RMS. Timing jitter
/// follows a bounded random walk so consecutive events stay detectable.
inline std::pair<EmgGridRecord, ArtifactGroundTruth>
inject_lf_artifact(const EmgGridRecord& clean, const std::vector<double>& stim_times_s,
                   double magnitude_ratio, std::uint64_t seed, const LfArtifactConfig& cfg = {}) {
  require_arg(magnitude_ratio >= 10.0, "artifact magnitude ratio must be at least 10");
  for (double t : stim_times_s)
    require_arg(t >= 0.0 && t < clean.duration_s(), "stimulus time outside record");

  ArtifactGroundTruth truth;
  truth.artifact = EmgGridRecord::zeros(clean.layout, clean.duration_s(), clean.sample_rate_hz);
  EmgGridRecord out = clean;
  out.label = EmgLabel::lf_contaminated;
  if (stim_times_s.empty()) return {out, truth};

  Rng rng(derive_seed(seed, "lf-artifact"));
  auto shape = detail::lf_transient(clean.sample_rate_hz, cfg.transient_s);

  // Jittered event times, shared by all channels.
  double jitter = 0.0;
  truth.event_times_s.reserve(stim_times_s.size());
  for (double t : stim_times_s) {
    jitter = std::clamp(jitter + rng.uniform(-cfg.jitter_step_s, cfg.jitter_step_s),
                        -cfg.max_jitter_s, cfg.max_jitter_s);
    truth.event_times_s.push_back(t + jitter);
  }

  int channels = clean.layout.channels();
  std::vector<double> peak(channels);
  for (int ch = 0; ch < channels; ++ch) {
    double r = rms(clean.channel(ch), static_cast<std::size_t>(clean.n_samples));
    if (r < 1e-12) r = cfg.fallback_rms_mv;
    peak[ch] = magnitude_ratio * r;
  }

  for (double t : truth.event_times_s) {
    std::int64_t s0 = static_cast<std::int64_t>(std::llround(t * clean.sample_rate_hz)) - 1;
    for (int ch = 0; ch < channels; ++ch) {
      double a = peak[ch] * std::clamp(1.0 + cfg.amplitude_jitter * rng.normal(), 0.6, 1.4);
      float* art = truth.artifact.channel(ch);
      for (std::size_t j = 0; j < shape.size(); ++j) {
        std::int64_t idx = s0 + static_cast<std::int64_t>(j);
        if (idx < 0 || idx >= clean.n_samples) continue;
        art[idx] += static_cast<float>(a * shape[j]);
      }
    }
  }
  for (int ch = 0; ch < channels; ++ch) {
    float* o = out.channel(ch);
    const float* a = truth.artifact.channel(ch);
    for (std::int64_t i = 0; i < clean.n_samples; ++i) o[i] = o[i] + a[i];
  }
  return {out, truth};
}

struct HfArtifactDrift {
  double amplitude_frac = 0.05; ///< slow gain sweep amplitude
  double time_s = 1.0e-5;       ///< slow phase sweep amplitude, seconds
  double period_s = 250.0;      ///< sweep period; keeps any 4 s window near-stationary
};

struct HfArtifactConfig {
  int harmonics = 30;            ///< harmonics of the burst rate, capped at the band edge
  double fallback_rms_mv = 0.05;
  HfArtifactDrift drift;
};

/// Adds a burst-periodic waveform whose gain and phase drift slowly. Drift is
/// quantized at 0.5 s segment granularity, so every 0.5 s stretch is exactly
/// stationary and a 4 s window drifts by at most ~10 % of the sweep amplitude.
inline std::pair<EmgGridRecord, ArtifactGroundTruth>
inject_hf_artifact(const EmgGridRecord& clean, double burst_frequency_hz, double magnitude_ratio,
                   std::uint64_t seed, const HfArtifactConfig& cfg = {}) {
  require_arg(magnitude_ratio >= 10.0, "artifact magnitude ratio must be at least 10");
  require_arg(burst_frequency_hz > 0.0, "burst frequency must be positive");

  double fs = clean.sample_rate_hz;
  std::int64_t n = clean.n_samples;
  std::int64_t seg_len = static_cast<std::int64_t>(std::llround(0.5 * fs));

  ArtifactGroundTruth truth;
  truth.artifact = EmgGridRecord::zeros(clean.layout, clean.duration_s(), fs);
  for (double t = 0.0; t < clean.duration_s(); t += 1.0 / burst_frequency_hz)
    truth.event_times_s.push_back(t);

  EmgGridRecord out = clean;
  out.label = EmgLabel::hf_contaminated;

  Rng master(derive_seed(seed, "hf-artifact"));
  int channels = clean.layout.channels();
  int max_h = std::min(cfg.harmonics,
                       static_cast<int>(std::floor(0.95 * fs / 2.0 / burst_frequency_hz)));

  double drift_phase_a = master.uniform(0.0, 2.0 * M_PI);
  double drift_phase_t = master.uniform(0.0, 2.0 * M_PI);

  for (int ch = 0; ch < channels; ++ch) {
    // Harmonic comb shaped around the aliased carrier images.
    std::vector<double> c(max_h + 1, 0.0), psi(max_h + 1, 0.0);
    double energy = 0.0;
    for (int h = 1; h <= max_h; ++h) {
      double envelope = std::exp(-(h - 8.0) * (h - 8.0) / 8.0) +
                        0.5 * std::exp(-(h - 16.0) * (h - 16.0) / 8.0) +
                        0.25 * std::exp(-(h - 24.0) * (h - 24.0) / 8.0);
      c[h] = envelope * master.uniform(0.7, 1.3);
      psi[h] = master.uniform(0.0, 2.0 * M_PI);
      energy += 0.5 * c[h] * c[h];
    }
    double base_rms = std::sqrt(energy);
    double clean_rms = rms(clean.channel(ch), static_cast<std::size_t>(n));
    if (clean_rms < 1e-12) clean_rms = cfg.fallback_rms_mv;
    double scale = magnitude_ratio * clean_rms / base_rms;

    // One-segment quadrature tables; burst harmonics repeat exactly per 0.5 s.
    std::vector<std::vector<double>> tab_cos(max_h + 1), tab_sin(max_h + 1);
    for (int h = 1; h <= max_h; ++h) {
      double w = 2.0 * M_PI * burst_frequency_hz * h;
      tab_cos[h].resize(seg_len);
      tab_sin[h].resize(seg_len);
      for (std::int64_t i = 0; i < seg_len; ++i) {
        double t = static_cast<double>(i) / fs;
        tab_cos[h][i] = std::cos(w * t + psi[h]);
        tab_sin[h][i] = std::sin(w * t + psi[h]);
      }
    }

    float* art = truth.artifact.channel(ch);
    for (std::int64_t s0 = 0; s0 < n; s0 += seg_len) {
      std::int64_t len = std::min(seg_len, n - s0);
      double t_seg = static_cast<double>(s0) / fs;
      double sweep = 2.0 * M_PI * t_seg / cfg.drift.period_s;
      double gain = scale * (1.0 + cfg.drift.amplitude_frac * std::sin(sweep + drift_phase_a));
      double tau = cfg.drift.time_s * std::sin(sweep + drift_phase_t);
      std::vector<double> acc(len, 0.0);
      for (int h = 1; h <= max_h; ++h) {
        double w = 2.0 * M_PI * burst_frequency_hz * h;
        double cp = c[h] * std::cos(w * tau);
        double sp = c[h] * std::sin(w * tau);
        const double* tc = tab_cos[h].data();
        const double* ts = tab_sin[h].data();
        for (std::int64_t i = 0; i < len; ++i) acc[i] += cp * tc[i] + sp * ts[i];
      }
      for (std::int64_t i = 0; i < len; ++i) art[s0 + i] = static_cast<float>(gain * acc[i]);
    }

    float* o = out.channel(ch);
    for (std::int64_t i = 0; i < n; ++i) o[i] = o[i] + art[i];
  }
  return {out, truth};
}

} // namespace fes
