#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fes/analysis.hpp"
#include "fes/artifact_removal.hpp"
#include "fes/axon_pool.hpp"
#include "fes/emg_synth.hpp"
#include "fes/error.hpp"
#include "fes/muscle_force.hpp"
#include "fes/rng.hpp"
#include "fes/stim_protocol.hpp"

namespace fes {

enum class Condition { vol, hf, lf };

inline const char* condition_name(Condition c) {
  switch (c) {
  case Condition::vol: return "vol";
  case Condition::hf: return "hf";
  case Condition::lf: return "lf";
  }
  return "vol";
}

inline Condition condition_from_name(const std::string& s) {
  if (s == "vol" || s == "Vol") return Condition::vol;
  if (s == "hf" || s == "HF") return Condition::hf;
  if (s == "lf" || s == "LF") return Condition::lf;
  throw Error(ErrorCategory::usage, "unknown condition: " + s);
}

/// Everything needed to run trials for one simulated subject. Units are kept
/// fresh here; trials copy them, so the state reset between trials is exact.
struct SubjectContext {
  std::uint64_t seed = 0;
  AxonPool pool;
  std::vector<MotorUnit> units;
  double mvc_n = 0.0;
};

struct TrialSettings {
  double stim_rate_hz = 100000.0;
  double force_rate_hz = 1000.0;
  double emg_rate_hz = 2048.0;
  double sim_dt_s = 1e-5;
  GridLayout grid;
  EmgSynthConfig emg;
  VoluntaryConfig voluntary;
  LfParams lf;
  HfParams hf;
  CalibrationConfig calibration;
  bool inject_artifacts = false;
  double lf_artifact_ratio = 100.0;
  double hf_artifact_ratio = 100.0;
  HfArtifactConfig hf_artifact;
  int jobs = 1;
};

struct TrialRecord {
  Condition condition = Condition::vol;
  double target_level = 0.0;
  double duration_s = 0.0;
  std::optional<double> stim_amplitude_ma;
  bool calibration_converged = true;
  double achieved_initial_frac = 0.0;
  SpikeTrainSet spikes;
  ForceResult force;
  EmgGridRecord emg;
  std::optional<ArtifactGroundTruth> artifact_truth;
  std::uint64_t seed = 0;
  double mvc_n = 0.0;
};

inline SubjectContext make_subject(int pool_size, const DiameterDistribution& dist,
                                   const AxonPhysiology& phys, const UnitConfig& unit_cfg,
                                   std::uint64_t subject_seed) {
  SubjectContext ctx;
  ctx.seed = subject_seed;
  ctx.pool = build_pool(pool_size, dist, phys, derive_seed(subject_seed, "pool"));
  ctx.units = make_units(ctx.pool, unit_cfg);
  ctx.mvc_n = mvc(ctx.units);
  return ctx;
}

/// Runs one trial: amplitude calibration (stimulation conditions), axon/spike
/// simulation, force generation with fatigue, and EMG synthesis.
inline TrialRecord run_trial(const SubjectContext& subject, Condition condition, double level,
                             double duration_s, const TrialSettings& s, std::uint64_t trial_seed) {
  require_arg(level > 0.0 && level < 1.0, "force level must be in (0,1)");
  require_arg(duration_s > 0.0, "duration must be positive");

  TrialRecord rec;
  rec.condition = condition;
  rec.target_level = level;
  rec.duration_s = duration_s;
  rec.seed = trial_seed;
  rec.mvc_n = subject.mvc_n;

  std::vector<MotorUnit> units = subject.units; // fresh fatigue state
  for (auto& u : units) u.fatigue_factor = 1.0;

  if (condition == Condition::vol) {
    VoluntaryResult vol = voluntary_trial(units, subject.mvc_n, level, duration_s, s.voluntary,
                                          derive_seed(trial_seed, "vol"), s.force_rate_hz);
    rec.spikes = std::move(vol.spikes);
    rec.force = std::move(vol.force);
  } else {
    // Calibrate on a short train at unit amplitude, then run the full trial.
    double calib_duration = s.calibration.sim_duration_s;
    StimTrain calib_train;
    if (condition == Condition::lf) {
      LfParams p = s.lf;
      p.amplitude_ma = 1.0;
      calib_train = synthesize_lf(p, calib_duration, s.stim_rate_hz);
    } else {
      HfParams p = s.hf;
      p.amplitude_ma = 1.0;
      calib_train = synthesize_hf(p, calib_duration, s.stim_rate_hz);
    }
    CalibrationResult cal = calibrate_amplitude(calib_train, subject.pool, units, subject.mvc_n,
                                                level, s.sim_dt_s, s.calibration, s.jobs);
    rec.stim_amplitude_ma = cal.amplitude_ma;
    rec.calibration_converged = cal.converged;

    StimTrain train;
    if (condition == Condition::lf) {
      LfParams p = s.lf;
      p.amplitude_ma = cal.amplitude_ma;
      train = synthesize_lf(p, duration_s, s.stim_rate_hz);
    } else {
      HfParams p = s.hf;
      p.amplitude_ma = cal.amplitude_ma;
      train = synthesize_hf(p, duration_s, s.stim_rate_hz);
    }
    rec.spikes = simulate_pool(subject.pool, train, s.sim_dt_s, s.jobs);
    rec.force = force_from_spikes(rec.spikes, units, duration_s, s.force_rate_hz);
  }
  rec.achieved_initial_frac =
      detail::mean_force_window(rec.force.trace, 5.0, std::min(15.0, duration_s)) / subject.mvc_n;

  SpatialPolicy policy =
      (condition == Condition::lf) ? SpatialPolicy::clustered : SpatialPolicy::dispersed;
  auto templates = make_templates(units, s.grid, policy, s.emg,
                                  derive_seed(trial_seed, "templates"), s.emg_rate_hz);
  rec.emg = synthesize_emg(rec.spikes, templates, s.grid, duration_s, s.emg,
                           derive_seed(trial_seed, "emg"), &rec.force.phi, s.jobs, s.emg_rate_hz);
  rec.emg.label = condition == Condition::vol ? EmgLabel::vol : EmgLabel::clean;

  if (s.inject_artifacts && condition != Condition::vol) {
    if (condition == Condition::lf) {
      std::vector<double> stim_times;
      for (double t = 0.0; t < duration_s; t += 1.0 / s.lf.base_frequency_hz)
        stim_times.push_back(t);
      auto [contaminated, truth] = inject_lf_artifact(rec.emg, stim_times, s.lf_artifact_ratio,
                                                      derive_seed(trial_seed, "lf-art"));
      rec.emg = std::move(contaminated);
      rec.artifact_truth = std::move(truth);
    } else {
      auto [contaminated, truth] =
          inject_hf_artifact(rec.emg, s.hf.burst_frequency_hz, s.hf_artifact_ratio,
                             derive_seed(trial_seed, "hf-art"), s.hf_artifact);
      rec.emg = std::move(contaminated);
      rec.artifact_truth = std::move(truth);
    }
  }
  return rec;
}

/// Per-trial analysis products in the shape of the reported metrics.
struct TrialAnalysis {
  Condition condition = Condition::vol;
  double level = 0.0;
  double duration_s = 0.0;
  std::optional<double> stim_amplitude_ma;
  std::vector<std::pair<double, double>> periods;
  std::vector<double> force_period_means_n;
  double initial_force_frac_mvc = 0.0;
  double residual_force_pct_mvc = 0.0;
  std::vector<double> emg_period_rms_mv;
  std::vector<double> normalized_rms_values;
  SpatialRmsMap map_initial;
  SpatialRmsMap map_final;
};

inline TrialAnalysis analyze_trial(const TrialRecord& rec, const PeriodSet& periods) {
  TrialAnalysis a;
  a.condition = rec.condition;
  a.level = rec.target_level;
  a.duration_s = rec.duration_s;
  a.stim_amplitude_ma = rec.stim_amplitude_ma;
  a.periods = periods.periods;

  SmoothedForce sm = smooth_force(rec.force.trace);
  a.force_period_means_n = period_average(sm, periods);
  a.initial_force_frac_mvc = a.force_period_means_n.front() / rec.mvc_n;
  a.residual_force_pct_mvc = residual_force(sm, periods, rec.mvc_n);
  a.emg_period_rms_mv = emg_period_rms(rec.emg, periods);
  a.normalized_rms_values = normalized_rms(a.emg_period_rms_mv);
  a.map_initial = spatial_rms_map(rec.emg, periods.periods.front().first,
                                  periods.periods.front().second);
  a.map_final =
      spatial_rms_map(rec.emg, periods.periods.back().first, periods.periods.back().second);
  return a;
}

} // namespace fes
