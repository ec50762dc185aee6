#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "fes/error.hpp"
#include "fes/trial.hpp"

namespace fes {

/// Full experiment description: one JSON document with a versioned schema.
struct ExperimentConfig {
  int schema_version = 1;
  std::uint64_t master_seed = 20240101;
  int subjects = 1;
  std::vector<double> levels = {0.10, 0.25, 0.40};
  std::vector<double> durations_s = {300.0, 240.0, 180.0};
  std::vector<std::string> conditions = {"vol", "hf", "lf"};

  int pool_size = 150;
  DiameterDistribution diameters;
  AxonPhysiology axon;
  UnitConfig units;
  TrialSettings trial; // protocol, rates, EMG, calibration, artifacts, jobs
  std::string output_dir = "out";

  void validate() const {
    require_arg(subjects >= 1, "config: subjects must be >= 1");
    require_arg(!levels.empty() && levels.size() == durations_s.size(),
                "config: levels and durations must align");
    for (double l : levels) require_arg(l > 0.0 && l < 1.0, "config: level must be in (0,1)");
    for (double d : durations_s)
      require_arg(d >= 20.0, "config: trial duration must be at least 20 s");
    require_arg(!conditions.empty(), "config: conditions must be nonempty");
    for (const auto& c : conditions) condition_from_name(c);
    require_arg(pool_size >= 1, "config: pool size must be >= 1");
    require_arg(trial.jobs >= 1, "config: jobs must be >= 1");
    trial.lf.validate();
    trial.hf.validate();
    require_arg(trial.sim_dt_s > 0.0 &&
                    trial.sim_dt_s <= trial.hf.pulse_width_s / 4.0 + 1e-12,
                "config: sim dt must be at most a quarter of the HF pulse width");
    require_arg(trial.stim_rate_hz > 0 && trial.force_rate_hz > 0 && trial.emg_rate_hz > 0,
                "config: sample rates must be positive");
    require_arg(trial.calibration.tolerance_frac_mvc > 0, "config: calibration tolerance invalid");
    require_arg(trial.emg.noise_rms_mv >= 0, "config: noise RMS must be nonnegative");
  }

  double duration_for_level(double level) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
      if (std::abs(levels[i] - level) < 1e-12) return durations_s[i];
    throw Error(ErrorCategory::usage, "level not present in config");
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{
      {"schema_version", c.schema_version},
      {"master_seed", c.master_seed},
      {"subjects", c.subjects},
      {"levels", c.levels},
      {"durations_s", c.durations_s},
      {"conditions", c.conditions},
      {"pool",
       {{"size", c.pool_size},
        {"diameter_min_um", c.diameters.min_um},
        {"diameter_max_um", c.diameters.max_um},
        {"diameter_exponent", c.diameters.exponent},
        {"gain_scale_mv_per_ma_s", c.axon.gain_scale_mv_per_ma_s},
        {"tau_m_s", c.axon.tau_m_s},
        {"threshold_mv", c.axon.threshold_mv},
        {"refractory_s", c.axon.refractory_s},
        {"anodic_efficacy", c.axon.anodic_efficacy},
        {"threshold_jitter_sd", c.axon.threshold_jitter_sd}}},
      {"units",
       {{"twitch_peak_min_n", c.units.twitch_peak_min_n},
        {"twitch_peak_ratio", c.units.twitch_peak_ratio},
        {"contraction_time_min_s", c.units.contraction_time_min_s},
        {"contraction_time_max_s", c.units.contraction_time_max_s},
        {"rate_max_hz", c.units.rate_max_hz},
        {"phi_min", c.units.phi_min},
        {"fatigue_rate_max_per_s", c.units.fatigue_rate_max_per_s},
        {"recovery_rate_per_s", c.units.recovery_rate_per_s},
        {"recruit_range", c.units.recruit_range},
        {"recruit_ratio", c.units.recruit_ratio}}},
      {"voluntary",
       {{"controller_gain_per_s", c.trial.voluntary.controller_gain_per_s},
        {"rate_min_hz", c.trial.voluntary.rate_min_hz},
        {"isi_jitter_cv", c.trial.voluntary.isi_jitter_cv},
        {"refractory_s", c.trial.voluntary.refractory_s}}},
      {"protocol",
       {{"lf",
         {{"base_frequency_hz", c.trial.lf.base_frequency_hz},
          {"pulse_width_s", c.trial.lf.pulse_width_s},
          {"amplitude_ma", c.trial.lf.amplitude_ma}}},
        {"hf",
         {{"burst_frequency_hz", c.trial.hf.burst_frequency_hz},
          {"pulse_width_s", c.trial.hf.pulse_width_s},
          {"pulse_interval_s", c.trial.hf.pulse_interval_s},
          {"amplitude_ma", c.trial.hf.amplitude_ma}}}}},
      {"rates",
       {{"stim_hz", c.trial.stim_rate_hz},
        {"force_hz", c.trial.force_rate_hz},
        {"emg_hz", c.trial.emg_rate_hz},
        {"sim_dt_s", c.trial.sim_dt_s}}},
      {"calibration",
       {{"tolerance_frac_mvc", c.trial.calibration.tolerance_frac_mvc},
        {"amplitude_max_ma", c.trial.calibration.amplitude_max_ma},
        {"max_iterations", c.trial.calibration.max_iterations},
        {"sim_duration_s", c.trial.calibration.sim_duration_s}}},
      {"emg",
       {{"rows", c.trial.grid.rows},
        {"cols", c.trial.grid.cols},
        {"pitch_mm", c.trial.grid.pitch_mm},
        {"muap_amplitude_max_mv", c.trial.emg.muap_amplitude_max_mv},
        {"noise_rms_mv", c.trial.emg.noise_rms_mv},
        {"spatial_decay_min_mm", c.trial.emg.spatial_decay_min_mm},
        {"spatial_decay_max_mm", c.trial.emg.spatial_decay_max_mm},
        {"fatigue_amplitude_floor", c.trial.emg.fatigue_amplitude_floor}}},
      {"artifacts",
       {{"inject", c.trial.inject_artifacts},
        {"lf_ratio", c.trial.lf_artifact_ratio},
        {"hf_ratio", c.trial.hf_artifact_ratio},
        {"hf_drift_amplitude_frac", c.trial.hf_artifact.drift.amplitude_frac},
        {"hf_drift_time_s", c.trial.hf_artifact.drift.time_s},
        {"hf_drift_period_s", c.trial.hf_artifact.drift.period_s},
        {"hf_harmonics", c.trial.hf_artifact.harmonics}}},
      {"jobs", c.trial.jobs},
      {"output_dir", c.output_dir},
  };
}

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

} // namespace detail

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  detail::maybe(j, "schema_version", c.schema_version);
  require(c.schema_version == 1, ErrorCategory::data, "config: unsupported schema version");
  detail::maybe(j, "master_seed", c.master_seed);
  detail::maybe(j, "subjects", c.subjects);
  detail::maybe(j, "levels", c.levels);
  detail::maybe(j, "durations_s", c.durations_s);
  detail::maybe(j, "conditions", c.conditions);
  if (j.contains("pool")) {
    const auto& p = j.at("pool");
    detail::maybe(p, "size", c.pool_size);
    detail::maybe(p, "diameter_min_um", c.diameters.min_um);
    detail::maybe(p, "diameter_max_um", c.diameters.max_um);
    detail::maybe(p, "diameter_exponent", c.diameters.exponent);
    detail::maybe(p, "gain_scale_mv_per_ma_s", c.axon.gain_scale_mv_per_ma_s);
    detail::maybe(p, "tau_m_s", c.axon.tau_m_s);
    detail::maybe(p, "threshold_mv", c.axon.threshold_mv);
    detail::maybe(p, "refractory_s", c.axon.refractory_s);
    detail::maybe(p, "anodic_efficacy", c.axon.anodic_efficacy);
    detail::maybe(p, "threshold_jitter_sd", c.axon.threshold_jitter_sd);
  }
  if (j.contains("units")) {
    const auto& u = j.at("units");
    detail::maybe(u, "twitch_peak_min_n", c.units.twitch_peak_min_n);
    detail::maybe(u, "twitch_peak_ratio", c.units.twitch_peak_ratio);
    detail::maybe(u, "contraction_time_min_s", c.units.contraction_time_min_s);
    detail::maybe(u, "contraction_time_max_s", c.units.contraction_time_max_s);
    detail::maybe(u, "rate_max_hz", c.units.rate_max_hz);
    detail::maybe(u, "phi_min", c.units.phi_min);
    detail::maybe(u, "fatigue_rate_max_per_s", c.units.fatigue_rate_max_per_s);
    detail::maybe(u, "recovery_rate_per_s", c.units.recovery_rate_per_s);
    detail::maybe(u, "recruit_range", c.units.recruit_range);
    detail::maybe(u, "recruit_ratio", c.units.recruit_ratio);
  }
  if (j.contains("voluntary")) {
    const auto& v = j.at("voluntary");
    detail::maybe(v, "controller_gain_per_s", c.trial.voluntary.controller_gain_per_s);
    detail::maybe(v, "rate_min_hz", c.trial.voluntary.rate_min_hz);
    detail::maybe(v, "isi_jitter_cv", c.trial.voluntary.isi_jitter_cv);
    detail::maybe(v, "refractory_s", c.trial.voluntary.refractory_s);
  }
  if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    if (p.contains("lf")) {
      const auto& lf = p.at("lf");
      detail::maybe(lf, "base_frequency_hz", c.trial.lf.base_frequency_hz);
      detail::maybe(lf, "pulse_width_s", c.trial.lf.pulse_width_s);
      detail::maybe(lf, "amplitude_ma", c.trial.lf.amplitude_ma);
    }
    if (p.contains("hf")) {
      const auto& hf = p.at("hf");
      detail::maybe(hf, "burst_frequency_hz", c.trial.hf.burst_frequency_hz);
      detail::maybe(hf, "pulse_width_s", c.trial.hf.pulse_width_s);
      detail::maybe(hf, "pulse_interval_s", c.trial.hf.pulse_interval_s);
      detail::maybe(hf, "amplitude_ma", c.trial.hf.amplitude_ma);
    }
  }
  if (j.contains("rates")) {
    const auto& r = j.at("rates");
    detail::maybe(r, "stim_hz", c.trial.stim_rate_hz);
    detail::maybe(r, "force_hz", c.trial.force_rate_hz);
    detail::maybe(r, "emg_hz", c.trial.emg_rate_hz);
    detail::maybe(r, "sim_dt_s", c.trial.sim_dt_s);
  }
  if (j.contains("calibration")) {
    const auto& k = j.at("calibration");
    detail::maybe(k, "tolerance_frac_mvc", c.trial.calibration.tolerance_frac_mvc);
    detail::maybe(k, "amplitude_max_ma", c.trial.calibration.amplitude_max_ma);
    detail::maybe(k, "max_iterations", c.trial.calibration.max_iterations);
    detail::maybe(k, "sim_duration_s", c.trial.calibration.sim_duration_s);
  }
  if (j.contains("emg")) {
    const auto& e = j.at("emg");
    detail::maybe(e, "rows", c.trial.grid.rows);
    detail::maybe(e, "cols", c.trial.grid.cols);
    detail::maybe(e, "pitch_mm", c.trial.grid.pitch_mm);
    detail::maybe(e, "muap_amplitude_max_mv", c.trial.emg.muap_amplitude_max_mv);
    detail::maybe(e, "noise_rms_mv", c.trial.emg.noise_rms_mv);
    detail::maybe(e, "spatial_decay_min_mm", c.trial.emg.spatial_decay_min_mm);
    detail::maybe(e, "spatial_decay_max_mm", c.trial.emg.spatial_decay_max_mm);
    detail::maybe(e, "fatigue_amplitude_floor", c.trial.emg.fatigue_amplitude_floor);
  }
  if (j.contains("artifacts")) {
    const auto& a = j.at("artifacts");
    detail::maybe(a, "inject", c.trial.inject_artifacts);
    detail::maybe(a, "lf_ratio", c.trial.lf_artifact_ratio);
    detail::maybe(a, "hf_ratio", c.trial.hf_artifact_ratio);
    detail::maybe(a, "hf_drift_amplitude_frac", c.trial.hf_artifact.drift.amplitude_frac);
    detail::maybe(a, "hf_drift_time_s", c.trial.hf_artifact.drift.time_s);
    detail::maybe(a, "hf_drift_period_s", c.trial.hf_artifact.drift.period_s);
    detail::maybe(a, "hf_harmonics", c.trial.hf_artifact.harmonics);
  }
  detail::maybe(j, "jobs", c.trial.jobs);
  detail::maybe(j, "output_dir", c.output_dir);
  c.validate();
}

/// Canonical serialized form (sorted keys, two-space indent); the config hash
/// is FNV-1a over this string.
inline std::string config_canonical(const ExperimentConfig& c) {
  nlohmann::json j = c;
  return j.dump(2);
}

inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = fnv1a64(config_canonical(c));
  char buf[17];
  snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

} // namespace fes
