#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fes/config.hpp"
#include "fes/error.hpp"
#include "fes/stats.hpp"
#include "fes/trial.hpp"

namespace fes {

namespace io {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr char kEmgMagic[8] = {'F', 'E', 'S', 'E', 'M', 'G', '1', '\n'};

/// Exact float formatting: %.17g parses back bit-identically, so CSV files
/// round-trip byte-for-byte through write -> read -> write.
inline std::string fmt(double v) {
  char buf[40];
  snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCategory::data, "cannot open for writing: " + path.string());
  out << text;
  require(out.good(), ErrorCategory::data, "write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::data, "cannot open: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCategory::data, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

inline void write_stim_csv(const StimTrain& train, const std::filesystem::path& path) {
  std::string s;
  s.reserve(train.samples_ma.size() * 16 + 32);
  s += "time_s,current_mA\n";
  for (std::int64_t i = 0; i < train.size(); ++i) {
    s += fmt(static_cast<double>(i) / train.sample_rate_hz);
    s += ',';
    s += fmt(train.samples_ma[i]);
    s += '\n';
  }
  write_text(path, s);
}

inline void write_stim_sidecar(const StimTrain& train, double base_frequency_hz,
                               double pulse_width_s, double pulse_interval_s, double amplitude_ma,
                               const std::filesystem::path& path) {
  nlohmann::json j{{"protocol", protocol_name(train.protocol)},
                   {"base_frequency_hz", base_frequency_hz},
                   {"pulse_width_s", pulse_width_s},
                   {"pulse_interval_s", pulse_interval_s},
                   {"amplitude_mA", amplitude_ma},
                   {"sample_rate_hz", train.sample_rate_hz}};
  write_json(path, j);
}

inline void write_spikes_csv(const SpikeTrainSet& spikes, const std::filesystem::path& path) {
  std::string s = "axon_id,spike_time_s\n";
  for (std::size_t a = 0; a < spikes.spikes.size(); ++a)
    for (double t : spikes.spikes[a]) {
      s += std::to_string(a);
      s += ',';
      s += fmt(t);
      s += '\n';
    }
  write_text(path, s);
}

inline SpikeTrainSet read_spikes_csv(const std::filesystem::path& path, std::size_t n_axons) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::data, "cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "axon_id,spike_time_s", ErrorCategory::data,
          "bad spikes CSV header in " + path.string());
  SpikeTrainSet set;
  set.spikes.resize(n_axons);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    require(comma != std::string::npos, ErrorCategory::data, "bad spikes CSV row");
    std::size_t id = std::stoul(line.substr(0, comma));
    require(id < n_axons, ErrorCategory::data, "axon id out of range in spikes CSV");
    set.spikes[id].push_back(std::stod(line.substr(comma + 1)));
  }
  return set;
}

inline void write_force_csv(const ForceTrace& trace, const std::filesystem::path& path) {
  std::string s;
  s.reserve(trace.samples_n.size() * 16 + 32);
  s += "time_s,force_N\n";
  for (std::size_t i = 0; i < trace.samples_n.size(); ++i) {
    s += fmt(static_cast<double>(i) / trace.sample_rate_hz);
    s += ',';
    s += fmt(trace.samples_n[i]);
    s += '\n';
  }
  write_text(path, s);
}

inline ForceTrace read_force_csv(const std::filesystem::path& path, double sample_rate_hz) {
  std::ifstream in(path);
  require(in.good(), ErrorCategory::data, "cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  require(line == "time_s,force_N", ErrorCategory::data, "bad force CSV header");
  ForceTrace trace;
  trace.sample_rate_hz = sample_rate_hz;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    require(comma != std::string::npos, ErrorCategory::data, "bad force CSV row");
    trace.samples_n.push_back(std::stod(line.substr(comma + 1)));
  }
  return trace;
}

inline void write_matrix_csv(const std::vector<double>& m, int rows, int cols,
                             const std::filesystem::path& path) {
  std::string s;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c) s += ',';
      s += fmt(m[static_cast<std::size_t>(r) * cols + c]);
    }
    s += '\n';
  }
  write_text(path, s);
}

// ---------------------------------------------------------------------------
// EMG binary container: magic, uint32 header length (LE), JSON header,
// float32 (LE) samples channel-major.
// ---------------------------------------------------------------------------

inline void write_emg(const EmgGridRecord& rec, const std::filesystem::path& path) {
  nlohmann::json header{{"rate", rec.sample_rate_hz},
                        {"rows", rec.layout.rows},
                        {"cols", rec.layout.cols},
                        {"label", emg_label_name(rec.label)},
                        {"length", rec.n_samples}};
  std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCategory::data, "cannot open for writing: " + path.string());
  out.write(kEmgMagic, sizeof kEmgMagic);
  std::uint32_t len = static_cast<std::uint32_t>(h.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(rec.data.data()),
            static_cast<std::streamsize>(rec.data.size() * sizeof(float)));
  require(out.good(), ErrorCategory::data, "write failed: " + path.string());
}

inline EmgGridRecord read_emg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::data, "cannot open: " + path.string());
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::equal(magic, magic + 8, kEmgMagic), ErrorCategory::data,
          "bad EMG file magic in " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  require(in.good() && len < (1u << 20), ErrorCategory::data, "bad EMG header length");
  std::string h(len, '\0');
  in.read(h.data(), len);
  require(in.good(), ErrorCategory::data, "truncated EMG header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::parse_error&) {
    throw Error(ErrorCategory::data, "invalid EMG header JSON");
  }
  EmgGridRecord rec;
  rec.sample_rate_hz = header.at("rate").get<double>();
  rec.layout.rows = header.at("rows").get<int>();
  rec.layout.cols = header.at("cols").get<int>();
  rec.label = emg_label_from_name(header.at("label").get<std::string>());
  rec.n_samples = header.at("length").get<std::int64_t>();
  require(rec.layout.rows > 0 && rec.layout.cols > 0 && rec.n_samples >= 0, ErrorCategory::data,
          "bad EMG header fields");
  std::size_t total = static_cast<std::size_t>(rec.layout.channels()) * rec.n_samples;
  rec.data.resize(total);
  in.read(reinterpret_cast<char*>(rec.data.data()),
          static_cast<std::streamsize>(total * sizeof(float)));
  require(in.good(), ErrorCategory::data, "truncated EMG data in " + path.string());
  return rec;
}

// ---------------------------------------------------------------------------
// Trial records and run manifest
// ---------------------------------------------------------------------------

inline std::string trial_dir_name(Condition c, double level) {
  char buf[32];
  snprintf(buf, sizeof buf, "%s_%02d", condition_name(c), static_cast<int>(level * 100 + 0.5));
  return std::string(buf);
}

/// Writes one trial under dir: manifest.json, spikes.csv, force.csv, emg.bin
/// (and injected artifact ground truth alongside when present).
inline nlohmann::json write_trial(const TrialRecord& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_spikes_csv(rec.spikes, dir / "spikes.csv");
  write_force_csv(rec.force.trace, dir / "force.csv");
  write_emg(rec.emg, dir / "emg.bin");
  if (rec.artifact_truth) {
    write_emg(rec.artifact_truth->artifact, dir / "artifact_truth.bin");
  }
  nlohmann::json j{{"condition", condition_name(rec.condition)},
                   {"level", rec.target_level},
                   {"duration_s", rec.duration_s},
                   {"seed", rec.seed},
                   {"mvc_n", rec.mvc_n},
                   {"achieved_initial_frac", rec.achieved_initial_frac},
                   {"calibration_converged", rec.calibration_converged},
                   {"files",
                    {{"spikes", "spikes.csv"},
                     {"force", "force.csv"},
                     {"emg", "emg.bin"}}}};
  if (rec.stim_amplitude_ma)
    j["stim_amplitude_ma"] = *rec.stim_amplitude_ma;
  else
    j["stim_amplitude_ma"] = nullptr;
  if (rec.artifact_truth) j["files"]["artifact_truth"] = "artifact_truth.bin";
  write_json(dir / "trial.json", j);
  return j;
}

struct RunManifest {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::string created; ///< empty unless timestamping was requested
  std::vector<std::string> trial_dirs;
  int subjects = 1;
};

inline void write_run_manifest(const RunManifest& m, const std::filesystem::path& path) {
  nlohmann::json j{{"config_hash", m.config_hash},
                   {"tool_version", m.tool_version},
                   {"created", m.created},
                   {"subjects", m.subjects},
                   {"trials", m.trial_dirs}};
  write_json(path, j);
}

inline RunManifest read_run_manifest(const std::filesystem::path& path) {
  nlohmann::json j = read_json(path);
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.created = j.at("created").get<std::string>();
  m.subjects = j.at("subjects").get<int>();
  m.trial_dirs = j.at("trials").get<std::vector<std::string>>();
  return m;
}

// ---------------------------------------------------------------------------
// Analysis and stats reports
// ---------------------------------------------------------------------------

inline nlohmann::json trial_analysis_json(const TrialAnalysis& a) {
  nlohmann::json periods = nlohmann::json::array();
  for (const auto& [s, e] : a.periods) periods.push_back({s, e});
  nlohmann::json j{{"condition", condition_name(a.condition)},
                   {"level", a.level},
                   {"duration_s", a.duration_s},
                   {"periods", periods},
                   {"force_period_means_n", a.force_period_means_n},
                   {"initial_force_frac_mvc", a.initial_force_frac_mvc},
                   {"residual_force_pct_mvc", a.residual_force_pct_mvc},
                   {"emg_period_rms_mv", a.emg_period_rms_mv},
                   {"normalized_rms", a.normalized_rms_values}};
  if (a.stim_amplitude_ma)
    j["stim_amplitude_ma"] = *a.stim_amplitude_ma;
  else
    j["stim_amplitude_ma"] = nullptr;
  return j;
}

inline nlohmann::json test_result_json(const TestResult& t, double p_adjusted, bool significant) {
  nlohmann::json j{{"test_name", t.test_name}, {"statistic", t.statistic},
                   {"df", nlohmann::json::array()}, {"p_raw", t.p},
                   {"p_adjusted", p_adjusted},    {"decision", significant}};
  if (t.df1 >= 0) j["df"].push_back(t.df1);
  if (t.df2 >= 0) j["df"].push_back(t.df2);
  if (!t.note.empty()) j["note"] = t.note;
  if (t.degenerate) j["degenerate"] = true;
  return j;
}

} // namespace io

} // namespace fes
