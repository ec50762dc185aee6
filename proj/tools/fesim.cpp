// fesim: command-line front end for the FES fatigue simulation toolkit.
//
// Subcommands: simulate, clean, analyze, stats, report.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fes/analysis.hpp"
#include "fes/artifact_removal.hpp"
#include "fes/config.hpp"
#include "fes/io.hpp"
#include "fes/stats.hpp"
#include "fes/svg.hpp"
#include "fes/trial.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fes::ExperimentConfig load_config(const std::string& path) {
  fes::ExperimentConfig cfg;
  if (!path.empty()) cfg = fes::io::read_json(path).get<fes::ExperimentConfig>();
  cfg.validate();
  return cfg;
}

std::string timestamp_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return std::string(buf);
}

int cmd_simulate(const fes::ExperimentConfig& cfg_in, const std::string& out_dir,
                 const std::vector<std::string>& only_conditions,
                 const std::vector<double>& only_levels, bool stamp) {
  fes::ExperimentConfig cfg = cfg_in;
  if (!out_dir.empty()) cfg.output_dir = out_dir;

  std::vector<std::string> conditions =
      only_conditions.empty() ? cfg.conditions : only_conditions;
  for (const auto& c : conditions) fes::condition_from_name(c);
  std::vector<double> levels = only_levels.empty() ? cfg.levels : only_levels;
  for (double l : levels) cfg.duration_for_level(l); // validates membership

  fs::path root(cfg.output_dir);
  fs::create_directories(root);
  fes::io::write_text(root / "config.json", fes::config_canonical(cfg) + "\n");

  fes::io::RunManifest manifest;
  manifest.config_hash = fes::config_hash(cfg);
  manifest.subjects = cfg.subjects;
  if (stamp) manifest.created = timestamp_now();

  for (int s = 0; s < cfg.subjects; ++s) {
    std::uint64_t subject_seed = fes::derive_seed(cfg.master_seed, "subject", s);
    fes::SubjectContext subject =
        fes::make_subject(cfg.pool_size, cfg.diameters, cfg.axon, cfg.units, subject_seed);
    char sub_name[32];
    snprintf(sub_name, sizeof sub_name, "subject_%02d", s);
    for (double level : levels) {
      double duration = cfg.duration_for_level(level);
      for (const auto& cname : conditions) {
        fes::Condition cond = fes::condition_from_name(cname);
        std::uint64_t trial_seed = fes::derive_seed(
            subject_seed, std::string("trial-") + cname, static_cast<std::uint64_t>(level * 1000));
        fes::TrialRecord rec = fes::run_trial(subject, cond, level, duration, cfg.trial,
                                              trial_seed);
        fs::path dir = root / sub_name / fes::io::trial_dir_name(cond, level);
        fes::io::write_trial(rec, dir);
        if (cond != fes::Condition::vol && rec.stim_amplitude_ma) {
          // One-second waveform excerpt plus protocol sidecar.
          if (cond == fes::Condition::lf) {
            fes::LfParams p = cfg.trial.lf;
            p.amplitude_ma = *rec.stim_amplitude_ma;
            auto train = fes::synthesize_lf(p, 1.0, cfg.trial.stim_rate_hz);
            fes::io::write_stim_csv(train, dir / "stim_1s.csv");
            fes::io::write_stim_sidecar(train, p.base_frequency_hz, p.pulse_width_s, 0.0,
                                        p.amplitude_ma, dir / "stim.json");
          } else {
            fes::HfParams p = cfg.trial.hf;
            p.amplitude_ma = *rec.stim_amplitude_ma;
            auto train = fes::synthesize_hf(p, 1.0, cfg.trial.stim_rate_hz);
            fes::io::write_stim_csv(train, dir / "stim_1s.csv");
            fes::io::write_stim_sidecar(train, p.burst_frequency_hz, p.pulse_width_s,
                                        p.pulse_interval_s, p.amplitude_ma, dir / "stim.json");
          }
        }
        manifest.trial_dirs.push_back((fs::path(sub_name) / fes::io::trial_dir_name(cond, level))
                                          .generic_string());
        std::cout << sub_name << "/" << fes::io::trial_dir_name(cond, level)
                  << ": initial " << fes::io::fmt(100.0 * rec.achieved_initial_frac)
                  << " %MVC" << (rec.stim_amplitude_ma
                                     ? ", amplitude " + fes::io::fmt(*rec.stim_amplitude_ma) + " mA"
                                     : std::string())
                  << "\n";
      }
    }
  }
  fes::io::write_run_manifest(manifest, root / "run_manifest.json");
  std::cout << "wrote " << manifest.trial_dirs.size() << " trials under " << root.string()
            << "\n";
  return 0;
}

int cmd_clean(const std::string& input, const std::string& protocol, const std::string& baseline,
              const std::string& truth_path, const std::string& out_dir, std::uint64_t seed,
              int jobs) {
  fes::EmgGridRecord rec = fes::io::read_emg(input);
  fs::path out(out_dir.empty() ? "." : out_dir);
  fs::create_directories(out);

  fes::EmgGridRecord cleaned;
  json report;
  report["input"] = input;
  report["protocol"] = protocol;

  if (protocol == "lf") {
    fes::require(!baseline.empty(), fes::ErrorCategory::usage,
                 "LF removal requires --baseline (rest-state record)");
    fes::EmgGridRecord rest = fes::io::read_emg(baseline);
    auto [c, r] = fes::remove_lf(rec, fes::LfRemovalParams{}, rest,
                                 fes::derive_seed(seed, "clean"), jobs);
    cleaned = std::move(c);
    report["events_per_channel"] = r.events_per_channel;
  } else if (protocol == "hf") {
    auto [c, r] = fes::remove_hf(rec, fes::HfRemovalParams{}, jobs);
    cleaned = std::move(c);
    report["blocks_processed"] = r.blocks_processed;
    report["outliers_replaced"] = r.outliers_replaced;
    bool any_tail = false;
    for (char f : r.trailing_passthrough) any_tail |= (f != 0);
    report["trailing_passthrough"] = any_tail;
  } else {
    throw fes::Error(fes::ErrorCategory::usage, "unknown protocol: " + protocol);
  }

  // Energy accounting; exact attenuation requires the clean ground truth.
  int channels = rec.layout.channels();
  if (!truth_path.empty()) {
    fes::EmgGridRecord clean = fes::io::read_emg(truth_path);
    fes::require(clean.n_samples == rec.n_samples &&
                     clean.layout.channels() == rec.layout.channels(),
                 fes::ErrorCategory::data, "ground truth does not match input record");
    std::vector<double> attenuation_db(channels);
    double worst = 1e300;
    for (int ch = 0; ch < channels; ++ch) {
      const float* x = rec.channel(ch);
      const float* y = cleaned.channel(ch);
      const float* t = clean.channel(ch);
      double before = 0.0, after = 0.0;
      for (std::int64_t i = 0; i < rec.n_samples; ++i) {
        double e0 = static_cast<double>(x[i]) - t[i];
        double e1 = static_cast<double>(y[i]) - t[i];
        before += e0 * e0;
        after += e1 * e1;
      }
      attenuation_db[ch] = 10.0 * std::log10(before / std::max(after, 1e-300));
      worst = std::min(worst, attenuation_db[ch]);
    }
    report["attenuation_db"] = attenuation_db;
    report["attenuation_db_min"] = worst;
  } else {
    std::vector<double> removed_frac(channels);
    for (int ch = 0; ch < channels; ++ch) {
      double in_rms = fes::rms(rec.channel(ch), static_cast<std::size_t>(rec.n_samples));
      double out_rms = fes::rms(cleaned.channel(ch), static_cast<std::size_t>(rec.n_samples));
      removed_frac[ch] = in_rms > 0 ? 1.0 - out_rms / in_rms : 0.0;
    }
    report["rms_removed_frac"] = removed_frac;
    report["known_events"] = 0;
  }

  fes::io::write_emg(cleaned, out / "cleaned.bin");
  fes::io::write_json(out / "removal_report.json", report);
  std::cout << "cleaned record written to " << (out / "cleaned.bin").string() << "\n";
  return 0;
}

int cmd_analyze(const std::string& manifest_path, const std::string& out_dir) {
  fs::path mpath(manifest_path);
  fes::io::RunManifest manifest = fes::io::read_run_manifest(mpath);
  fs::path root = mpath.parent_path();
  fs::path out(out_dir.empty() ? (root / "analysis").string() : out_dir);
  fs::create_directories(out);

  // Group trials by subject directory prefix.
  std::map<std::string, std::vector<std::string>> by_subject;
  for (const auto& t : manifest.trial_dirs) {
    auto slash = t.find('/');
    fes::require(slash != std::string::npos, fes::ErrorCategory::data,
                 "malformed trial path in manifest: " + t);
    by_subject[t.substr(0, slash)].push_back(t);
  }

  for (const auto& [subject, trials] : by_subject) {
    json subject_report;
    subject_report["schema_version"] = 1;
    subject_report["subject"] = subject;
    subject_report["config_hash"] = manifest.config_hash;
    subject_report["trials"] = json::array();
    fs::path maps_dir = out / subject / "maps";
    fs::create_directories(maps_dir);

    for (const auto& tdir : trials) {
      fs::path dir = root / tdir;
      json tj = fes::io::read_json(dir / "trial.json");
      fes::TrialRecord rec;
      rec.condition = fes::condition_from_name(tj.at("condition").get<std::string>());
      rec.target_level = tj.at("level").get<double>();
      rec.duration_s = tj.at("duration_s").get<double>();
      rec.mvc_n = tj.at("mvc_n").get<double>();
      if (!tj.at("stim_amplitude_ma").is_null())
        rec.stim_amplitude_ma = tj.at("stim_amplitude_ma").get<double>();
      rec.emg = fes::io::read_emg(dir / "emg.bin");
      rec.force.trace = fes::io::read_force_csv(dir / "force.csv", 1000.0);

      fes::PeriodSet periods = fes::make_default_periods(rec.target_level, rec.duration_s);
      fes::TrialAnalysis a = fes::analyze_trial(rec, periods);
      json aj = fes::io::trial_analysis_json(a);

      std::string base = fes::io::trial_dir_name(rec.condition, rec.target_level);
      fes::io::write_matrix_csv(a.map_initial.base, a.map_initial.rows, a.map_initial.cols,
                                maps_dir / (base + "_initial_base.csv"));
      fes::io::write_matrix_csv(a.map_initial.interpolated, a.map_initial.rows * 10,
                                a.map_initial.cols * 10,
                                maps_dir / (base + "_initial_interp.csv"));
      fes::io::write_matrix_csv(a.map_final.base, a.map_final.rows, a.map_final.cols,
                                maps_dir / (base + "_final_base.csv"));
      fes::io::write_matrix_csv(a.map_final.interpolated, a.map_final.rows * 10,
                                a.map_final.cols * 10, maps_dir / (base + "_final_interp.csv"));
      aj["maps"] = {{"initial_base", (fs::path(subject) / "maps" / (base + "_initial_base.csv"))
                                         .generic_string()},
                    {"initial_interp",
                     (fs::path(subject) / "maps" / (base + "_initial_interp.csv")).generic_string()},
                    {"final_base",
                     (fs::path(subject) / "maps" / (base + "_final_base.csv")).generic_string()},
                    {"final_interp",
                     (fs::path(subject) / "maps" / (base + "_final_interp.csv")).generic_string()}};
      subject_report["trials"].push_back(aj);
    }
    fes::io::write_json(out / (subject + "_analysis.json"), subject_report);
    std::cout << "analysis written: " << (out / (subject + "_analysis.json")).string() << "\n";
  }
  return 0;
}

struct TrialKey {
  std::string condition;
  double level;
  bool operator<(const TrialKey& o) const {
    if (condition != o.condition) return condition < o.condition;
    return level < o.level;
  }
};

int cmd_stats(const std::vector<std::string>& inputs, const std::string& out_dir) {
  fes::require(inputs.size() >= 2, fes::ErrorCategory::usage,
               "group statistics require at least 2 subjects (analysis reports)");
  std::vector<json> reports;
  for (const auto& p : inputs) reports.push_back(fes::io::read_json(p));

  // value maps per subject: (condition, level) -> metric
  auto collect = [&](const char* field) {
    std::vector<std::map<TrialKey, double>> per_subject;
    for (const auto& r : reports) {
      std::map<TrialKey, double> m;
      for (const auto& t : r.at("trials")) {
        TrialKey key{t.at("condition").get<std::string>(), t.at("level").get<double>()};
        if (std::string(field) == "normalized_rms_final")
          m[key] = t.at("normalized_rms").back().get<double>();
        else if (std::string(field) == "stim_amplitude_ma") {
          if (!t.at("stim_amplitude_ma").is_null())
            m[key] = t.at("stim_amplitude_ma").get<double>();
        } else
          m[key] = t.at(field).get<double>();
      }
      per_subject.push_back(std::move(m));
    }
    return per_subject;
  };

  std::vector<double> levels;
  for (const auto& t : reports.front().at("trials")) {
    double l = t.at("level").get<double>();
    if (std::find(levels.begin(), levels.end(), l) == levels.end()) levels.push_back(l);
  }
  std::sort(levels.begin(), levels.end());
  const std::vector<std::string> cond_order = {"vol", "hf", "lf"};

  json out_tests = json::array();
  auto run_family = [&](const std::string& family, const char* field) {
    auto data = collect(field);
    for (double level : levels) {
      std::vector<std::string> present;
      for (const auto& c : cond_order) {
        bool all = true;
        for (const auto& m : data) all = all && m.count(TrialKey{c, level});
        if (all) present.push_back(c);
      }
      if (present.size() < 2) continue;
      fes::RepeatedMeasures rm;
      rm.subjects = static_cast<int>(data.size());
      rm.factor_levels = {static_cast<int>(present.size())};
      for (const auto& m : data)
        for (const auto& c : present) rm.data.push_back(m.at(TrialKey{c, level}));
      fes::AnalysisPlan plan = fes::select_tests(rm);
      char label[64];
      snprintf(label, sizeof label, "%s@%d%%MVC", family.c_str(),
               static_cast<int>(level * 100 + 0.5));
      for (const auto& t : plan.omnibus) {
        json tj = fes::io::test_result_json(t, t.p, t.p < plan.alpha);
        tj["family"] = label;
        tj["branch"] = plan.parametric ? "parametric" : "nonparametric";
        out_tests.push_back(tj);
      }
      for (const auto& ph : plan.posthoc) {
        json tj = fes::io::test_result_json(ph.test, ph.p_adjusted, ph.significant);
        tj["family"] = label;
        tj["comparison"] = present[ph.level_a] + " vs " + present[ph.level_b];
        out_tests.push_back(tj);
      }
    }
  };
  run_family("residual_force", "residual_force_pct_mvc");
  run_family("normalized_rms_final", "normalized_rms_final");

  // Stimulation amplitudes: two-way design (frequency x level) when complete.
  {
    auto data = collect("stim_amplitude_ma");
    bool complete = true;
    for (const auto& m : data)
      for (const auto& c : {std::string("hf"), std::string("lf")})
        for (double level : levels) complete = complete && m.count(TrialKey{c, level});
    if (complete && levels.size() >= 2) {
      fes::RepeatedMeasures rm;
      rm.subjects = static_cast<int>(data.size());
      rm.factor_levels = {2, static_cast<int>(levels.size())};
      for (const auto& m : data)
        for (const auto& c : {std::string("lf"), std::string("hf")})
          for (double level : levels) rm.data.push_back(m.at(TrialKey{c, level}));
      for (const auto& t : fes::rm_anova(rm)) {
        json tj = fes::io::test_result_json(t, t.p, t.p < 0.05);
        tj["family"] = "stim_amplitude(frequency x level)";
        out_tests.push_back(tj);
      }
    }
  }

  fs::path out(out_dir.empty() ? "." : out_dir);
  fs::create_directories(out);
  json doc{{"schema_version", 1}, {"subjects", inputs.size()}, {"alpha", 0.05},
           {"tests", out_tests}};
  fes::io::write_json(out / "stats_report.json", doc);
  std::cout << "stats report written: " << (out / "stats_report.json").string() << " ("
            << out_tests.size() << " tests)\n";
  return 0;
}

int cmd_report(const std::string& analysis_path, const std::string& out_dir) {
  json a = fes::io::read_json(analysis_path);
  fs::path out(out_dir.empty() ? "." : out_dir);
  fs::create_directories(out);
  fs::path analysis_root = fs::path(analysis_path).parent_path();

  std::map<double, std::vector<json>> by_level;
  for (const auto& t : a.at("trials")) by_level[t.at("level").get<double>()].push_back(t);

  for (const auto& [level, trials] : by_level) {
    char suffix[16];
    snprintf(suffix, sizeof suffix, "%02d", static_cast<int>(level * 100 + 0.5));
    std::vector<fes::svg::Series> force_series, rms_series;
    json residual_table = json::array();
    for (const auto& t : trials) {
      fes::svg::Series fs_series, rs;
      fs_series.label = t.at("condition").get<std::string>();
      rs.label = fs_series.label;
      const auto& periods = t.at("periods");
      for (std::size_t i = 0; i < periods.size(); ++i) {
        double center = (periods[i][0].get<double>() + periods[i][1].get<double>()) / 2.0;
        fs_series.x.push_back(center);
        fs_series.y.push_back(t.at("force_period_means_n")[i].get<double>());
        rs.x.push_back(center);
        rs.y.push_back(t.at("normalized_rms")[i].get<double>());
      }
      force_series.push_back(std::move(fs_series));
      rms_series.push_back(std::move(rs));
      residual_table.push_back({{"condition", t.at("condition")},
                                {"residual_force_pct_mvc", t.at("residual_force_pct_mvc")}});

      // Spatial heatmaps from the interpolated map CSVs.
      if (t.contains("maps")) {
        fs::path interp = analysis_root / t.at("maps").at("final_interp").get<std::string>();
        if (fs::exists(interp)) {
          std::ifstream in(interp);
          std::vector<double> m;
          std::string line;
          int rows = 0, cols = 0;
          while (std::getline(in, line)) {
            if (line.empty()) continue;
            ++rows;
            int c = 0;
            std::size_t pos = 0;
            while (pos != std::string::npos) {
              std::size_t next = line.find(',', pos);
              m.push_back(std::stod(line.substr(pos, next - pos)));
              ++c;
              pos = next == std::string::npos ? next : next + 1;
            }
            cols = c;
          }
          fes::svg::heatmap(m, rows, cols,
                            t.at("condition").get<std::string>() + " spatial RMS (final), " +
                                std::to_string(static_cast<int>(level * 100 + 0.5)) + "%MVC",
                            out / ("map_" + t.at("condition").get<std::string>() + "_" + suffix +
                                   ".svg"));
        }
      }
    }
    fes::svg::line_plot(force_series, std::string("Force by period, ") + suffix + "%MVC",
                        "time (s)", "force (N)", out / (std::string("force_") + suffix + ".svg"));
    fes::svg::line_plot(rms_series, std::string("Normalized RMS, ") + suffix + "%MVC", "time (s)",
                        "normalized RMS", out / (std::string("rms_") + suffix + ".svg"));
    fes::io::write_json(out / (std::string("residual_") + suffix + ".json"), residual_table);
  }
  std::cout << "report figures written under " << out.string() << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"FES fatigue simulation and EMG analysis toolkit"};
  app.require_subcommand(0, 1);

  std::string config_path, out_dir;
  std::uint64_t seed_override = 0;
  bool seed_set = false, print_defaults = false, stamp = false;
  int jobs_override = 0;
  app.add_option("--config", config_path, "experiment config JSON");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed",
                 [&](const std::vector<std::string>& v) {
                   seed_override = std::stoull(v.front());
                   seed_set = true;
                   return true;
                 },
                 "master seed override");
  app.add_option("--jobs", jobs_override, "worker threads");
  app.add_flag("--print-defaults", print_defaults, "print the default config and exit");
  app.add_flag("--stamp", stamp, "include a wall-clock timestamp in the run manifest");

  auto* sim = app.add_subcommand("simulate", "run the trial battery");
  std::vector<std::string> only_conditions;
  std::vector<double> only_levels;
  sim->add_option("--conditions", only_conditions, "subset of conditions (vol,hf,lf)")
      ->delimiter(',');
  sim->add_option("--levels", only_levels, "subset of force levels")->delimiter(',');

  auto* clean = app.add_subcommand("clean", "remove stimulation artifacts from a record");
  std::string clean_input, clean_protocol, clean_baseline, clean_truth;
  clean->add_option("--input", clean_input, "EMG record (.bin)")->required();
  clean->add_option("--protocol", clean_protocol, "lf or hf")->required();
  clean->add_option("--baseline", clean_baseline, "rest-state record for LF replacement");
  clean->add_option("--truth", clean_truth, "clean ground-truth record (attenuation reporting)");

  auto* analyze = app.add_subcommand("analyze", "compute force/EMG metrics for a run");
  std::string manifest_path;
  analyze->add_option("--manifest", manifest_path, "run_manifest.json path")->required();

  auto* stats = app.add_subcommand("stats", "group statistics over subject analysis reports");
  std::vector<std::string> stats_inputs;
  stats->add_option("--inputs", stats_inputs, "analysis.json files, one per subject")
      ->delimiter(',')
      ->required();

  auto* report = app.add_subcommand("report", "render plots from an analysis report");
  std::string report_analysis;
  report->add_option("--analysis", report_analysis, "subject analysis JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (print_defaults) {
      fes::ExperimentConfig cfg;
      std::cout << fes::config_canonical(cfg) << "\n";
      return 0;
    }
    fes::ExperimentConfig cfg = load_config(config_path);
    if (seed_set) cfg.master_seed = seed_override;
    if (jobs_override > 0) cfg.trial.jobs = jobs_override;

    if (sim->parsed()) return cmd_simulate(cfg, out_dir, only_conditions, only_levels, stamp);
    if (clean->parsed())
      return cmd_clean(clean_input, clean_protocol, clean_baseline, clean_truth, out_dir,
                       cfg.master_seed, cfg.trial.jobs);
    if (analyze->parsed()) return cmd_analyze(manifest_path, out_dir);
    if (stats->parsed()) return cmd_stats(stats_inputs, out_dir);
    if (report->parsed()) return cmd_report(report_analysis, out_dir);
    std::cout << app.help();
    return 1;
  } catch (const fes::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
