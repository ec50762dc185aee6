#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fes/muscle_force.hpp"
#include "fes/rng.hpp"

using namespace fes;

namespace {

MotorUnit test_unit(double peak = 0.02, double t_contr = 0.06) {
  MotorUnit u;
  u.twitch_peak_n = peak;
  u.contraction_time_s = t_contr;
  u.fatigue_rate_per_s = 0.03;
  u.recovery_rate_per_s = 0.04;
  u.rate_max_hz = 40.0;
  u.phi_min = 0.2;
  return u;
}

} // namespace

TEST_CASE("twitch kernel peak, origin and integral", "[muscle]") {
  MotorUnit u = test_unit();
  u.fatigue_factor = 0.8;
  CHECK(twitch(u, u.contraction_time_s) ==
        Catch::Approx(u.fatigue_factor * u.twitch_peak_n).epsilon(1e-14));
  CHECK(twitch(u, 0.0) == 0.0);
  CHECK_THROWS_AS(twitch(u, -0.1), Error);

  // Numeric quadrature of the kernel vs the closed form peak * T * e.
  double dt = u.contraction_time_s / 4000.0;
  double integral = 0.0;
  for (double t = 0.0; t < 50.0 * u.contraction_time_s; t += dt)
    integral += 0.5 * (twitch(u, t) + twitch(u, t + dt)) * dt;
  double expected = u.fatigue_factor * u.twitch_peak_n * u.contraction_time_s * std::exp(1.0);
  CHECK(integral == Catch::Approx(expected).epsilon(1e-6));
}

TEST_CASE("force_from_spikes basics", "[muscle]") {
  std::vector<MotorUnit> units = {test_unit()};
  SpikeTrainSet empty;
  empty.spikes.resize(1);
  ForceResult r = force_from_spikes(empty, units, 2.0);
  for (double v : r.trace.samples_n) REQUIRE(v == 0.0);

  SpikeTrainSet one;
  one.spikes = {{0.5}};
  std::vector<MotorUnit> fresh = {test_unit()};
  r = force_from_spikes(one, fresh, 2.0, 1000.0, /*fatigue_enabled=*/false);
  double fs = 1000.0;
  for (std::int64_t i = 0; i < 2000; ++i) {
    double t = static_cast<double>(i) / fs - 0.5;
    double expected = t < 0.0 ? 0.0 : twitch(fresh[0], t);
    if (t > 10.0 * fresh[0].contraction_time_s) expected = 0.0; // kernel support ends
    REQUIRE(r.trace.samples_n[i] == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("superposition matches a brute-force oracle", "[muscle]") {
  std::vector<MotorUnit> units = {test_unit(0.02, 0.05), test_unit(0.07, 0.08)};
  Rng rng(99);
  SpikeTrainSet spikes;
  spikes.spikes.resize(2);
  for (int u = 0; u < 2; ++u) {
    double t = 0.05;
    while (t < 3.0) {
      spikes.spikes[u].push_back(t);
      t += rng.uniform(0.03, 0.2);
    }
  }
  std::vector<MotorUnit> fresh = units;
  ForceResult r = force_from_spikes(spikes, fresh, 3.0, 1000.0, /*fatigue_enabled=*/false);

  // Independent direct summation over snapped spike times.
  double fs = 1000.0;
  for (std::int64_t i = 0; i < 3000; i += 7) {
    double expected = 0.0;
    for (int u = 0; u < 2; ++u) {
      std::size_t len = static_cast<std::size_t>(std::ceil(10.0 * units[u].contraction_time_s * fs));
      for (double s : spikes.spikes[u]) {
        std::int64_t s0 = std::llround(s * fs);
        if (i < s0 || i >= s0 + static_cast<std::int64_t>(len)) continue;
        double t = static_cast<double>(i - s0) / fs;
        expected += twitch(units[u], t);
      }
    }
    REQUIRE(r.trace.samples_n[i] == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("fatigue law fixed point and closed-form decay", "[muscle]") {
  MotorUnit u = test_unit();
  MotorUnit same = update_fatigue(u, 0.0, 1e-3);
  CHECK(same.fatigue_factor == 1.0);

  // Held at rate_max the recovery term vanishes:
  // phi(t) = phi_min + (1 - phi_min) * exp(-k_f t).
  double dt = 1e-3;
  MotorUnit s = u;
  for (int i = 0; i < 10000; ++i) s = update_fatigue(s, s.rate_max_hz, dt);
  double t = 10.0;
  double expected = u.phi_min + (1.0 - u.phi_min) * std::exp(-u.fatigue_rate_per_s * t);
  CHECK(s.fatigue_factor == Catch::Approx(expected).margin(2e-4));
}

TEST_CASE("spreading spikes over more units preserves fatigue", "[muscle]") {
  // Same total spike count: 2 units at 30 Hz vs 4 units at 15 Hz.
  auto run = [&](int n_units, double rate) {
    std::vector<MotorUnit> units(n_units, test_unit());
    SpikeTrainSet spikes;
    spikes.spikes.resize(n_units);
    for (int u = 0; u < n_units; ++u)
      for (double t = 0.01; t < 60.0; t += 1.0 / rate) spikes.spikes[u].push_back(t);
    force_from_spikes(spikes, units, 60.0);
    double mean = 0.0;
    for (const auto& unit : units) mean += unit.fatigue_factor;
    return mean / n_units;
  };
  double concentrated = run(2, 30.0);
  double spread = run(4, 15.0);
  CHECK(spread > concentrated);
}

TEST_CASE("MVC equals the analytic tetanic plateau and scales linearly", "[muscle]") {
  std::vector<MotorUnit> one = {test_unit(0.01, 0.06)};
  double m1 = mvc(one);
  double analytic = 0.01 * std::exp(1.0) * 0.06 * 40.0;
  CHECK(m1 == Catch::Approx(analytic).epsilon(0.01));

  std::vector<MotorUnit> two = {test_unit(0.01, 0.06), test_unit(0.01, 0.06)};
  CHECK(mvc(two) == Catch::Approx(2.0 * m1).epsilon(1e-9));
}

TEST_CASE("scaling twitch peaks scales MVC and fatigue-free traces", "[muscle]") {
  AxonPool pool = build_pool(30, DiameterDistribution{}, AxonPhysiology{}, 31);
  std::vector<MotorUnit> units = make_units(pool, UnitConfig{});
  std::vector<MotorUnit> scaled = units;
  for (auto& u : scaled) u.twitch_peak_n *= 2.5;
  CHECK(mvc(scaled) == Catch::Approx(2.5 * mvc(units)).epsilon(1e-9));

  HfParams p;
  p.amplitude_ma = 4.0;
  StimTrain t = synthesize_hf(p, 3.0, 100000.0);
  SpikeTrainSet spikes = simulate_pool(pool, t, 1e-5);
  auto a = units;
  auto b = scaled;
  ForceResult ra = force_from_spikes(spikes, a, 3.0, 1000.0, false);
  ForceResult rb = force_from_spikes(spikes, b, 3.0, 1000.0, false);
  for (std::size_t i = 0; i < ra.trace.samples_n.size(); i += 13)
    REQUIRE(rb.trace.samples_n[i] == Catch::Approx(2.5 * ra.trace.samples_n[i]).margin(1e-12));
}

TEST_CASE("make_units follows the size principle by construction", "[muscle]") {
  AxonPool pool = build_pool(40, DiameterDistribution{}, AxonPhysiology{}, 37);
  auto units = make_units(pool, UnitConfig{});
  // Larger twitch => larger fatigue rate; smallest twitch has lowest threshold.
  std::size_t smallest = 0, largest = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (units[i].twitch_peak_n < units[smallest].twitch_peak_n) smallest = i;
    if (units[i].twitch_peak_n > units[largest].twitch_peak_n) largest = i;
    if (i > 0) {
      CHECK(units[i].twitch_peak_n < units[i - 1].twitch_peak_n); // pool is descending
      CHECK(units[i].fatigue_rate_per_s < units[i - 1].fatigue_rate_per_s);
    }
  }
  for (const auto& u : units) {
    CHECK(u.recruit_threshold >= units[smallest].recruit_threshold);
    CHECK(u.recruit_threshold <= units[largest].recruit_threshold);
  }
}

TEST_CASE("amplitude calibration converges and reports the unreachable case", "[muscle]") {
  AxonPool pool = build_pool(60, DiameterDistribution{}, AxonPhysiology{}, 41);
  auto units = make_units(pool, UnitConfig{});
  double m = mvc(units);

  HfParams p;
  p.amplitude_ma = 1.0;
  StimTrain unit_train = synthesize_hf(p, 15.0, 100000.0);
  CalibrationResult cal = calibrate_amplitude(unit_train, pool, units, m, 0.10, 1e-5, {}, 2);
  REQUIRE(cal.converged);
  CHECK(std::abs(cal.achieved_frac_mvc - 0.10) <= 0.02);

  // Re-simulating at the calibrated amplitude reproduces the target window mean.
  HfParams at;
  at.amplitude_ma = cal.amplitude_ma;
  StimTrain t = synthesize_hf(at, 15.0, 100000.0);
  SpikeTrainSet spikes = simulate_pool(pool, t, 1e-5, 2);
  auto fresh = units;
  ForceResult r = force_from_spikes(spikes, fresh, 15.0);
  double window = detail::mean_force_window(r.trace, 5.0, 15.0);
  CHECK(std::abs(window / m - 0.10) <= 0.02);

  CHECK_THROWS_AS(calibrate_amplitude(unit_train, pool, units, m, 0.0, 1e-5), Error);

  CalibrationConfig tight;
  tight.amplitude_max_ma = 0.4;
  CalibrationResult blocked = calibrate_amplitude(unit_train, pool, units, m, 0.4, 1e-5, tight);
  CHECK_FALSE(blocked.converged);
  CHECK(blocked.achieved_frac_mvc < 0.4);
}

TEST_CASE("voluntary controller tracks a low target", "[muscle]") {
  AxonPool pool = build_pool(80, DiameterDistribution{}, AxonPhysiology{}, 43);
  auto units = make_units(pool, UnitConfig{});
  double m = mvc(units);
  auto fresh = units;
  VoluntaryResult r = voluntary_trial(fresh, m, 0.05, 25.0, VoluntaryConfig{}, 4242);
  // After the startup ramp the force holds within 2 %MVC of target.
  for (double t = 3.0; t < 24.0; t += 1.0) {
    double sum = 0.0;
    for (int i = 0; i < 1000; ++i) sum += r.force.trace.samples_n[std::llround(t * 1000) + i];
    CHECK(std::abs(sum / 1000.0 / m - 0.05) <= 0.02);
  }
  // Spiking units are the low-threshold (small-twitch) ones.
  double max_active_twitch = 0.0, min_silent_twitch = 1e300;
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    if (!r.spikes.spikes[i].empty())
      max_active_twitch = std::max(max_active_twitch, fresh[i].twitch_peak_n);
    else
      min_silent_twitch = std::min(min_silent_twitch, fresh[i].twitch_peak_n);
  }
  CHECK(max_active_twitch < min_silent_twitch);
}

TEST_CASE("saturated voluntary drive yields a monotone force decline", "[muscle]") {
  AxonPool pool = build_pool(60, DiameterDistribution{}, AxonPhysiology{}, 47);
  auto units = make_units(pool, UnitConfig{});
  double m = mvc(units);
  auto fresh = units;
  VoluntaryResult r = voluntary_trial(fresh, m, 0.9999, 90.0, VoluntaryConfig{}, 515);
  CHECK(r.drive_final == 1.0);

  // Smoothed force after the rise is non-increasing (small jitter tolerance).
  std::vector<double> coarse;
  for (double t = 5.0; t + 5.0 <= 90.0; t += 5.0) {
    double sum = 0.0;
    for (int i = 0; i < 5000; ++i) sum += r.force.trace.samples_n[std::llround(t * 1000) + i];
    coarse.push_back(sum / 5000.0);
  }
  for (std::size_t i = 1; i < coarse.size(); ++i)
    CHECK(coarse[i] <= coarse[i - 1] * 1.01);
}

TEST_CASE("force traces are nonnegative and finite", "[muscle]") {
  AxonPool pool = build_pool(30, DiameterDistribution{}, AxonPhysiology{}, 53);
  auto units = make_units(pool, UnitConfig{});
  HfParams p;
  p.amplitude_ma = 5.0;
  StimTrain t = synthesize_hf(p, 4.0, 100000.0);
  SpikeTrainSet spikes = simulate_pool(pool, t, 1e-5);
  ForceResult r = force_from_spikes(spikes, units, 4.0);
  for (double v : r.trace.samples_n) {
    REQUIRE(v >= 0.0);
    REQUIRE(std::isfinite(v));
  }
}
