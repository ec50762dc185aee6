#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "fes/axon_pool.hpp"
#include "fes/rng.hpp"

using namespace fes;

namespace {

AxonPool single_axon_pool(double gain, double tau, double threshold, double refractory,
                          double eta = 0.0) {
  AxonPool pool;
  Axon a;
  a.id = 0;
  a.diameter_um = 15.0;
  a.gain_mv_per_ma_s = gain;
  a.tau_m_s = tau;
  a.threshold_mv = threshold;
  a.refractory_s = refractory;
  a.threshold_noise_frac = 0.0;
  pool.axons.push_back(a);
  pool.anodic_efficacy = eta;
  return pool;
}

} // namespace

TEST_CASE("pool construction is deterministic and ordered", "[axon]") {
  DiameterDistribution dist{5.0, 20.0, 1.2};
  AxonPool a = build_pool(120, dist, AxonPhysiology{}, 7);
  AxonPool b = build_pool(120, dist, AxonPhysiology{}, 7);
  REQUIRE(a.size() == 120);
  for (int i = 0; i < 120; ++i) {
    REQUIRE(a.axons[i].diameter_um == b.axons[i].diameter_um);
    REQUIRE(a.axons[i].gain_mv_per_ma_s == b.axons[i].gain_mv_per_ma_s);
    CHECK(a.axons[i].diameter_um >= 5.0);
    CHECK(a.axons[i].diameter_um <= 20.0);
  }
  // Descending diameter order with strictly increasing gain in diameter.
  for (int i = 1; i < 120; ++i) {
    CHECK(a.axons[i].diameter_um < a.axons[i - 1].diameter_um);
    CHECK(a.axons[i].gain_mv_per_ma_s < a.axons[i - 1].gain_mv_per_ma_s);
  }
}

TEST_CASE("exponent zero gives near-uniform diameters", "[axon]") {
  DiameterDistribution dist{5.0, 20.0, 0.0};
  AxonPool pool = build_pool(1500, dist, AxonPhysiology{}, 3);
  int low = 0;
  for (const auto& a : pool.axons)
    if (a.diameter_um < 12.5) ++low;
  CHECK(low > 600); // roughly half below the midpoint
  CHECK(low < 900);
}

TEST_CASE("pool construction rejects bad arguments", "[axon]") {
  CHECK_THROWS_AS(build_pool(0, DiameterDistribution{}, AxonPhysiology{}, 1), Error);
  CHECK_THROWS_AS(build_pool(10, DiameterDistribution{20.0, 5.0, 1.0}, AxonPhysiology{}, 1),
                  Error);
}

TEST_CASE("zero amplitude train produces no spikes", "[axon]") {
  AxonPool pool = build_pool(20, DiameterDistribution{}, AxonPhysiology{}, 5);
  HfParams p;
  p.amplitude_ma = 0.0;
  StimTrain t = synthesize_hf(p, 1.0, 100000.0);
  SpikeTrainSet s = simulate_pool(pool, t, 1e-5);
  CHECK(s.total_count() == 0);
  CHECK_FALSE(vector_strength(s, 30.0).has_value());
}

TEST_CASE("leak-free axon fires after exactly ceil(threshold/increment) pulses", "[axon]") {
  Rng rng(404);
  double inf = std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 25; ++rep) {
    double gain = rng.uniform(5.0, 80.0);
    double amp = rng.uniform(0.5, 6.0);
    double threshold = rng.uniform(0.5, 2.0);
    HfParams p;
    p.amplitude_ma = amp;
    Axon axon;
    axon.gain_mv_per_ma_s = gain;
    axon.tau_m_s = inf;
    axon.threshold_mv = threshold;
    axon.refractory_s = 0.005;
    axon.threshold_noise_frac = 0.0;

    double increment = gain * amp * p.pulse_width_s;
    auto expected = static_cast<std::int64_t>(std::ceil(threshold / increment));
    auto got = pulses_to_first_spike(axon, p, amp);
    REQUIRE(got.has_value());
    CHECK(*got == expected);

    // Leaky axon needs at least as many pulses.
    axon.tau_m_s = rng.uniform(0.005, 0.05);
    auto leaky = pulses_to_first_spike(axon, p, amp);
    if (leaky.has_value()) CHECK(*leaky >= expected);
  }
}

TEST_CASE("pulses_to_first_spike edge cases", "[axon]") {
  Axon axon;
  axon.gain_mv_per_ma_s = 30.0;
  axon.tau_m_s = 0.012;
  axon.threshold_mv = 1.0;
  axon.threshold_noise_frac = 0.0;
  HfParams p;
  CHECK_FALSE(pulses_to_first_spike(axon, p, 0.0).has_value());
  // Far subthreshold: steady-state peak never reaches threshold.
  CHECK_FALSE(pulses_to_first_spike(axon, p, 0.01).has_value());
  CHECK(pulses_to_first_spike(axon, p, 50.0).has_value());
}

TEST_CASE("recruitment is diameter-ordered across the default pool", "[axon]") {
  AxonPool pool = build_pool(60, DiameterDistribution{}, AxonPhysiology{}, 11);
  HfParams p;
  double amp = 4.0;
  std::int64_t prev = -1;
  bool seen_none = false;
  for (const auto& axon : pool.axons) { // descending diameter
    auto count = pulses_to_first_spike(axon, p, amp, pool.anodic_efficacy);
    if (!count.has_value()) {
      seen_none = true;
      continue;
    }
    CHECK_FALSE(seen_none); // once an axon stays silent, all smaller ones do
    if (prev >= 0) CHECK(*count >= prev);
    prev = *count;
  }
  CHECK(prev > 0);
  CHECK(seen_none); // default amplitude leaves part of the pool unrecruited
}

TEST_CASE("HF first-spike latencies span the pulse-count spread", "[axon]") {
  AxonPool pool = build_pool(40, DiameterDistribution{}, AxonPhysiology{}, 13);
  HfParams p;
  p.amplitude_ma = 4.0;
  StimTrain t = synthesize_hf(p, 2.0, 100000.0);
  SpikeTrainSet s = simulate_pool(pool, t, 1e-5);

  std::int64_t min_count = INT64_MAX, max_count = INT64_MIN;
  double min_lat = 1e300, max_lat = -1e300;
  for (int i = 0; i < pool.size(); ++i) {
    auto count = pulses_to_first_spike(pool.axons[i], p, p.amplitude_ma, pool.anodic_efficacy);
    if (!count.has_value() || s.spikes[i].empty()) continue;
    min_count = std::min(min_count, *count);
    max_count = std::max(max_count, *count);
    min_lat = std::min(min_lat, s.spikes[i].front());
    max_lat = std::max(max_lat, s.spikes[i].front());
  }
  REQUIRE(max_count > min_count);
  CHECK(max_lat - min_lat >=
        p.carrier_period_s() * static_cast<double>(max_count - min_count) - 1e-9);
}

TEST_CASE("suprathreshold LF spikes are locked to pulse onsets", "[axon]") {
  AxonPool pool = build_pool(30, DiameterDistribution{}, AxonPhysiology{}, 17);
  LfParams p;
  // One positive phase delivers more than threshold to the weakest axon.
  double weakest_gain = pool.axons.back().gain_mv_per_ma_s;
  p.amplitude_ma = 1.2 / (weakest_gain * p.pulse_width_s);
  StimTrain t = synthesize_lf(p, 2.0, 100000.0);
  SpikeTrainSet s = simulate_pool(pool, t, 1e-5);

  double fs = 100000.0;
  for (int i = 0; i < pool.size(); ++i) {
    // Every recruited axon fires once per period: 30 spikes/s.
    REQUIRE(s.spikes[i].size() == 60);
    for (double spike : s.spikes[i]) {
      // Distance to the containing pulse onset.
      std::int64_t k = static_cast<std::int64_t>(spike * p.base_frequency_hz);
      bool locked = false;
      for (std::int64_t kk = k - 1; kk <= k + 1; ++kk) {
        if (kk < 0) continue;
        double onset = std::llround(kk * fs / p.base_frequency_hz) / fs;
        if (spike >= onset - 1e-12 && spike <= onset + p.pulse_width_s + 1e-12) locked = true;
      }
      CHECK(locked);
    }
  }
  auto vs = vector_strength(s, 30.0);
  REQUIRE(vs.has_value());
  CHECK(*vs >= 0.99);
}

TEST_CASE("no inter-spike interval ever violates the refractory period", "[axon]") {
  AxonPool pool = build_pool(50, DiameterDistribution{}, AxonPhysiology{}, 23);
  HfParams p;
  p.amplitude_ma = 5.0;
  StimTrain t = synthesize_hf(p, 5.0, 100000.0);
  SpikeTrainSet s = simulate_pool(pool, t, 1e-5, 2);
  REQUIRE(s.total_count() > 0);
  for (int i = 0; i < pool.size(); ++i)
    for (std::size_t k = 1; k < s.spikes[i].size(); ++k)
      REQUIRE(s.spikes[i][k] - s.spikes[i][k - 1] >= pool.axons[i].refractory_s - 1e-9);
}

TEST_CASE("simulation is deterministic and independent of job count", "[axon]") {
  AxonPool pool = build_pool(40, DiameterDistribution{}, AxonPhysiology{}, 29);
  HfParams p;
  p.amplitude_ma = 4.5;
  StimTrain t = synthesize_hf(p, 2.0, 100000.0);
  SpikeTrainSet a = simulate_pool(pool, t, 1e-5, 1);
  SpikeTrainSet b = simulate_pool(pool, t, 1e-5, 4);
  REQUIRE(a.spikes == b.spikes);
}

TEST_CASE("vector strength basics", "[axon]") {
  SpikeTrainSet locked;
  locked.spikes.push_back({0.01, 0.01 + 1.0 / 30, 0.01 + 2.0 / 30, 0.01 + 3.0 / 30});
  auto vs = vector_strength(locked, 30.0);
  REQUIRE(vs.has_value());
  CHECK(*vs == Catch::Approx(1.0).margin(1e-12));

  SpikeTrainSet spread;
  spread.spikes.resize(1);
  for (int k = 0; k < 300; ++k) spread.spikes[0].push_back(k / 300.0 / 30.0);
  vs = vector_strength(spread, 30.0);
  REQUIRE(vs.has_value());
  CHECK(*vs < 1e-9);

  SpikeTrainSet empty;
  CHECK_FALSE(vector_strength(empty, 30.0).has_value());
}

TEST_CASE("dt must divide the sample period", "[axon]") {
  AxonPool pool = single_axon_pool(30.0, 0.01, 1.0, 0.005);
  StimTrain t = synthesize_hf(HfParams{}, 0.5, 100000.0);
  CHECK_THROWS_AS(simulate_pool(pool, t, 3e-6), Error);
  CHECK_THROWS_AS(simulate_pool(pool, t, 4e-5), Error);
  CHECK_NOTHROW(simulate_pool(pool, t, 5e-6));
}

TEST_CASE("brute-force per-sample integrator agrees with the sweep", "[axon]") {
  // Independent oracle: literal per-sample update
  //   V <- V*exp(-dt/tau) + gain*rect(I)*dt, reset + refractory on crossing.
  AxonPool pool = single_axon_pool(40.0, 0.012, 1.0, 0.03, 0.9);
  HfParams p;
  p.amplitude_ma = 4.0;
  StimTrain t = synthesize_hf(p, 1.0, 100000.0);
  SpikeTrainSet fast = simulate_pool(pool, t, 1e-5);

  const Axon& a = pool.axons[0];
  double dt = 1e-5;
  double rho = std::exp(-dt / a.tau_m_s);
  double v = 0.0;
  std::vector<double> slow;
  std::int64_t refr_until = 0;
  std::int64_t refr = static_cast<std::int64_t>(std::ceil(a.refractory_s / dt - 1e-9));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (i < refr_until) continue;
    double cur = t.samples_ma[i];
    double rect = cur >= 0.0 ? cur : -pool.anodic_efficacy * cur;
    v = v * rho + a.gain_mv_per_ma_s * rect * dt;
    if (v >= a.threshold_mv) {
      slow.push_back(static_cast<double>(i) * dt);
      v = 0.0;
      refr_until = i + refr;
    }
  }
  REQUIRE(fast.spikes[0].size() == slow.size());
  for (std::size_t k = 0; k < slow.size(); ++k)
    CHECK(fast.spikes[0][k] == Catch::Approx(slow[k]).margin(2 * dt));
}
