#include <catch2/catch_amalgamated.hpp>

#include "fes/stim_protocol.hpp"

using namespace fes;

TEST_CASE("LF default train structure", "[stim]") {
  LfParams p;
  StimTrain t = synthesize_lf(p, 1.0, 100000.0);
  REQUIRE(t.size() == 100000);

  std::int64_t pos = 0, neg = 0, zero = 0;
  for (double s : t.samples_ma) {
    if (s == p.amplitude_ma) ++pos;
    else if (s == -p.amplitude_ma) ++neg;
    else if (s == 0.0) ++zero;
  }
  CHECK(pos == 1500); // 30 pulses * 50 samples per phase
  CHECK(neg == 1500);
  CHECK(zero == 100000 - 3000);

  auto runs = pulse_runs(t);
  REQUIRE(runs.size() == 60); // 30 biphasic pairs
  for (std::size_t i = 0; i < runs.size(); i += 2) {
    CHECK(runs[i].amplitude_ma == p.amplitude_ma);
    CHECK(runs[i].length == 50);
    CHECK(runs[i + 1].amplitude_ma == -p.amplitude_ma);
    CHECK(runs[i + 1].length == 50);
    CHECK(runs[i + 1].begin == runs[i].begin + 50); // negative phase immediately follows
  }
}

TEST_CASE("zero amplitude trains are silent", "[stim]") {
  LfParams lf;
  lf.amplitude_ma = 0.0;
  StimTrain t = synthesize_lf(lf, 0.5, 100000.0);
  for (double s : t.samples_ma) REQUIRE(s == 0.0);
  CHECK(measure_duty_cycle(t) == 0.0);

  HfParams hf;
  hf.amplitude_ma = 0.0;
  StimTrain h = synthesize_hf(hf, 0.5, 100000.0);
  for (double s : h.samples_ma) REQUIRE(s == 0.0);
}

TEST_CASE("HF default train structure and duty cycle", "[stim]") {
  HfParams p;
  REQUIRE(p.pulses_per_polarity() == 166);
  StimTrain t = synthesize_hf(p, 1.0, 100000.0);

  auto runs = pulse_runs(t);
  // 30 bursts of 332 pulses each.
  REQUIRE(runs.size() == 30 * 332);
  // First burst: 166 positive then 166 negative, carrier spacing exactly 10
  // samples, pulses 8 samples wide.
  for (int i = 0; i < 332; ++i) {
    CHECK(runs[i].length == 8);
    CHECK(runs[i].amplitude_ma == (i < 166 ? p.amplitude_ma : -p.amplitude_ma));
    if (i > 0) CHECK(runs[i].begin - runs[i - 1].begin == 10);
  }

  double duty = measure_duty_cycle(t);
  CHECK(duty >= 0.79);
  CHECK(duty <= 0.80);
  // Total on-time per second within one pulse pair of the nominal 0.8 s.
  double on_time = duty * 1.0;
  CHECK(std::abs(on_time - 0.8) <= 30.0 * 2.0 * p.pulse_width_s);
}

TEST_CASE("net charge is zero and removing a pulse flags imbalance", "[stim]") {
  StimTrain lf = synthesize_lf(LfParams{}, 2.0, 100000.0);
  ChargeBalance cb = verify_charge_balance(lf);
  CHECK(cb.net_ma_s == 0.0);
  CHECK_FALSE(cb.flagged);

  HfParams hp;
  StimTrain hf = synthesize_hf(hp, 2.0, 100000.0);
  cb = verify_charge_balance(hf);
  CHECK(std::abs(cb.net_ma_s) <= 1e-9 * cb.total_abs_ma_s);
  CHECK_FALSE(cb.flagged);

  // Remove one positive pulse: expect net = -A * pulse_width.
  auto runs = pulse_runs(hf);
  for (std::int64_t i = runs[0].begin; i < runs[0].begin + runs[0].length; ++i)
    hf.samples_ma[i] = 0.0;
  cb = verify_charge_balance(hf);
  CHECK(cb.flagged);
  CHECK(cb.net_ma_s == Catch::Approx(-hp.amplitude_ma * hp.pulse_width_s).epsilon(1e-9));
}

TEST_CASE("duty cycle of LF is analytic", "[stim]") {
  StimTrain t = synthesize_lf(LfParams{}, 1.0, 100000.0);
  CHECK(measure_duty_cycle(t) == Catch::Approx(0.03).margin(1e-12));
}

TEST_CASE("trains are periodic when the rate divides the frequency", "[stim]") {
  // 150 kHz is divisible by both the 30 Hz envelope and the 10 kHz carrier.
  double fs = 150000.0;
  std::int64_t period = 5000;
  StimTrain lf = synthesize_lf(LfParams{}, 0.5, fs);
  for (std::int64_t i = 0; i + period < lf.size(); ++i)
    REQUIRE(lf.samples_ma[i] == lf.samples_ma[i + period]);
  StimTrain hf = synthesize_hf(HfParams{}, 0.5, fs);
  for (std::int64_t i = 0; i + period < hf.size(); ++i)
    REQUIRE(hf.samples_ma[i] == hf.samples_ma[i + period]);
}

TEST_CASE("synthesis is deterministic", "[stim]") {
  StimTrain a = synthesize_hf(HfParams{}, 1.5, 100000.0);
  StimTrain b = synthesize_hf(HfParams{}, 1.5, 100000.0);
  CHECK(a.samples_ma == b.samples_ma);
}

TEST_CASE("synthesis rejects invalid parameters", "[stim]") {
  CHECK_THROWS_AS(synthesize_lf(LfParams{}, 1.0, 10000.0), Error);   // undersampled
  CHECK_THROWS_AS(synthesize_lf(LfParams{}, 0.0, 100000.0), Error);  // empty duration
  CHECK_THROWS_AS(synthesize_lf(LfParams{}, -1.0, 100000.0), Error);

  LfParams too_wide;
  too_wide.pulse_width_s = 0.02; // pair does not fit a 33 ms period
  CHECK_THROWS_AS(synthesize_lf(too_wide, 1.0, 1000000.0), Error);

  HfParams crowded;
  crowded.burst_frequency_hz = 8000.0; // burst cannot hold a balanced pair
  CHECK_THROWS_AS(synthesize_hf(crowded, 1.0, 100000.0), Error);

  // Carrier not an integer number of samples.
  CHECK_THROWS_AS(synthesize_hf(HfParams{}, 1.0, 25000.0), Error);

  LfParams negative;
  negative.amplitude_ma = -1.0;
  CHECK_THROWS_AS(synthesize_lf(negative, 1.0, 100000.0), Error);
}

TEST_CASE("duty cycle of empty train rejected", "[stim]") {
  StimTrain t;
  CHECK_THROWS_AS(measure_duty_cycle(t), Error);
}
