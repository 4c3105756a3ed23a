#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tgbplane/presets.hpp"

using namespace tgbplane;
using namespace tgbplane::sim;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kInvalidArgument;
}

SimConfig small_config(std::uint32_t n, std::uint64_t seed = 3) {
  SimConfig c;
  c.n_producers = n;
  c.duration_s = 600.0;
  c.tau0_s = 0.05;
  c.tau_slope_s = 1e-5;
  c.interarrival = {true, 0.5};
  c.seed = seed;
  return c;
}

std::vector<PolicySpec> every_policy() {
  return {PolicySpec::naive(), PolicySpec::fixed(10), PolicySpec::incr(), PolicySpec::aimd(0.5),
          PolicySpec::dac(),   PolicySpec::fixed_gap(0.2)};
}

}  // namespace

TEST(Simulator, SingleProducerNeverConflicts) {
  for (const auto& p : every_policy()) {
    auto r = simulate(small_config(1), {p});
    EXPECT_EQ(r.conflicts, 0u) << p.name();
    EXPECT_EQ(r.conflict_rate, 0.0) << p.name();
    EXPECT_GT(r.successes, 0u) << p.name();
  }
}

TEST(Simulator, SameSeedSameBytes) {
  auto cfg = small_config(8);
  for (const auto& p : every_policy()) {
    EXPECT_EQ(simulate(cfg, {p}).to_json_lines(), simulate(cfg, {p}).to_json_lines()) << p.name();
  }
  auto other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_NE(simulate(cfg, {PolicySpec::dac()}).to_json_lines(), simulate(other, {PolicySpec::dac()}).to_json_lines());
}

TEST(Simulator, EveryProducedTgbIsCommittedOnce) {
  for (const auto& p : every_policy()) {
    auto r = simulate(small_config(8), {p});
    EXPECT_EQ(r.produced, r.committed_tgbs) << p.name();
    EXPECT_EQ(r.final_manifest_entries, r.committed_tgbs) << p.name();
    EXPECT_EQ(r.attempts, r.successes + r.conflicts) << p.name();
    EXPECT_EQ(r.final_version, r.successes) << p.name();
    std::uint64_t produced = 0;
    for (const auto& pr : r.producers) {
      EXPECT_EQ(pr.produced, pr.committed_tgbs) << p.name();
      EXPECT_EQ(pr.attempts, pr.successes + pr.conflicts) << p.name();
      produced += pr.produced;
    }
    EXPECT_EQ(produced, r.produced);
  }
}

TEST(Simulator, RatesAreConsistent) {
  auto r = simulate(small_config(16), {PolicySpec::naive()});
  ASSERT_GT(r.steady_attempts, 0u);
  EXPECT_DOUBLE_EQ(r.conflict_rate, static_cast<double>(r.steady_conflicts) / static_cast<double>(r.steady_attempts));
  EXPECT_DOUBLE_EQ(r.success_rate, 1.0 - r.conflict_rate);
  EXPECT_GT(r.conflict_rate, 0.0);
}

TEST(Simulator, MixedPoliciesPerProducer) {
  auto cfg = small_config(4);
  auto r = simulate(cfg, {PolicySpec::dac(), PolicySpec::naive(), PolicySpec::fixed(10), PolicySpec::incr()});
  ASSERT_EQ(r.producers.size(), 4u);
  EXPECT_EQ(r.producers[1].policy, "Naive");
  EXPECT_EQ(r.producers[2].policy, "FIXED10");
  EXPECT_EQ(code_of([&] { simulate(cfg, {PolicySpec::dac(), PolicySpec::naive()}); }), Errc::kConfigInvalid);
}

TEST(Simulator, SeriesIsOrderedAndMonotone) {
  auto r = simulate(small_config(8), {PolicySpec::dac()});
  ASSERT_GE(r.series.size(), 5u);
  for (std::size_t i = 1; i < r.series.size(); ++i) {
    EXPECT_GT(r.series[i].t, r.series[i - 1].t);
    EXPECT_GE(r.series[i].committed_total, r.series[i - 1].committed_total);
    EXPECT_GE(r.series[i].tau, r.series[i - 1].tau * (1.0 - 1e-12));
  }
}

TEST(Simulator, RejectsInvalidConfigs) {
  auto bad = [](auto mutate) {
    auto c = small_config(4);
    mutate(c);
    return code_of([&] { simulate(c, {PolicySpec::dac()}); });
  };
  EXPECT_EQ(bad([](SimConfig& c) { c.n_producers = 0; }), Errc::kConfigInvalid);
  EXPECT_EQ(bad([](SimConfig& c) { c.tau0_s = 0.0; }), Errc::kConfigInvalid);
  EXPECT_EQ(bad([](SimConfig& c) { c.tau_slope_s = -1.0; }), Errc::kConfigInvalid);
  EXPECT_EQ(bad([](SimConfig& c) { c.warmup_s = c.duration_s; }), Errc::kConfigInvalid);
  EXPECT_EQ(bad([](SimConfig& c) { c.interarrival.mean_s = 0.0; }), Errc::kConfigInvalid);
  auto c = small_config(4);
  EXPECT_EQ(code_of([&] { simulate(c, {PolicySpec::fixed(0)}); }), Errc::kConfigInvalid);
  EXPECT_EQ(code_of([&] { simulate(c, {PolicySpec::aimd(0.5, 1.0)}); }), Errc::kConfigInvalid);
  EXPECT_EQ(code_of([&] { simulate(c, {PolicySpec::aimd(0.5, 0.0)}); }), Errc::kConfigInvalid);
}

TEST(Simulator, DacTracksTheConflictBudget) {
  auto r = simulate(budget_tracking_config(), {PolicySpec::dac()});
  EXPECT_GE(r.conflict_rate, 0.01);
  EXPECT_LE(r.conflict_rate, 0.10);
}

TEST(Simulator, AblationOrdering) {
  auto cfg = ablation_config();
  std::vector<double> throughput;
  std::vector<double> success;
  for (const auto& p : ablation_policies(cfg)) {
    auto r = simulate(cfg, {p});
    throughput.push_back(r.throughput_tgbs_s);
    success.push_back(r.success_rate);
  }
  // DAC, INCR, FIXED100, AIMD, FIXED10, Naive
  for (std::size_t i = 1; i < throughput.size(); ++i) EXPECT_GT(throughput[0], throughput[i]) << i;
  for (std::size_t i = 0; i + 1 < throughput.size(); ++i) EXPECT_GT(throughput[i], throughput.back()) << i;
  EXPECT_GE(success[0], 0.90);
  EXPECT_LE(success.back(), 0.20);
}

TEST(ModelValidation, SingleProducerIsZero) {
  for (const auto& row : validate_model(model_validation_config(1), {0.0, 4.0}, 2000)) {
    EXPECT_EQ(row.predicted, 0.0);
    EXPECT_EQ(row.empirical, 0.0);
    EXPECT_EQ(row.failed, 0.0);
  }
}

TEST(ModelValidation, ZeroGapMatchesClosedForm) {
  auto rows = validate_model(model_validation_config(8), {0.0}, 20000);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].predicted, 1.0 - std::exp(-7.0), 1e-12);
  EXPECT_NEAR(rows[0].empirical, rows[0].predicted, 0.05);
}

TEST(ModelValidation, TwoProducersWideGapIsSmall) {
  auto rows = validate_model(model_validation_config(2), {50.0}, 20000);
  double expected = tgbtest::oracle::p_conflict(50.0, 1.0, 2);
  EXPECT_NEAR(rows[0].predicted, expected, 1e-12);
  EXPECT_LT(expected, 0.02);
  EXPECT_NEAR(rows[0].empirical, expected, 0.01);
}
