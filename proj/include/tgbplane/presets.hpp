#pragma once

#include <vector>

#include "tgbplane/sim_harness.hpp"

namespace tgbplane::sim {

// 32 DAC producers under a flat window; steady state after 10 minutes.
inline SimConfig budget_tracking_config(std::uint64_t seed = 1) {
  SimConfig c;
  c.n_producers = 32;
  c.duration_s = 3600.0;
  c.warmup_s = 600.0;
  c.tau0_s = 0.05;
  c.tau_slope_s = 0.0;
  c.interarrival = {true, 1.0};
  c.seed = seed;
  return c;
}

// Base for validate_model; gaps are expressed in units of tau0 = 1 s.
inline SimConfig model_validation_config(std::uint32_t n_producers, std::uint64_t seed = 11) {
  SimConfig c;
  c.n_producers = n_producers;
  c.tau0_s = 1.0;
  c.duration_s = 100.0;
  c.seed = seed;
  return c;
}

// Five simulated hours, 32 producers, window growing with every committed
// entry.
inline SimConfig ablation_config(std::uint64_t seed = 1) {
  SimConfig c;
  c.n_producers = 32;
  c.duration_s = 5.0 * 3600.0;
  c.tau0_s = 0.02;
  c.tau_slope_s = 6e-6;
  c.interarrival = {true, 0.4};
  c.seed = seed;
  return c;
}

// DAC, INCR, FIXED100, AIMD, FIXED10, Naive. AIMD adds one mean
// interarrival per success and halves on conflict.
inline std::vector<PolicySpec> ablation_policies(const SimConfig& c) {
  return {PolicySpec::dac(),   PolicySpec::incr(10),  PolicySpec::fixed(100),
          PolicySpec::aimd(c.interarrival.mean_s, 0.5), PolicySpec::fixed(10), PolicySpec::naive()};
}

}  // namespace tgbplane::sim
