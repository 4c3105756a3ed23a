#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tgbplane/audit.hpp"
#include "tgbplane/producer.hpp"
#include "tgbplane/sim_harness.hpp"

namespace tgbplane {

struct StressConfig {
  std::string ns = "stress";
  std::uint32_t n_producers = 8;
  // Stop after this many TGBs per producer; otherwise run for duration_s.
  std::optional<std::uint64_t> tgbs_per_producer;
  double duration_s = 2.0;
  // Attempts starting earlier are left out of the steady-state counts.
  double warmup_s = 0.0;
  // Mean time between a producer's TGB writes, exponentially distributed so
  // producers do not run in lockstep; 0 writes back to back.
  double write_interval_s = 0.0;
  MeshSpec mesh{2, 2};
  std::size_t slice_bytes = 1024;
  dac::DacParams dac{};
  // Producer lag cap; a producer at the cap skips writing until it drops.
  std::optional<std::size_t> max_lag;
  // Probability that a producer dies at each crash point it passes.
  double crash_probability = 0.0;
  double finalize_deadline_s = 30.0;
  std::uint64_t seed = 1;
  // Simulated time shared by all producers; null runs in wall time. Requires
  // write_interval_s > 0 so that every producer eventually sleeps.
  std::shared_ptr<VirtualClock> clock;

  void validate() const {
    validate_namespace(ns);
    if (n_producers < 1) fail(Errc::kConfigInvalid, "n_producers must be >= 1");
    if (!tgbs_per_producer && !(duration_s > 0.0)) fail(Errc::kConfigInvalid, "duration must be > 0");
    if (!(warmup_s >= 0.0)) fail(Errc::kConfigInvalid, "warmup must be >= 0");
    if (!tgbs_per_producer && !(warmup_s < duration_s)) fail(Errc::kConfigInvalid, "warmup must be shorter than the run");
    if (!(write_interval_s >= 0.0)) fail(Errc::kConfigInvalid, "write interval must be >= 0");
    if (clock && !tgbs_per_producer && !(write_interval_s > 0.0))
      fail(Errc::kConfigInvalid, "virtual time needs write_interval_s > 0");
    if (!mesh.valid()) fail(Errc::kConfigInvalid, "mesh must be at least 1x1");
    if (max_lag && *max_lag == 0) fail(Errc::kConfigInvalid, "max_lag must be >= 1");
    if (!(crash_probability >= 0.0 && crash_probability < 1.0))
      fail(Errc::kConfigInvalid, "crash probability must lie in [0, 1)");
    dac.validate();
  }
};

struct StressResult {
  sim::SimResult sim;
  HistoryAudit audit;
  std::uint64_t crashes = 0;
  std::uint64_t lag_stalls = 0;  // writes skipped at the lag cap
  std::uint64_t expected_tgbs = 0;
  double wall_seconds = 0.0;

  // Every produced (producer, seq) committed exactly once and the history is sound.
  bool census_ok() const {
    if (!audit.ok() || audit.unique_descriptors != expected_tgbs || audit.descriptors != expected_tgbs) return false;
    for (std::size_t i = 0; i < sim.producers.size(); ++i) {
      auto it = audit.per_producer.find("p" + std::to_string(i));
      std::uint64_t got = it == audit.per_producer.end() ? 0 : it->second;
      if (got != sim.producers[i].produced) return false;
    }
    return true;
  }

  std::string to_json_lines() const {
    std::ostringstream out;
    out << sim.to_json_lines();
    out << audit.to_json_line() << '\n';
    nlohmann::json j = {{"record", "census"},   {"ok", census_ok()},          {"expected_tgbs", expected_tgbs},
                        {"crashes", crashes},   {"lag_stalls", lag_stalls},
                        {"wall_seconds", wall_seconds}};
    out << j.dump() << '\n';
    return out.str();
  }
};

namespace detail {

struct SimulatedCrash {};

inline Bytes stress_payload(std::uint32_t producer, std::uint64_t seq, std::uint32_t slice, std::size_t n) {
  Bytes b(n);
  std::uint64_t x = (static_cast<std::uint64_t>(producer) << 40) ^ (seq << 8) ^ slice;
  for (auto& byte : b) {
    x = x * 6364136223846793005ULL + 1442695040888963407ULL;
    byte = static_cast<std::uint8_t>(x >> 56);
  }
  return b;
}

}  // namespace detail

// Real ProducerClient actors, one thread each, sharing only `store`. Crashed
// producers are rebuilt with open() and carry on.
inline StressResult stress_real(std::shared_ptr<ObjectStore> store, const StressConfig& cfg) {
  cfg.validate();
  const auto wall_begin = std::chrono::steady_clock::now();
  std::shared_ptr<Clock> clock = cfg.clock ? std::shared_ptr<Clock>(cfg.clock) : default_clock();
  const double t_begin = clock->now();
  const double deadline = cfg.duration_s;
  auto elapsed = [&] { return clock->now() - t_begin; };

  StressResult result;
  result.sim.producers.resize(cfg.n_producers);
  std::atomic<std::uint64_t> crashes{0};
  std::atomic<std::uint64_t> lag_stalls{0};
  std::vector<std::string> errors(cfg.n_producers);
  struct SteadyCounts {
    std::uint64_t attempts = 0, conflicts = 0;
  };
  std::vector<SteadyCounts> steady_counts(cfg.n_producers);

  auto actor = [&](std::uint32_t index) {
    const std::string pid = "p" + std::to_string(index);
    std::mt19937_64 rng(cfg.seed * 1000003ULL + index);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ProducerOptions opts;
    opts.dac = cfg.dac;
    opts.seed = cfg.seed * 7919ULL + index + 1;
    opts.clock = clock;
    opts.max_lag = cfg.max_lag;
    std::optional<VirtualClock::Participant> participant;
    if (cfg.clock) participant.emplace(*cfg.clock);
    opts.crash_hook = [&](CrashPoint) {
      if (u01(rng) < cfg.crash_probability) throw detail::SimulatedCrash{};
    };
    auto& pr = result.sim.producers[index];
    auto& steady = steady_counts[index];
    pr.policy = "DAC";

    std::optional<ProducerClient> client;
    auto absorb = [&] {
      const auto& s = client->stats();
      pr.attempts += s.attempts;
      pr.successes += s.commits;
      pr.conflicts += s.conflicts;
      pr.committed_tgbs += s.tgbs_committed;
      pr.final_gap = client->dac_state().gap;
      for (const auto& w : s.windows) {
        double start = w.started_at - t_begin;
        if (start < cfg.warmup_s || (!cfg.tgbs_per_producer && start > cfg.duration_s)) continue;
        ++steady.attempts;
        if (!w.committed) ++steady.conflicts;
      }
    };
    auto done_writing = [&] {
      if (cfg.tgbs_per_producer) return client->next_seq() >= *cfg.tgbs_per_producer;
      return elapsed() >= deadline;
    };

    std::exponential_distribution<double> interarrival(cfg.write_interval_s > 0.0 ? 1.0 / cfg.write_interval_s : 1.0);
    double next_write = clock->now();
    bool finished = false;
    while (!finished) {
      try {
        if (!client) client.emplace(ProducerClient::open(store, cfg.ns, pid, opts));
        while (!done_writing()) {
          std::vector<Bytes> slices;
          for (std::uint32_t s = 0; s < cfg.mesh.slices(); ++s)
            slices.push_back(detail::stress_payload(index, client->next_seq(), s, cfg.slice_bytes));
          try {
            client->write_tgb(slices, cfg.mesh);
          } catch (const Error& e) {
            if (e.code() != Errc::kLagExceeded) throw;
            ++lag_stalls;
            client->tick();
            clock->sleep_for(opts.lag_poll_interval);
            continue;
          }
          client->tick();
          if (cfg.write_interval_s > 0.0) {
            next_write += interarrival(rng);
            clock->sleep_for(next_write - clock->now());
          }
        }
        client->finalize(cfg.finalize_deadline_s);
        absorb();
        pr.produced = client->next_seq();
        finished = true;
      } catch (const detail::SimulatedCrash&) {
        ++crashes;
        if (client) absorb();
        client.reset();
      } catch (const Error& e) {
        if (e.code() != Errc::kTransientIo) {
          errors[index] = e.what();
          if (client) {
            absorb();
            pr.produced = client->next_seq();
          }
          return;
        }
        clock->sleep_for(200e-6);
      }
    }
  };

  if (cfg.clock)
    for (std::uint32_t i = 0; i < cfg.n_producers; ++i) cfg.clock->join();
  std::vector<std::thread> threads;
  for (std::uint32_t i = 0; i < cfg.n_producers; ++i) threads.emplace_back(actor, i);
  for (auto& t : threads) t.join();
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_begin).count();
  const double run_seconds = elapsed();

  auto& sim = result.sim;
  for (const auto& p : sim.producers) {
    sim.produced += p.produced;
    sim.committed_tgbs += p.committed_tgbs;
    sim.attempts += p.attempts;
    sim.successes += p.successes;
    sim.conflicts += p.conflicts;
  }
  for (const auto& c : steady_counts) {
    sim.steady_attempts += c.attempts;
    sim.steady_conflicts += c.conflicts;
  }
  sim.steady_committed_tgbs = sim.committed_tgbs;
  sim.measured_seconds = run_seconds;
  sim.throughput_tgbs_s = run_seconds > 0 ? static_cast<double>(sim.committed_tgbs) / run_seconds : 0.0;
  sim.throughput_bytes_s = sim.throughput_tgbs_s * static_cast<double>(cfg.slice_bytes * cfg.mesh.slices());
  sim.conflict_rate = sim.steady_attempts
                          ? static_cast<double>(sim.steady_conflicts) / static_cast<double>(sim.steady_attempts)
                          : 0.0;
  sim.success_rate = sim.steady_attempts ? 1.0 - sim.conflict_rate : 0.0;

  result.crashes = crashes.load();
  result.lag_stalls = lag_stalls.load();
  result.expected_tgbs = sim.produced;
  result.audit = audit_history(*store, cfg.ns);
  for (std::uint32_t i = 0; i < cfg.n_producers; ++i)
    if (!errors[i].empty()) result.audit.violations.push_back("p" + std::to_string(i) + " failed: " + errors[i]);
  sim.final_version = result.audit.latest_version;
  sim.final_manifest_entries = result.audit.descriptors;
  return result;
}

}  // namespace tgbplane
