#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgbplane/dac.hpp"

// Discrete-event model of N producers committing through one serialized
// version sequence. Each producer is a sequential actor that alternates
// between materializing TGBs and commit attempts; an attempt reads the
// current version at its start, holds a fragile window of length
// tau(manifest entries), and succeeds only if nobody committed in between.
namespace tgbplane::sim {

struct PolicySpec {
  enum class Kind { kNaive, kFixed, kIncr, kAimd, kDac, kFixedGap };

  Kind kind = Kind::kDac;
  std::uint32_t k = 1;     // Fixed: batch size; Incr: starting batch size
  double addend = 1.0;     // Aimd: interval increase on success (seconds)
  double factor = 0.5;     // Aimd: interval multiplier on conflict
  ::tgbplane::dac::DacParams params{};  // Dac
  double gap = 0.0;        // FixedGap: mean gap after each attempt (seconds)
  bool exponential_gap = true;  // FixedGap: exponential vs constant gap

  static PolicySpec naive() { return {Kind::kNaive, 1}; }
  static PolicySpec fixed(std::uint32_t k) { return {Kind::kFixed, k}; }
  static PolicySpec incr(std::uint32_t start = 10) { return {Kind::kIncr, start}; }
  static PolicySpec aimd(double addend, double factor = 0.5) {
    PolicySpec p{Kind::kAimd};
    p.addend = addend;
    p.factor = factor;
    return p;
  }
  static PolicySpec dac(::tgbplane::dac::DacParams params = {}) {
    PolicySpec p{Kind::kDac};
    p.params = params;
    return p;
  }
  static PolicySpec fixed_gap(double gap, bool exponential = true) {
    PolicySpec p{Kind::kFixedGap};
    p.gap = gap;
    p.exponential_gap = exponential;
    return p;
  }

  std::string name() const {
    switch (kind) {
      case Kind::kNaive: return "Naive";
      case Kind::kFixed: return "FIXED" + std::to_string(k);
      case Kind::kIncr: return "INCR";
      case Kind::kAimd: return "AIMD";
      case Kind::kDac: return "DAC";
      case Kind::kFixedGap: return "GAP";
    }
    return "?";
  }

  void validate() const {
    if ((kind == Kind::kFixed || kind == Kind::kIncr) && k < 1)
      fail(Errc::kConfigInvalid, "batch size must be >= 1");
    if (kind == Kind::kAimd && !(factor > 0.0 && factor < 1.0))
      fail(Errc::kConfigInvalid, "AIMD factor must lie in (0, 1)");
    if (kind == Kind::kAimd && !(addend >= 0.0)) fail(Errc::kConfigInvalid, "AIMD addend must be >= 0");
    if (kind == Kind::kDac) params.validate();
    if (kind == Kind::kFixedGap && !(gap >= 0.0)) fail(Errc::kConfigInvalid, "gap must be >= 0");
  }
};

struct Interarrival {
  bool exponential = true;
  double mean_s = 1.0;
};

struct SimConfig {
  std::uint32_t n_producers = 32;
  double duration_s = 3600.0;
  Interarrival interarrival{};
  double tau0_s = 0.05;        // fragile window with an empty manifest
  double tau_slope_s = 0.0;    // added per committed manifest entry
  double tau_noise = 0.1;      // window drawn uniformly in tau*(1 +- noise)
  std::uint64_t seed = 1;
  double warmup_s = 0.0;       // excluded from steady-state metrics
  std::uint64_t payload_bytes = 100 * 1024;
  double series_interval_s = 60.0;
  // Producers always have data; attempts are paced by the policy alone.
  bool saturated = false;
  // After the horizon, stop producing and commit everything still pending.
  bool drain = true;

  void validate() const {
    if (n_producers < 1) fail(Errc::kConfigInvalid, "n_producers must be >= 1");
    if (!(duration_s > 0.0)) fail(Errc::kConfigInvalid, "duration must be > 0");
    if (!(tau0_s > 0.0)) fail(Errc::kConfigInvalid, "tau0 must be > 0");
    if (!(tau_slope_s >= 0.0)) fail(Errc::kConfigInvalid, "tau slope must be >= 0");
    if (!(tau_noise >= 0.0 && tau_noise < 1.0)) fail(Errc::kConfigInvalid, "tau noise must lie in [0, 1)");
    if (!saturated && !(interarrival.mean_s > 0.0)) fail(Errc::kConfigInvalid, "interarrival must be > 0");
    if (!(warmup_s >= 0.0 && warmup_s < duration_s)) fail(Errc::kConfigInvalid, "warmup must lie in [0, duration)");
    if (!(series_interval_s > 0.0)) fail(Errc::kConfigInvalid, "series interval must be > 0");
  }
};

struct ProducerResult {
  std::string policy;
  std::uint64_t produced = 0;
  std::uint64_t committed_tgbs = 0;
  std::uint64_t attempts = 0;
  std::uint64_t successes = 0;
  std::uint64_t conflicts = 0;
  double final_gap = 0.0;
};

struct SeriesPoint {
  double t = 0.0;
  std::uint64_t committed_total = 0;
  double tau = 0.0;       // current model window
  double mean_gap = 0.0;  // mean DAC/AIMD gap across producers using one
};

struct SimResult {
  std::vector<ProducerResult> producers;
  std::uint64_t produced = 0;
  std::uint64_t committed_tgbs = 0;
  std::uint64_t attempts = 0;
  std::uint64_t successes = 0;
  std::uint64_t conflicts = 0;
  // Steady state: attempts starting and commits landing after warmup.
  std::uint64_t steady_attempts = 0;
  std::uint64_t steady_conflicts = 0;
  std::uint64_t steady_committed_tgbs = 0;
  double measured_seconds = 0.0;
  double throughput_tgbs_s = 0.0;
  double throughput_bytes_s = 0.0;
  double conflict_rate = 0.0;  // steady state
  double success_rate = 0.0;   // steady state
  // Attempts whose window saw another attempt start, whether or not that
  // one went on to win. Upper-bounds conflict_rate.
  std::uint64_t steady_contended = 0;
  double contention_rate = 0.0;
  std::uint64_t final_manifest_entries = 0;
  std::uint64_t final_version = 0;
  std::uint64_t drained_tgbs = 0;  // committed after the horizon
  double drain_end_s = 0.0;
  std::vector<SeriesPoint> series;

  // One record per producer, one aggregate, one per series point.
  std::string to_json_lines() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < producers.size(); ++i) {
      const auto& p = producers[i];
      nlohmann::json j = {{"record", "producer"},  {"producer", i},          {"policy", p.policy},
                          {"produced", p.produced}, {"committed_tgbs", p.committed_tgbs},
                          {"attempts", p.attempts}, {"successes", p.successes}, {"conflicts", p.conflicts},
                          {"final_gap", p.final_gap}};
      out << j.dump() << '\n';
    }
    nlohmann::json agg = {{"record", "aggregate"},
                          {"produced", produced},
                          {"committed_tgbs", committed_tgbs},
                          {"attempts", attempts},
                          {"successes", successes},
                          {"conflicts", conflicts},
                          {"steady_attempts", steady_attempts},
                          {"steady_conflicts", steady_conflicts},
                          {"throughput_tgbs_s", throughput_tgbs_s},
                          {"throughput_bytes_s", throughput_bytes_s},
                          {"conflict_rate", conflict_rate},
                          {"success_rate", success_rate},
                          {"contention_rate", contention_rate},
                          {"final_manifest_entries", final_manifest_entries},
                          {"final_version", final_version},
                          {"drained_tgbs", drained_tgbs},
                          {"drain_end_s", drain_end_s}};
    out << agg.dump() << '\n';
    for (const auto& s : series) {
      nlohmann::json j = {{"record", "series"},
                          {"t", s.t},
                          {"committed_total", s.committed_total},
                          {"tau", s.tau},
                          {"mean_gap", s.mean_gap}};
      out << j.dump() << '\n';
    }
    return out.str();
  }
};

namespace detail {

enum class EventKind { kProduceDone, kAttemptStart, kAttemptEnd, kSample };

struct Event {
  double t;
  std::uint64_t seq;
  EventKind kind;
  std::uint32_t producer;
  bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
};

struct Actor {
  PolicySpec policy;
  std::uint64_t pending = 0;
  std::uint64_t produced = 0;
  std::uint64_t committed = 0;
  std::uint64_t attempts = 0, successes = 0, conflicts = 0;
  // Current attempt.
  std::uint64_t base_version = 0;
  std::uint64_t batch = 0;
  double started = 0.0;
  bool counted = false;    // attempt started inside [warmup, horizon)
  bool in_flight = false;
  bool contended = false;  // another attempt started inside this window
  // Policy state.
  std::uint64_t incr_k = 1;
  double interval = 0.0;  // AIMD interval or DAC gap
  double t_last = 0.0;
  std::optional<double> tau_hat;
  bool registered = false;
};

class Engine {
 public:
  Engine(const SimConfig& cfg, const std::vector<PolicySpec>& policies) : cfg_(cfg), rng_(cfg.seed) {
    cfg.validate();
    if (policies.empty() || (policies.size() != 1 && policies.size() != cfg.n_producers))
      fail(Errc::kConfigInvalid, "give one policy or one per producer");
    actors_.resize(cfg.n_producers);
    for (std::uint32_t i = 0; i < cfg.n_producers; ++i) {
      auto& a = actors_[i];
      a.policy = policies.size() == 1 ? policies[0] : policies[i];
      a.policy.validate();
      a.incr_k = a.policy.k;
    }
  }

  SimResult run() {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::uint32_t i = 0; i < actors_.size(); ++i) {
      if (cfg_.saturated) {
        double phase = u01(rng_) * (mean_gap(actors_[i]) + cfg_.tau0_s);
        schedule(phase, EventKind::kAttemptStart, i);
      } else {
        schedule(interarrival(), EventKind::kProduceDone, i);
      }
    }
    schedule(cfg_.series_interval_s, EventKind::kSample, 0);

    while (!queue_.empty()) {
      Event ev = queue_.top();
      if (!draining_ && ev.t > cfg_.duration_s) {
        if (!cfg_.drain || cfg_.saturated) break;
        draining_ = true;
      }
      queue_.pop();
      now_ = ev.t;
      switch (ev.kind) {
        case EventKind::kProduceDone: on_produce(ev.producer); break;
        case EventKind::kAttemptStart: start_attempt(ev.producer); break;
        case EventKind::kAttemptEnd: on_attempt_end(ev.producer); break;
        case EventKind::kSample: on_sample(); break;
      }
    }
    return collect();
  }

 private:
  double tau_now() const { return cfg_.tau0_s + cfg_.tau_slope_s * static_cast<double>(entries_); }

  double interarrival() {
    if (!cfg_.interarrival.exponential) return cfg_.interarrival.mean_s;
    return std::exponential_distribution<double>(1.0 / cfg_.interarrival.mean_s)(rng_);
  }

  double mean_gap(const Actor& a) const { return a.policy.kind == PolicySpec::Kind::kFixedGap ? a.policy.gap : 0.0; }

  void schedule(double t, EventKind kind, std::uint32_t producer) {
    queue_.push({t, next_seq_++, kind, producer});
  }

  // Whether the actor starts a commit right after materializing a TGB.
  bool gate(const Actor& a) const {
    using K = PolicySpec::Kind;
    switch (a.policy.kind) {
      case K::kNaive: return a.pending >= 1;
      case K::kFixed: return a.pending >= a.policy.k;
      case K::kIncr: return a.pending >= a.incr_k;
      case K::kAimd:
      case K::kDac: return a.pending >= 1 && now_ - a.t_last >= a.interval;
      case K::kFixedGap: return a.pending >= 1 && now_ - a.t_last >= a.policy.gap;
    }
    return false;
  }

  std::uint64_t batch_size(const Actor& a) const {
    using K = PolicySpec::Kind;
    switch (a.policy.kind) {
      case K::kNaive: return 1;
      case K::kFixed: return a.policy.k;
      case K::kIncr: return a.incr_k;
      default: return a.pending;
    }
  }

  void on_produce(std::uint32_t i) {
    auto& a = actors_[i];
    if (draining_) {
      drain_step(i);
      return;
    }
    ++a.pending;
    ++a.produced;
    if (gate(a)) {
      start_attempt(i);
    } else {
      schedule(now_ + interarrival(), EventKind::kProduceDone, i);
    }
  }

  void start_attempt(std::uint32_t i) {
    auto& a = actors_[i];
    if (cfg_.saturated) a.pending = std::max<std::uint64_t>(a.pending, 1);
    a.base_version = version_;
    a.batch = cfg_.saturated ? 1 : draining_ ? a.pending : batch_size(a);
    a.started = now_;
    a.counted = !draining_ && now_ >= cfg_.warmup_s;
    a.in_flight = true;
    a.contended = false;
    for (auto& other : actors_)
      if (&other != &a && other.in_flight) other.contended = true;
    ++a.attempts;
    if (a.counted) ++steady_attempts_;
    double noise = cfg_.tau_noise > 0.0
                       ? std::uniform_real_distribution<double>(1.0 - cfg_.tau_noise, 1.0 + cfg_.tau_noise)(rng_)
                       : 1.0;
    schedule(now_ + tau_now() * noise, EventKind::kAttemptEnd, i);
  }

  void on_attempt_end(std::uint32_t i) {
    auto& a = actors_[i];
    const bool success = version_ == a.base_version;
    const double observed = now_ - a.started;
    a.in_flight = false;
    if (a.counted && a.contended) ++steady_contended_;
    if (success) {
      ++version_;
      ++a.successes;
      entries_ += a.batch;
      a.committed += a.batch;
      if (!cfg_.saturated) a.pending -= a.batch;
      if (now_ >= cfg_.warmup_s && now_ <= cfg_.duration_s) steady_committed_ += a.batch;
      if (now_ > cfg_.duration_s) drained_ += a.batch;
      if (!a.registered) {
        a.registered = true;
        ++registered_;
      }
    } else {
      ++a.conflicts;
      if (a.counted) ++steady_conflicts_;
    }

    using K = PolicySpec::Kind;
    switch (a.policy.kind) {
      case K::kIncr:
        if (!success) ++a.incr_k;
        break;
      case K::kAimd:
        a.interval = success ? a.interval + a.policy.addend : a.interval * a.policy.factor;
        break;
      case K::kDac: {
        dac::DacState st{a.tau_hat, a.interval, 1, a.t_last};
        double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
        dac::after_attempt(st, a.policy.params, observed, std::max<std::uint64_t>(1, registered_), u, now_);
        a.tau_hat = st.tau_hat;
        a.interval = st.gap;
        break;
      }
      default: break;
    }
    a.t_last = now_;

    if (cfg_.saturated) {
      double gap = a.policy.gap;
      if (a.policy.kind == K::kFixedGap && a.policy.exponential_gap && gap > 0.0)
        gap = std::exponential_distribution<double>(1.0 / gap)(rng_);
      else if (a.policy.kind == K::kDac)
        gap = a.interval;
      schedule(now_ + gap, EventKind::kAttemptStart, i);
    } else if (draining_) {
      drain_end_ = now_;
      drain_step(i);
    } else {
      schedule(now_ + interarrival(), EventKind::kProduceDone, i);
    }
  }

  // Final flush: DAC keeps only the duty gate, other policies retry at once.
  void drain_step(std::uint32_t i) {
    auto& a = actors_[i];
    if (a.pending == 0) return;
    double open_at = a.t_last;
    if (a.policy.kind == PolicySpec::Kind::kDac)
      open_at += dac::t_cost(a.tau_hat.value_or(0.0), a.policy.params.delta);
    if (now_ >= open_at)
      start_attempt(i);
    else
      schedule(open_at, EventKind::kProduceDone, i);
  }

  void on_sample() {
    if (draining_) return;
    SeriesPoint p{now_, total_committed(), tau_now(), 0.0};
    std::size_t paced = 0;
    for (const auto& a : actors_)
      if (a.policy.kind == PolicySpec::Kind::kDac || a.policy.kind == PolicySpec::Kind::kAimd) {
        p.mean_gap += a.interval;
        ++paced;
      }
    if (paced) p.mean_gap /= static_cast<double>(paced);
    series_.push_back(p);
    schedule(now_ + cfg_.series_interval_s, EventKind::kSample, 0);
  }

  std::uint64_t total_committed() const {
    std::uint64_t n = 0;
    for (const auto& a : actors_) n += a.committed;
    return n;
  }

  SimResult collect() const {
    SimResult r;
    for (const auto& a : actors_) {
      r.producers.push_back({a.policy.name(), a.produced, a.committed, a.attempts, a.successes, a.conflicts, a.interval});
      r.produced += a.produced;
      r.committed_tgbs += a.committed;
      r.attempts += a.attempts;
      r.successes += a.successes;
      r.conflicts += a.conflicts;
    }
    r.steady_attempts = steady_attempts_;
    r.steady_conflicts = steady_conflicts_;
    r.steady_committed_tgbs = steady_committed_;
    r.measured_seconds = cfg_.duration_s - cfg_.warmup_s;
    r.throughput_tgbs_s = static_cast<double>(steady_committed_) / r.measured_seconds;
    r.throughput_bytes_s = r.throughput_tgbs_s * static_cast<double>(cfg_.payload_bytes);
    // Attempts still in flight when the run stopped have no outcome yet.
    std::uint64_t resolved = steady_attempts_;
    for (const auto& a : actors_)
      if (a.attempts > a.successes + a.conflicts && a.counted) --resolved;
    r.conflict_rate = resolved ? static_cast<double>(steady_conflicts_) / static_cast<double>(resolved) : 0.0;
    r.success_rate = resolved ? 1.0 - r.conflict_rate : 0.0;
    r.steady_contended = steady_contended_;
    r.contention_rate = resolved ? static_cast<double>(steady_contended_) / static_cast<double>(resolved) : 0.0;
    r.final_manifest_entries = entries_;
    r.final_version = version_;
    r.drained_tgbs = drained_;
    r.drain_end_s = drain_end_;
    r.series = series_;
    return r;
  }

  SimConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<Actor> actors_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0.0;
  std::uint64_t version_ = 0;
  std::uint64_t entries_ = 0;
  std::uint64_t registered_ = 0;
  std::uint64_t steady_attempts_ = 0, steady_conflicts_ = 0, steady_committed_ = 0;
  std::uint64_t steady_contended_ = 0;
  std::uint64_t drained_ = 0;
  double drain_end_ = 0.0;
  bool draining_ = false;
  std::vector<SeriesPoint> series_;
};

}  // namespace detail

// Runs the model. `policies` holds one spec for everyone or one per producer.
inline SimResult simulate(const SimConfig& config, const std::vector<PolicySpec>& policies) {
  return detail::Engine(config, policies).run();
}

struct ModelRow {
  double gap = 0.0;
  double predicted = 0.0;
  // Fraction of attempts with at least one competing start in the window.
  double empirical = 0.0;
  // Fraction of attempts whose commit lost; only one contender per version
  // can win, so this stays below 1 - 1/N even at T = 0.
  double failed = 0.0;
  std::uint64_t attempts = 0;

  std::string to_json_line(std::uint32_t n) const {
    nlohmann::json j = {{"record", "model"},       {"n", n},
                        {"gap", gap},              {"predicted", predicted},
                        {"empirical", empirical},  {"failed", failed},
                        {"attempts", attempts}};
    return j.dump();
  }
};

// Gap multiples of tau0 swept by validate_model by default.
inline std::vector<double> default_gap_grid() { return {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 600.0}; }

// Saturated producers pacing attempts with an exponential gap of mean T;
// compares the measured fraction of windows entered by a competing attempt
// with the closed-form prediction at tau0. Each row runs long enough for
// about `min_attempts` attempts, the first 10% discarded.
inline std::vector<ModelRow> validate_model(SimConfig config, const std::vector<double>& gaps_in_tau,
                                            std::uint64_t min_attempts = 20000) {
  config.saturated = true;
  config.tau_slope_s = 0.0;
  const double base_duration = config.duration_s;
  std::vector<ModelRow> rows;
  for (double g : gaps_in_tau) {
    if (!(g >= 0.0)) fail(Errc::kConfigInvalid, "gap multiples must be >= 0");
    double gap = g * config.tau0_s;
    double per_attempt = (gap + config.tau0_s) / config.n_producers;
    config.duration_s = std::max(base_duration, 1.1 * static_cast<double>(min_attempts) * per_attempt);
    config.warmup_s = config.duration_s / 11.0;
    auto res = simulate(config, {PolicySpec::fixed_gap(gap)});
    ModelRow row;
    row.gap = gap;
    row.predicted = dac::conflict_probability(gap, config.tau0_s, config.n_producers);
    row.empirical = res.contention_rate;
    row.failed = res.conflict_rate;
    row.attempts = res.steady_attempts;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tgbplane::sim
