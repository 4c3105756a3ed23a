#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tgbplane/clock.hpp"
#include "tgbplane/dac.hpp"
#include "tgbplane/manifest.hpp"
#include "tgbplane/tgb_format.hpp"
#include "tgbplane/watermark.hpp"

namespace tgbplane {

// Points at which a test harness may kill a producer by throwing from the
// crash hook.
enum class CrashPoint {
  kAfterObjectWrite,          // TGB object stored, descriptor not yet committed
  kMidCommit,                 // manifest put issued, outcome not yet processed
  kAfterCommitBeforeCleanup,  // commit succeeded, local buffer not yet cleared
};

using CrashHook = std::function<void(CrashPoint)>;

struct ProducerOptions {
  dac::DacParams dac{};
  std::optional<std::size_t> max_lag;
  // Block inside write_tgb until lag drops, instead of throwing kLagExceeded.
  bool blocking = false;
  // On open, re-adopt staged TGB objects left by a previous incarnation.
  bool adopt_staged = true;
  std::shared_ptr<Clock> clock;
  // Jitter RNG seed; 0 derives one from the producer id.
  std::uint64_t seed = 0;
  CrashHook crash_hook;
  // Minimum spacing of watermark refreshes while lag-bound.
  double lag_poll_interval = 0.05;
};

struct CommitWindow {
  double started_at = 0.0;
  double ended_at = 0.0;
  bool committed = false;
};

enum class TickOutcome { kNone, kCommitted, kConflict, kAlreadyCommitted };

struct TickReport {
  bool attempted = false;
  TickOutcome outcome = TickOutcome::kNone;
  std::uint64_t version = 0;  // committed version, or the winner's on conflict
  double new_gap = 0.0;
  double observed_tau = 0.0;
};

struct ProducerStats {
  std::uint64_t attempts = 0;
  std::uint64_t commits = 0;
  std::uint64_t conflicts = 0;
  std::uint64_t ambiguous = 0;
  std::uint64_t tgbs_committed = 0;
  std::vector<CommitWindow> windows;
};

class ProducerClient {
 public:
  // Recovers committed_offset for producer_id from the latest manifest and
  // resumes right after it.
  static ProducerClient open(std::shared_ptr<ObjectStore> store, std::string ns, std::string producer_id,
                             ProducerOptions opts = {}) {
    validate_namespace(ns);
    if (!ObjectKey::is_valid_component(producer_id) || producer_id == kGcProducerId)
      fail(Errc::kInvalidArgument, "producer id '" + producer_id + "'");
    opts.dac.validate();
    if (opts.max_lag && *opts.max_lag == 0) fail(Errc::kConfigInvalid, "max_lag must be >= 1");
    if (!opts.clock) opts.clock = default_clock();

    ProducerClient c(std::move(store), std::move(ns), std::move(producer_id), std::move(opts));
    c.view_ = latest(*c.store_, c.ns_).value_or(genesis_manifest());
    auto committed = c.view_.committed_offset(c.id_);
    c.next_seq_ = committed ? *committed + 1 : 0;
    c.recovered_offset_ = committed;
    if (c.opts_.adopt_staged) c.adopt_staged();
    if (c.opts_.max_lag) c.refresh_view();
    c.dac_.n_producers = std::max<std::size_t>(1, c.view_.producer_states.size());
    c.dac_.t_last = c.clock().now();
    return c;
  }

  // Stores one TGB under its deterministic key and stages its descriptor.
  // If the key already holds an object (earlier incarnation, or a twin
  // process sharing this id) that object is authoritative.
  std::uint64_t write_tgb(const std::vector<Bytes>& slices, const MeshSpec& mesh) {
    wait_for_lag_room();
    auto blob = encode_tgb(slices, mesh);
    auto key = tgb_key(ns_, id_, next_seq_);
    TgbDescriptor d{0, {key}, mesh, blob.size(), id_, next_seq_};
    if (store_->put_if_absent(key, blob) == PutOutcome::kAlreadyExists) {
      auto existing = read_footer(*store_, key);
      d.mesh = existing.footer.mesh;
      d.total_bytes = existing.object_size;
    }
    pending_.push_back(std::move(d));
    std::uint64_t seq = next_seq_++;
    crash_point(CrashPoint::kAfterObjectWrite);
    return seq;
  }

  TickReport tick() { return tick(clock().now()); }

  // Attempts a commit when the gap since the last attempt has elapsed and
  // there is something to commit.
  TickReport tick(double now) {
    if (pending_.empty() || now - dac_.t_last < dac_.gap) return {};
    return attempt();
  }

  // Drains pending TGBs with the gap relaxed to the duty bound only. Throws
  // kDeadlineExceeded if anything is still pending after deadline_s; staged
  // objects stay in place for a later open().
  void finalize(double deadline_s) {
    const double end = clock().now() + deadline_s;
    while (!pending_.empty()) {
      double now = clock().now();
      if (now >= end)
        fail(Errc::kDeadlineExceeded, std::to_string(pending_.size()) + " TGBs still pending for " + id_);
      double gate = dac::t_cost(dac_.tau_hat.value_or(0.0), opts_.dac.delta);
      double wait = gate - (now - dac_.t_last);
      if (wait > 0.0) {
        // Attempt right after the sleep; re-checking can spin on rounding.
        if (wait >= end - now) {
          clock().sleep_for(end - now);
          continue;
        }
        clock().sleep_for(wait);
      }
      try {
        attempt();
      } catch (const Error& e) {
        if (e.code() != Errc::kTransientIo) throw;
        clock().sleep_for(std::min(opts_.lag_poll_interval, end - clock().now()));
      }
    }
  }

  // TGBs this producer holds ahead of the slowest checkpoint: pending plus
  // committed at or beyond the minimum watermark step. Without any
  // watermark only pending counts.
  std::size_t lag() const {
    std::size_t n = pending_.size();
    if (!wm_step_) return n;
    for (const auto& d : view_.tgb_list)
      if (d.producer_id == id_ && d.step_index >= *wm_step_) ++n;
    return n;
  }

  // Re-reads the latest manifest and watermarks.
  void refresh_view() {
    view_ = latest_from(*store_, ns_, view_);
    auto wms = read_all_watermarks(*store_, ns_);
    wm_step_ = min_watermark_step(wms);
    last_refresh_ = clock().now();
  }

  const std::string& producer_id() const noexcept { return id_; }
  const std::string& ns() const noexcept { return ns_; }
  std::uint64_t next_seq() const noexcept { return next_seq_; }
  std::optional<std::uint64_t> recovered_offset() const noexcept { return recovered_offset_; }
  std::size_t adopted() const noexcept { return adopted_; }
  const std::vector<TgbDescriptor>& pending() const noexcept { return pending_; }
  const dac::DacState& dac_state() const noexcept { return dac_; }
  const Manifest& view() const noexcept { return view_; }
  const ProducerStats& stats() const noexcept { return stats_; }
  const ProducerOptions& options() const noexcept { return opts_; }

 private:
  ProducerClient(std::shared_ptr<ObjectStore> store, std::string ns, std::string id, ProducerOptions opts)
      : store_(std::move(store)), ns_(std::move(ns)), id_(std::move(id)), opts_(std::move(opts)) {
    std::uint64_t seed = opts_.seed ? opts_.seed : std::hash<std::string>{}(id_) | 1;
    rng_.seed(seed);
  }

  Clock& clock() const { return *opts_.clock; }

  void crash_point(CrashPoint p) {
    if (opts_.crash_hook) opts_.crash_hook(p);
  }

  void adopt_staged() {
    while (true) {
      auto key = tgb_key(ns_, id_, next_seq_);
      if (!store_->exists(key)) break;
      FooterRead fr;
      try {
        fr = read_footer(*store_, key);
      } catch (const Error& e) {
        if (e.code() == Errc::kNotFound) break;
        throw;
      }
      pending_.push_back({0, {key}, fr.footer.mesh, fr.object_size, id_, next_seq_});
      ++next_seq_;
      ++adopted_;
    }
  }

  void wait_for_lag_room() {
    if (!opts_.max_lag) return;
    const std::size_t cap = *opts_.max_lag;
    // Refresh before judging: a stale view can hide a newly written watermark.
    if (clock().now() - last_refresh_ >= opts_.lag_poll_interval || !refreshed_once_) {
      refresh_view();
      refreshed_once_ = true;
    }
    if (lag() < cap) return;
    if (!opts_.blocking)
      fail(Errc::kLagExceeded, id_ + " holds " + std::to_string(lag()) + " TGBs ahead of the watermark");
    while (lag() >= cap) {
      try {
        tick();
      } catch (const Error& e) {
        if (e.code() != Errc::kTransientIo) throw;
      }
      clock().sleep_for(opts_.lag_poll_interval);
      try {
        refresh_view();
      } catch (const Error& e) {
        if (e.code() != Errc::kTransientIo) throw;
      }
    }
  }

  TickReport attempt() {
    TickReport r;
    r.attempted = true;
    const double t0 = clock().now();

    Manifest base = latest_from(*store_, ns_, view_);
    view_ = base;
    pending_ = uncommitted(base, pending_, id_);
    if (pending_.empty()) {
      // An earlier ambiguous attempt (or a twin process) already landed it.
      r.outcome = TickOutcome::kAlreadyCommitted;
      r.version = base.version;
      dac_.t_last = clock().now();
      r.new_gap = dac_.gap;
      return r;
    }

    Manifest candidate = build_candidate(base, pending_, id_);
    CommitOutcome out = try_commit(*store_, ns_, candidate);
    crash_point(CrashPoint::kMidCommit);
    const double t1 = clock().now();

    ++stats_.attempts;
    if (out.ambiguous) ++stats_.ambiguous;
    stats_.windows.push_back({t0, t1, out.committed()});

    if (out.committed()) {
      view_ = std::move(candidate);
      crash_point(CrashPoint::kAfterCommitBeforeCleanup);
      ++stats_.commits;
      stats_.tgbs_committed += pending_.size();
      pending_.clear();
      r.outcome = TickOutcome::kCommitted;
      r.version = view_.version;
    } else {
      ++stats_.conflicts;
      view_ = latest_from(*store_, ns_, base);
      pending_ = uncommitted(view_, pending_, id_);
      if (opts_.max_lag) wm_step_ = min_watermark_step(read_all_watermarks(*store_, ns_));
      r.outcome = TickOutcome::kConflict;
      r.version = view_.version;
    }

    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    dac::after_attempt(dac_, opts_.dac, t1 - t0, view_.producer_states.size(), uniform(rng_),
                       clock().now());
    r.observed_tau = t1 - t0;
    r.new_gap = dac_.gap;
    return r;
  }

  std::shared_ptr<ObjectStore> store_;
  std::string ns_;
  std::string id_;
  ProducerOptions opts_;

  Manifest view_;
  std::uint64_t next_seq_ = 0;
  std::optional<std::uint64_t> recovered_offset_;
  std::size_t adopted_ = 0;
  std::vector<TgbDescriptor> pending_;
  dac::DacState dac_;
  std::mt19937_64 rng_;
  std::optional<std::uint64_t> wm_step_;
  double last_refresh_ = 0.0;
  bool refreshed_once_ = false;
  ProducerStats stats_;
};

}  // namespace tgbplane
