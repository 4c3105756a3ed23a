#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

namespace tgbplane {

// Monotonic time source in seconds. All pacing decisions go through one of
// these; wall-clock time never gates the protocol.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual void sleep_for(double seconds) = 0;
};

class SteadyClock final : public Clock {
 public:
  double now() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
  }
  void sleep_for(double seconds) override {
    if (seconds > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }

 private:
  std::chrono::steady_clock::time_point origin_ = std::chrono::steady_clock::now();
};

// Test clock: time moves only through advance() or sleep_for().
class ManualClock final : public Clock {
 public:
  explicit ManualClock(double start = 0.0) : t_(start) {}
  double now() const override { return t_.load(); }
  void sleep_for(double seconds) override {
    if (seconds > 0.0) advance(seconds);
  }
  void advance(double seconds) {
    double cur = t_.load();
    while (!t_.compare_exchange_weak(cur, cur + seconds)) {
    }
  }
  void set(double t) { t_.store(t); }

 private:
  std::atomic<double> t_;
};

// Shared simulated time for a fixed set of cooperating threads. Time stands
// still while any participant runs and jumps to the earliest wake-up once all
// of them sleep, so compute costs nothing and only sleeps take time.
// Participants must not sleep while holding a lock another participant needs.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(double start = 0.0) : t_(start) {}

  double now() const override {
    std::lock_guard lock(mu_);
    return t_;
  }

  void sleep_for(double seconds) override {
    std::unique_lock lock(mu_);
    const double wake = t_ + (seconds > 0.0 ? seconds : 0.0);
    const std::uint64_t ticket = next_ticket_++;
    wakes_.emplace(wake, ticket);
    maybe_advance();
    cv_.wait(lock, [&] { return !wakes_.contains({wake, ticket}); });
  }

  // Registers one participant. Every join() needs a matching leave().
  void join() {
    std::lock_guard lock(mu_);
    ++participants_;
  }

  void leave() {
    std::lock_guard lock(mu_);
    --participants_;
    maybe_advance();
  }

  // Leaves on destruction; join() must already have been called.
  class Participant {
   public:
    explicit Participant(VirtualClock& c) : c_(c) {}
    ~Participant() { c_.leave(); }
    Participant(const Participant&) = delete;
    Participant& operator=(const Participant&) = delete;

   private:
    VirtualClock& c_;
  };

 private:
  // Caller holds mu_. Advances only when every participant is asleep, then
  // releases everyone due at the new time.
  void maybe_advance() {
    if (wakes_.empty() || wakes_.size() < participants_) return;
    if (wakes_.begin()->first > t_) t_ = wakes_.begin()->first;
    while (!wakes_.empty() && wakes_.begin()->first <= t_) wakes_.erase(wakes_.begin());
    cv_.notify_all();
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  double t_;
  std::set<std::pair<double, std::uint64_t>> wakes_;
  std::uint64_t next_ticket_ = 0;
  std::size_t participants_ = 0;
};

inline std::shared_ptr<Clock> default_clock() { return std::make_shared<SteadyClock>(); }

}  // namespace tgbplane
