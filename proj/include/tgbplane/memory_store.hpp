#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

#include "tgbplane/clock.hpp"
#include "tgbplane/object_store.hpp"

namespace tgbplane {

// Uniform latency in seconds.
struct LatencyRange {
  double min_s = 0.0;
  double max_s = 0.0;
};

struct FaultProfile {
  LatencyRange put_latency;
  LatencyRange get_latency;
  // The write is applied, then the caller sees kTransientIo (ambiguous outcome).
  double crash_after_put_probability = 0.0;
  // The request fails with kTransientIo before touching state.
  double transient_error_probability = 0.0;

  void validate() const {
    auto bad_range = [](const LatencyRange& r) {
      return r.min_s < 0.0 || r.max_s < r.min_s;
    };
    auto bad_p = [](double p) { return !(p >= 0.0 && p <= 1.0); };
    if (bad_range(put_latency) || bad_range(get_latency))
      fail(Errc::kConfigInvalid, "latencies must satisfy 0 <= min <= max");
    if (bad_p(crash_after_put_probability) || bad_p(transient_error_probability))
      fail(Errc::kConfigInvalid, "probabilities must lie in [0,1]");
  }
};

class MemoryStore final : public ObjectStore {
 public:
  MemoryStore() = default;
  explicit MemoryStore(FaultProfile faults, std::uint64_t seed = 1) : faults_(faults), rng_(seed) {
    faults_.validate();
  }

  void set_faults(FaultProfile faults) {
    faults.validate();
    std::lock_guard lk(rng_mu_);
    faults_ = faults;
  }

  // Latency sleeps go through `clock`; null sleeps in wall time.
  void set_latency_clock(std::shared_ptr<Clock> clock) {
    std::lock_guard lk(rng_mu_);
    latency_clock_ = std::move(clock);
  }

  PutOutcome put_if_absent(const ObjectKey& key, ByteView data) override {
    auto plan = before_request(true);
    PutOutcome out;
    {
      std::lock_guard lk(mu_);
      auto [it, inserted] = objects_.try_emplace(key.str());
      if (inserted) it->second = std::make_shared<const Bytes>(data.begin(), data.end());
      out = inserted ? PutOutcome::kCreated : PutOutcome::kAlreadyExists;
    }
    if (plan.crash_after) fail(Errc::kTransientIo, "connection lost after put " + key.str());
    return out;
  }

  void put(const ObjectKey& key, ByteView data) override {
    auto plan = before_request(true);
    {
      std::lock_guard lk(mu_);
      objects_[key.str()] = std::make_shared<const Bytes>(data.begin(), data.end());
    }
    if (plan.crash_after) fail(Errc::kTransientIo, "connection lost after put " + key.str());
  }

  Bytes get(const ObjectKey& key) override {
    before_request(false);
    return *find(key);
  }

  Bytes get_range(const ObjectKey& key, std::uint64_t offset, std::uint64_t length) override {
    before_request(false);
    auto obj = find(key);
    if (offset > obj->size() || length > obj->size() - offset)
      fail(Errc::kRangeOutOfBounds, key.str() + " [" + std::to_string(offset) + ", +" +
                                        std::to_string(length) + ") of " +
                                        std::to_string(obj->size()));
    auto first = obj->begin() + static_cast<std::ptrdiff_t>(offset);
    return Bytes(first, first + static_cast<std::ptrdiff_t>(length));
  }

  std::uint64_t size(const ObjectKey& key) override { return find(key)->size(); }

  std::vector<ObjectKey> list(std::string_view prefix) override {
    before_request(false);
    std::vector<ObjectKey> out;
    std::lock_guard lk(mu_);
    for (auto it = objects_.lower_bound(std::string(prefix));
         it != objects_.end() && it->first.starts_with(prefix); ++it)
      out.emplace_back(it->first);
    return out;
  }

  void remove(const ObjectKey& key) override {
    before_request(false);
    std::lock_guard lk(mu_);
    objects_.erase(key.str());
  }

  std::size_t object_count() const {
    std::lock_guard lk(mu_);
    return objects_.size();
  }

 private:
  struct RequestPlan {
    bool crash_after = false;
  };

  RequestPlan before_request(bool is_write) {
    double delay = 0.0;
    RequestPlan plan;
    bool transient = false;
    std::shared_ptr<Clock> clock;
    {
      std::lock_guard lk(rng_mu_);
      const LatencyRange& r = is_write ? faults_.put_latency : faults_.get_latency;
      if (r.max_s > 0.0) delay = std::uniform_real_distribution<double>(r.min_s, r.max_s)(rng_);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      if (faults_.transient_error_probability > 0.0)
        transient = u(rng_) < faults_.transient_error_probability;
      if (is_write && faults_.crash_after_put_probability > 0.0)
        plan.crash_after = u(rng_) < faults_.crash_after_put_probability;
      clock = latency_clock_;
    }
    if (delay > 0.0) {
      if (clock)
        clock->sleep_for(delay);
      else
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    if (transient) fail(Errc::kTransientIo, "injected request failure");
    return plan;
  }

  std::shared_ptr<const Bytes> find(const ObjectKey& key) const {
    std::lock_guard lk(mu_);
    auto it = objects_.find(key.str());
    if (it == objects_.end()) fail(Errc::kNotFound, key.str());
    return it->second;
  }

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Bytes>, std::less<>> objects_;

  std::mutex rng_mu_;
  FaultProfile faults_{};
  std::mt19937_64 rng_{1};
  std::shared_ptr<Clock> latency_clock_;
};

}  // namespace tgbplane
