#pragma once

#include <chrono>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tgbplane/clock.hpp"
#include "tgbplane/manifest.hpp"
#include "tgbplane/tgb_format.hpp"
#include "tgbplane/watermark.hpp"

namespace tgbplane {

// Position of one rank in a 4-D device mesh. Ranks unfold canonically with DP
// outermost, then CP, TP, and PP innermost:
//
//   rank = d*(C*tp*pp) + c*(tp*pp) + t*pp + p
//
// The trainer's process-group layout must follow the same convention.
struct RankSpec {
  std::uint32_t rank = 0;
  std::uint32_t world_size = 1;
  std::uint32_t dp = 1;
  std::uint32_t cp = 1;
  std::uint32_t tp = 1;
  std::uint32_t pp = 1;

  MeshSpec mesh() const noexcept { return {dp, cp}; }

  void validate() const {
    if (dp < 1 || cp < 1 || tp < 1 || pp < 1)
      fail(Errc::kInvalidTopology, "every mesh degree must be >= 1");
    std::uint64_t product = std::uint64_t{dp} * cp * tp * pp;
    if (product != world_size)
      fail(Errc::kInvalidTopology, "world_size " + std::to_string(world_size) + " != dp*cp*tp*pp = " +
                                       std::to_string(product));
    if (rank >= world_size)
      fail(Errc::kInvalidTopology, "rank " + std::to_string(rank) + " >= world_size " +
                                       std::to_string(world_size));
  }
};

struct SliceCoord {
  std::uint32_t d = 0;
  std::uint32_t c = 0;
  friend bool operator==(const SliceCoord&, const SliceCoord&) = default;
  friend auto operator<=>(const SliceCoord&, const SliceCoord&) = default;
};

inline SliceCoord project(const RankSpec& spec) {
  spec.validate();
  std::uint32_t inner = spec.tp * spec.pp;
  return {spec.rank / (spec.cp * inner), (spec.rank / inner) % spec.cp};
}

// ⟨V, S⟩: S is the next step to consume, V the manifest version it was
// resolved against.
struct Cursor {
  std::uint64_t version = 0;
  std::uint64_t step = 0;
  friend bool operator==(const Cursor&, const Cursor&) = default;
};

struct ConsumerOptions {
  double poll_interval = 0.2;
  std::size_t prefetch_depth = 0;
  std::shared_ptr<Clock> clock;
};

struct ConsumerStats {
  std::uint64_t steps = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t footer_bytes = 0;
  std::uint64_t manifest_bytes = 0;
  std::uint64_t footer_reads = 0;
  std::uint64_t polls = 0;
  std::vector<double> read_latencies;  // seconds per next_batch that returned data

  double read_amplification() const {
    return payload_bytes == 0 ? 0.0
                              : static_cast<double>(payload_bytes + footer_bytes + manifest_bytes) /
                                    static_cast<double>(payload_bytes);
  }
};

enum class BatchStatus { kOk, kNotYetAvailable };

struct Batch {
  BatchStatus status = BatchStatus::kNotYetAvailable;
  Bytes data;
  std::uint64_t step = 0;  // step (or logical step) that was read
  Cursor cursor;           // position after this call

  bool ok() const noexcept { return status == BatchStatus::kOk; }
};

namespace detail {

// Footer-cached slice reads. Shared with in-flight prefetch tasks.
class SliceReader {
 public:
  explicit SliceReader(std::shared_ptr<ObjectStore> store) : store_(std::move(store)) {}

  Bytes read(const TgbDescriptor& desc, SliceCoord coord) {
    if (desc.object_keys.size() != 1)
      fail(Errc::kInvalidArgument, "multi-object TGBs are not readable by this client");
    const ObjectKey& key = desc.object_keys.front();
    FooterIndex footer = footer_for(key);
    auto [off, len] = slice_range(footer, coord.d, coord.c);
    Bytes out = store_->get_range(key, off, len);
    std::lock_guard lk(mu_);
    payload_bytes_ += out.size();
    return out;
  }

  void add_stats(ConsumerStats& s) {
    std::lock_guard lk(mu_);
    s.payload_bytes = payload_bytes_;
    s.footer_bytes = footer_bytes_;
    s.footer_reads = footer_reads_;
  }

  ObjectStore& store() { return *store_; }
  const std::shared_ptr<ObjectStore>& store_ptr() const { return store_; }

 private:
  FooterIndex footer_for(const ObjectKey& key) {
    {
      std::lock_guard lk(mu_);
      if (auto it = cache_.find(key.str()); it != cache_.end()) return it->second;
    }
    auto fr = read_footer(*store_, key);
    std::lock_guard lk(mu_);
    footer_bytes_ += fr.bytes_fetched;
    ++footer_reads_;
    return cache_.try_emplace(key.str(), std::move(fr.footer)).first->second;
  }

  std::shared_ptr<ObjectStore> store_;
  std::mutex mu_;
  std::map<std::string, FooterIndex> cache_;  // entries never change once inserted
  std::uint64_t payload_bytes_ = 0;
  std::uint64_t footer_bytes_ = 0;
  std::uint64_t footer_reads_ = 0;
};

// Tracks the consumer's current manifest and polls for newer versions:
// probes V+1, V+2, ... and falls back to a listing if V was reclaimed.
class ManifestFollower {
 public:
  ManifestFollower(std::shared_ptr<ObjectStore> store, std::string ns, std::shared_ptr<Clock> clock,
                   double poll_interval)
      : store_(std::move(store)), ns_(std::move(ns)), clock_(std::move(clock)), poll_interval_(poll_interval) {}

  const Manifest& current() const { return current_; }

  void load(std::uint64_t version) {
    if (version == 0) {
      current_ = genesis_manifest();
      return;
    }
    if (!fetch(version)) {
      auto m = latest(*store_, ns_);
      current_ = m ? std::move(*m) : genesis_manifest();
    }
  }

  // True if a newer version was adopted.
  bool poll() {
    double now = clock_->now();
    if (polled_once_ && now - last_empty_poll_ < poll_interval_) return false;
    polled_once_ = true;
    ++polls_;
    std::uint64_t v = current_.version;
    bool anchored = v > 0 && store_->exists(manifest_key(ns_, v));
    if (anchored) {
      while (store_->exists(manifest_key(ns_, v + 1))) ++v;
    } else {
      auto versions = list_manifest_versions(*store_, ns_);
      if (!versions.empty()) v = std::max(v, versions.back());
      while (v > 0 && store_->exists(manifest_key(ns_, v + 1))) ++v;
    }
    if (v > current_.version && fetch(v)) return true;
    last_empty_poll_ = now;
    return false;
  }

  std::uint64_t manifest_bytes() const { return manifest_bytes_; }
  std::uint64_t polls() const { return polls_; }

 private:
  bool fetch(std::uint64_t version) {
    Bytes raw;
    try {
      raw = store_->get(manifest_key(ns_, version));
    } catch (const Error& e) {
      if (e.code() == Errc::kNotFound) return false;
      throw;
    }
    manifest_bytes_ += raw.size();
    current_ = decode_manifest(raw, version);
    return true;
  }

  std::shared_ptr<ObjectStore> store_;
  std::string ns_;
  std::shared_ptr<Clock> clock_;
  double poll_interval_;
  Manifest current_;
  bool polled_once_ = false;
  double last_empty_poll_ = 0.0;
  std::uint64_t manifest_bytes_ = 0;
  std::uint64_t polls_ = 0;
};

}  // namespace detail

class ConsumerClient {
 public:
  static ConsumerClient create(std::shared_ptr<ObjectStore> store, std::string ns, std::string consumer_id,
                               RankSpec spec, Cursor start = {}, ConsumerOptions opts = {}) {
    validate_namespace(ns);
    watermark_key(ns, consumer_id);  // validates the id
    spec.validate();
    if (!opts.clock) opts.clock = default_clock();
    ConsumerClient c(std::move(store), std::move(ns), std::move(consumer_id), spec, opts);
    c.follower_.load(start.version);
    c.cursor_ = {c.follower_.current().version, start.step};
    if (start.step < c.follower_.current().trim_floor)
      fail(Errc::kStepReclaimed, "step " + std::to_string(start.step) + " is below trim floor " +
                                     std::to_string(c.follower_.current().trim_floor));
    return c;
  }

  // Resumes from the persisted watermark of consumer_id.
  static ConsumerClient restore(std::shared_ptr<ObjectStore> store, std::string ns, std::string consumer_id,
                                RankSpec spec, ConsumerOptions opts = {}) {
    auto wm = read_watermark(*store, ns, consumer_id);
    if (!wm) fail(Errc::kWatermarkMissing, ns + "/" + consumer_id);
    auto c = create(std::move(store), std::move(ns), std::move(consumer_id), spec,
                    {wm->version, wm->step}, std::move(opts));
    c.persisted_ = wm;
    return c;
  }

  // Reads this rank's slice of step S and advances to S+1, or reports that
  // no committed manifest exposes S yet.
  Batch next_batch() {
    const double t0 = clock().now();
    const std::uint64_t step = cursor_.step;
    if (!ensure_step(step)) return {BatchStatus::kNotYetAvailable, {}, step, cursor_};
    const auto& desc = follower_.current().at_step(step);
    if (desc.mesh != spec_.mesh())
      fail(Errc::kInvalidTopology, "TGB at step " + std::to_string(step) + " is laid out for " +
                                       std::to_string(desc.mesh.dp) + "x" + std::to_string(desc.mesh.cp) +
                                       "; remap to read it with this mesh");
    Bytes data = take_prefetched(step, desc);
    schedule_prefetch(step + 1);
    cursor_ = {follower_.current().version, step + 1};
    ++steps_;
    latencies_.push_back(clock().now() - t0);
    return {BatchStatus::kOk, std::move(data), step, cursor_};
  }

  // Persists the cursor as this consumer's watermark. Idempotent when the
  // cursor has not moved; refuses to move the watermark backwards.
  Watermark checkpoint() {
    Watermark w{id_, cursor_.version, cursor_.step};
    if (!persisted_) persisted_ = read_watermark(reader_->store(), ns_, id_);
    if (persisted_ && *persisted_ == w) return w;
    if (persisted_ && (persisted_->step > w.step || persisted_->version > w.version))
      fail(Errc::kInvalidArgument, "watermark for " + id_ + " would move backwards");
    reader_->store().put(watermark_key(ns_, id_), encode_watermark(w));
    persisted_ = w;
    return w;
  }

  const Cursor& cursor() const noexcept { return cursor_; }
  const RankSpec& rank_spec() const noexcept { return spec_; }
  SliceCoord coord() const noexcept { return coord_; }
  const std::string& consumer_id() const noexcept { return id_; }
  const Manifest& manifest() const noexcept { return follower_.current(); }

  ConsumerStats stats() const {
    ConsumerStats s;
    reader_->add_stats(s);
    s.steps = steps_;
    s.manifest_bytes = follower_.manifest_bytes();
    s.polls = follower_.polls();
    s.read_latencies = latencies_;
    return s;
  }

 private:
  ConsumerClient(std::shared_ptr<ObjectStore> store, std::string ns, std::string id, RankSpec spec,
                 ConsumerOptions opts)
      : ns_(std::move(ns)),
        id_(std::move(id)),
        spec_(spec),
        coord_(project(spec)),
        opts_(opts),
        reader_(std::make_shared<detail::SliceReader>(store)),
        follower_(store, ns_, opts.clock, opts.poll_interval) {}

  Clock& clock() const { return *opts_.clock; }

  bool ensure_step(std::uint64_t step) {
    const Manifest* m = &follower_.current();
    if (step < m->trim_floor) fail(Errc::kStepReclaimed, "step " + std::to_string(step));
    if (m->has_step(step)) return true;
    if (!follower_.poll()) return false;
    m = &follower_.current();
    if (step < m->trim_floor)
      fail(Errc::kStepReclaimed, "step " + std::to_string(step) + " fell below trim floor " +
                                     std::to_string(m->trim_floor));
    return m->has_step(step);
  }

  Bytes take_prefetched(std::uint64_t step, const TgbDescriptor& desc) {
    if (auto it = inflight_.find(step); it != inflight_.end()) {
      auto fut = std::move(it->second);
      inflight_.erase(it);
      try {
        return fut.get();
      } catch (const Error&) {
        // Fall through to a direct read; prefetch failures are never surfaced.
      }
    }
    return reader_->read(desc, coord_);
  }

  void schedule_prefetch(std::uint64_t from) {
    if (opts_.prefetch_depth == 0) return;
    // Drop anything behind the cursor.
    for (auto it = inflight_.begin(); it != inflight_.end() && it->first < from;) it = inflight_.erase(it);
    const Manifest& m = follower_.current();
    for (std::uint64_t s = from; s < from + opts_.prefetch_depth && m.has_step(s); ++s) {
      if (inflight_.contains(s)) continue;
      const auto& desc = m.at_step(s);
      if (desc.mesh != spec_.mesh()) break;
      inflight_.emplace(s, std::async(std::launch::async,
                                      [reader = reader_, desc, coord = coord_] { return reader->read(desc, coord); }));
    }
  }

  std::string ns_;
  std::string id_;
  RankSpec spec_;
  SliceCoord coord_;
  ConsumerOptions opts_;
  std::shared_ptr<detail::SliceReader> reader_;
  detail::ManifestFollower follower_;
  Cursor cursor_;
  std::optional<Watermark> persisted_;
  std::map<std::uint64_t, std::future<Bytes>> inflight_;
  std::uint64_t steps_ = 0;
  std::vector<double> latencies_;
};

}  // namespace tgbplane
