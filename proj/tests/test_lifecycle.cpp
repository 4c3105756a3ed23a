#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "fixtures.hpp"
#include "tgbplane/audit.hpp"
#include "tgbplane/consumer.hpp"
#include "tgbplane/lifecycle.hpp"

using namespace tgbplane;
using tgbtest::produce_tagged;
using tgbtest::slice_identity;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kInvalidArgument;
}

const RankSpec kSingle{0, 1, 1, 1, 1, 1};

ConsumerOptions manual_opts() {
  ConsumerOptions o;
  o.clock = std::make_shared<ManualClock>();
  o.poll_interval = 0.0;
  return o;
}

void consume(ConsumerClient& c, std::uint64_t n) {
  for (std::uint64_t i = 0; i < n; ++i) {
    auto b = c.next_batch();
    if (!b.ok()) throw std::runtime_error("step " + std::to_string(b.step) + " unavailable");
    if (slice_identity(b.data).first != b.step) throw std::runtime_error("wrong TGB at step " + std::to_string(b.step));
  }
}

// Encoded size of a TGB from its slice lengths, written out from the layout.
std::uint64_t tgb_size(std::uint64_t slices, std::uint64_t slice_bytes) {
  return slices * slice_bytes + 4 + 4 + slices * 16 + 8 + 4;
}

}  // namespace

TEST(GlobalWatermark, IsTheMinimumVersion) {
  std::vector<Watermark> w = {{"a", 5, 1}, {"b", 7, 2}, {"c", 3, 9}};
  EXPECT_EQ(global_watermark(w), 3u);
  EXPECT_EQ(min_watermark_step(w), 1u);
  std::vector<Watermark> one = {{"a", 4, 0}};
  EXPECT_EQ(global_watermark(one), 4u);
  EXPECT_EQ(global_watermark(std::vector<Watermark>{}), std::nullopt);
}

TEST(Reclaim, WithoutCheckpointsDeletesNothing) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {1, 1}, 0, 5, 16);
  auto before = store->object_count();
  auto r = reclaim(*store, "ns");
  EXPECT_FALSE(r.w_global);
  EXPECT_EQ(r.manifests_deleted + r.tgb_objects_deleted + r.bytes_freed, 0u);
  EXPECT_FALSE(r.trim_version);
  EXPECT_EQ(store->object_count(), before);
}

TEST(Reclaim, TrimsToTheSlowestCheckpoint) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {1, 1}, 0, 12, 64, 4);  // v1..v3
  auto slow = ConsumerClient::create(store, "ns", "slow", kSingle, {}, manual_opts());
  consume(slow, 10);
  auto w_slow = slow.checkpoint();
  EXPECT_EQ(w_slow.version, 3u);
  produce_tagged(store, "ns", {1, 1}, 12, 28, 64, 4);  // v4..v10
  auto fast = ConsumerClient::create(store, "ns", "fast", kSingle, {}, manual_opts());
  consume(fast, 30);
  fast.checkpoint();

  const std::uint64_t old_manifest_bytes = store->size(manifest_key("ns", 1)) + store->size(manifest_key("ns", 2));
  auto r = reclaim(*store, "ns");
  EXPECT_EQ(r.w_global, 3u);
  EXPECT_EQ(r.trimmed_to_step, 10u);
  EXPECT_EQ(r.trim_version, 11u);
  EXPECT_EQ(r.manifests_deleted, 2u);
  EXPECT_EQ(r.tgb_objects_deleted, 10u);
  EXPECT_EQ(r.bytes_freed, 10 * tgb_size(1, 64) + old_manifest_bytes);
  for (std::uint64_t s = 0; s < 40; ++s) EXPECT_EQ(store->exists(tgb_key("ns", "p0", s)), s >= 10) << s;
  EXPECT_EQ(list_manifest_versions(*store, "ns"), (std::vector<std::uint64_t>{3, 4, 5, 6, 7, 8, 9, 10, 11}));

  auto latest_m = latest(*store, "ns");
  EXPECT_EQ(latest_m->trim_floor, 10u);
  EXPECT_FALSE(latest_m->producer_states.contains(std::string(kGcProducerId)));

  // Both checkpoints still restore and replay.
  auto again = ConsumerClient::restore(store, "ns", "slow", kSingle, manual_opts());
  consume(again, 30);
  auto fast_again = ConsumerClient::restore(store, "ns", "fast", kSingle, manual_opts());
  consume(fast_again, 10);
  EXPECT_EQ(code_of([&] { ConsumerClient::create(store, "ns", "late", kSingle, {11, 5}, manual_opts()); }),
            Errc::kStepReclaimed);
  EXPECT_TRUE(audit_history(*store, "ns").ok());
}

TEST(Reclaim, IsIdempotent) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {1, 1}, 0, 20, 64, 5);
  auto c = ConsumerClient::create(store, "ns", "c", kSingle, {}, manual_opts());
  consume(c, 15);
  c.checkpoint();
  auto first = reclaim(*store, "ns");
  EXPECT_GT(first.tgb_objects_deleted, 0u);
  auto count = store->object_count();
  auto second = reclaim(*store, "ns");
  EXPECT_FALSE(second.trim_version);
  EXPECT_EQ(second.manifests_deleted + second.tgb_objects_deleted + second.bytes_freed, 0u);
  EXPECT_EQ(store->object_count(), count);
}

TEST(Reclaim, DryRunReportsWithoutDeleting) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 1}, 0, 20, 64, 5);
  auto c = ConsumerClient::create(store, "ns", "c", RankSpec{0, 2, 2, 1, 1, 1}, {}, manual_opts());
  for (int i = 0; i < 12; ++i) ASSERT_TRUE(c.next_batch().ok());
  c.checkpoint();
  auto before = store->object_count();
  auto dry = reclaim(*store, "ns", {.dry_run = true});
  EXPECT_EQ(store->object_count(), before);
  EXPECT_TRUE(dry.dry_run);
  auto real = reclaim(*store, "ns");
  EXPECT_EQ(dry.trimmed_to_step, real.trimmed_to_step);
  EXPECT_EQ(dry.manifests_deleted, real.manifests_deleted);
  EXPECT_EQ(dry.tgb_objects_deleted, real.tgb_objects_deleted);
}

TEST(Reclaim, KeepsStagedUncommittedObjects) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {1, 1}, 0, 4, 32);
  ProducerOptions o;
  o.clock = std::make_shared<ManualClock>();
  auto staged = ProducerClient::open(store, "ns", "p0", o);
  staged.write_tgb(tgbtest::tagged_tgb(4, 1, 32), {1, 1});  // never committed
  auto c = ConsumerClient::create(store, "ns", "c", kSingle, {}, manual_opts());
  consume(c, 4);
  c.checkpoint();
  auto r = reclaim(*store, "ns");
  EXPECT_EQ(r.tgb_objects_deleted, 4u);
  EXPECT_TRUE(store->exists(tgb_key("ns", "p0", 4)));
}

TEST(Census, EmptyNamespaceIsZero) {
  MemoryStore store;
  auto c = storage_census(store, "ns");
  EXPECT_EQ(c.total_bytes(), 0u);
  EXPECT_EQ(c.manifest_objects + c.tgb_objects + c.watermark_objects, 0u);
}

TEST(Census, CountsExactTgbBytes) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 3}, 0, 7, 100, 3);
  auto c = storage_census(*store, "ns");
  EXPECT_EQ(c.tgb_objects, 7u);
  EXPECT_EQ(c.tgb_bytes, 7 * tgb_size(6, 100));
  EXPECT_EQ(c.manifest_objects, 3u);
  std::uint64_t manifest_bytes = 0;
  for (auto v : list_manifest_versions(*store, "ns")) manifest_bytes += store->size(manifest_key("ns", v));
  EXPECT_EQ(c.manifest_bytes, manifest_bytes);
  EXPECT_EQ(c.other_bytes, 0u);
}

TEST(Census, BoundedWithGcMonotoneWithout) {
  const std::uint64_t rounds = 30, per_round = 5, checkpoint_every = 10;
  auto run = [&](bool gc) {
    auto store = std::make_shared<MemoryStore>();
    auto c = ConsumerClient::create(store, "ns", "c", kSingle, {}, manual_opts());
    std::vector<std::uint64_t> tgb_objects;
    for (std::uint64_t r = 0; r < rounds; ++r) {
      produce_tagged(store, "ns", {1, 1}, r * per_round, per_round, 256, per_round);
      for (std::uint64_t i = 0; i < per_round; ++i) {
        consume(c, 1);
        if (c.cursor().step % checkpoint_every == 0) c.checkpoint();
      }
      if (gc) reclaim(*store, "ns");
      tgb_objects.push_back(storage_census(*store, "ns").tgb_objects);
    }
    return tgb_objects;
  };
  auto with_gc = run(true);
  auto without = run(false);
  for (std::size_t i = 0; i < with_gc.size(); ++i) {
    EXPECT_LE(with_gc[i], checkpoint_every + per_round) << "round " << i;
    EXPECT_EQ(without[i], (i + 1) * per_round);
  }
}

TEST(Reclaim, RacesALiveProducerWithoutLosingData) {
  auto store = std::make_shared<MemoryStore>();
  const std::uint64_t total = 200;
  std::atomic<bool> done{false};
  std::thread producer([&] {
    for (std::uint64_t i = 0; i < total; i += 5) produce_tagged(store, "ns", {1, 1}, i, 5, 32, 5);
    done = true;
  });
  auto c = ConsumerClient::create(store, "ns", "c", kSingle, {}, manual_opts());
  std::uint64_t trims = 0;
  while (c.cursor().step < total) {
    auto b = c.next_batch();
    if (b.ok()) {
      ASSERT_EQ(slice_identity(b.data).first, b.step);
      if (b.step % 7 == 0) {
        c.checkpoint();
        if (reclaim(*store, "ns").trim_version) ++trims;
      }
    } else {
      std::this_thread::yield();
    }
  }
  producer.join();
  EXPECT_GT(trims, 0u);
  auto audit = audit_history(*store, "ns");
  EXPECT_TRUE(audit.ok()) << audit.to_json_line();
  auto m = latest(*store, "ns");
  EXPECT_EQ(m->trim_floor + m->tgb_list.size(), total);
  EXPECT_EQ(m->committed_offset("p0"), total - 1);
}
