#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fixtures.hpp"
#include "tgbplane/remap.hpp"

using namespace tgbplane;
using tgbtest::produce_tagged;
using tgbtest::slice_identity;

namespace {

using Identity = std::pair<std::uint64_t, std::uint32_t>;

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kInvalidArgument;
}

RankSpec spec_of(std::uint32_t rank, std::uint32_t dp, std::uint32_t cp, std::uint32_t tp = 1, std::uint32_t pp = 1) {
  return {rank, dp * cp * tp * pp, dp, cp, tp, pp};
}

ConsumerOptions manual_opts() {
  ConsumerOptions o;
  o.clock = std::make_shared<ManualClock>();
  o.poll_interval = 0.0;
  return o;
}

// Every slice of TGBs [first, first+count) under the old mesh, in global
// sample order (TGB, then row-major slice).
std::vector<Identity> old_samples(std::uint64_t first, std::uint64_t count, MeshSpec old_mesh) {
  std::vector<Identity> out;
  for (std::uint64_t t = first; t < first + count; ++t)
    for (std::uint32_t s = 0; s < old_mesh.slices(); ++s) out.emplace_back(t, s);
  return out;
}

// Logical-step streams of every rank in new_spec's mesh, keyed by rank.
std::map<std::uint32_t, std::vector<Identity>> read_all_ranks(std::shared_ptr<ObjectStore> store, RankSpec old_spec,
                                                              RankSpec new_shape, Cursor cursor, std::uint64_t steps) {
  std::map<std::uint32_t, std::vector<Identity>> out;
  for (std::uint32_t r = 0; r < new_shape.world_size; ++r) {
    RankSpec spec = new_shape;
    spec.rank = r;
    auto plan = remap(old_spec, spec, cursor);
    RemapReader reader(store, "ns", spec, plan, manual_opts());
    for (std::uint64_t k = 0; k < steps; ++k) {
      auto b = reader.next_batch();
      if (!b.ok()) throw std::runtime_error("logical step " + std::to_string(k) + " unavailable");
      out[r].push_back(slice_identity(b.data));
    }
  }
  return out;
}

// Checks the brute-force property: within each group of TGBs, the distinct
// (d, c) coordinates of the new mesh read every old slice exactly once.
void expect_group_equality(const std::map<std::uint32_t, std::vector<Identity>>& streams, RankSpec new_shape,
                           MeshSpec old_mesh, std::uint64_t first_tgb, std::uint64_t tgbs_per_group,
                           std::uint64_t steps_per_group, std::uint64_t groups) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> coord_rep;
  for (auto& [r, _] : streams) {
    RankSpec s = new_shape;
    s.rank = r;
    auto c = project(s);
    coord_rep.try_emplace({c.d, c.c}, r);
  }
  ASSERT_EQ(coord_rep.size(), std::size_t{new_shape.dp} * new_shape.cp);
  for (std::uint64_t g = 0; g < groups; ++g) {
    std::multiset<Identity> got;
    for (auto& [_, r] : coord_rep)
      for (std::uint64_t k = g * steps_per_group; k < (g + 1) * steps_per_group; ++k) got.insert(streams.at(r)[k]);
    auto want_v = old_samples(first_tgb + g * tgbs_per_group, tgbs_per_group, old_mesh);
    std::multiset<Identity> want(want_v.begin(), want_v.end());
    EXPECT_EQ(got, want) << "group " << g;
  }
  // Ranks sharing a coordinate read identical streams.
  for (auto& [r, stream] : streams) {
    RankSpec s = new_shape;
    s.rank = r;
    auto c = project(s);
    EXPECT_EQ(stream, streams.at(coord_rep.at({c.d, c.c})));
  }
}

}  // namespace

TEST(Remap, DoublingDpPairsConsecutiveTgbs) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 1}, 0, 4, 32);
  auto old_spec = spec_of(0, 2, 1);
  auto shape = spec_of(0, 4, 1, 2);
  auto streams = read_all_ranks(store, old_spec, shape, {}, 2);
  expect_group_equality(streams, shape, {2, 1}, 0, 2, 1, 2);
  RankSpec probe = shape;
  auto plan = remap(old_spec, probe, {});
  EXPECT_EQ(plan.tgbs_per_group(), 2u);
  EXPECT_EQ(plan.steps_per_group(), 1u);
}

TEST(Remap, HalvingDpSpreadsOneTgbOverTwoSteps) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 1}, 0, 3, 32);
  auto streams = read_all_ranks(store, spec_of(0, 2, 1), spec_of(0, 1, 1), {}, 6);
  // Single remaining replica: its stream is exactly the old global order.
  EXPECT_EQ(streams.at(0), old_samples(0, 3, {2, 1}));
}

TEST(Remap, HalvingDpKeepsPerReplicaOrder) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {4, 1}, 0, 3, 32);
  auto shape = spec_of(0, 2, 1);
  auto streams = read_all_ranks(store, spec_of(0, 4, 1), shape, {}, 6);
  expect_group_equality(streams, shape, {4, 1}, 0, 1, 2, 3);
  // Even slice groups first: replica d reads 2d, then 2d+1.
  EXPECT_EQ(streams.at(1)[0], (Identity{0, 2}));
  EXPECT_EQ(streams.at(1)[1], (Identity{0, 3}));
}

TEST(Remap, HalvingCpFollowsTheSameRule) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 2}, 0, 3, 32);
  auto shape = spec_of(0, 2, 1, 2);
  auto streams = read_all_ranks(store, spec_of(0, 2, 2), shape, {}, 6);
  expect_group_equality(streams, shape, {2, 2}, 0, 1, 2, 3);
}

TEST(Remap, CombinedDpGrowAndCpShrink) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 2}, 0, 4, 32);
  auto shape = spec_of(0, 4, 1);
  auto streams = read_all_ranks(store, spec_of(0, 2, 2), shape, {}, 4);
  expect_group_equality(streams, shape, {2, 2}, 0, 2, 2, 2);
}

TEST(Remap, StartsAtTheCursor) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 1}, 0, 6, 32);
  auto shape = spec_of(0, 4, 1);
  auto streams = read_all_ranks(store, spec_of(0, 2, 1), shape, {1, 2}, 2);
  expect_group_equality(streams, shape, {2, 1}, 2, 2, 1, 2);
}

TEST(Remap, TpPpChangesReadIdenticalBytes) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 2}, 0, 4, 48);
  auto old_spec = spec_of(0, 2, 2, 2, 1);
  for (auto [tp, pp] : {std::pair{4u, 1u}, std::pair{1u, 3u}, std::pair{2u, 2u}}) {
    auto shape = spec_of(0, 2, 2, tp, pp);
    auto plan_probe = remap(old_spec, shape, {});
    EXPECT_TRUE(plan_probe.identity());
    for (std::uint32_t r = 0; r < shape.world_size; ++r) {
      RankSpec spec = shape;
      spec.rank = r;
      auto coord = project(spec);
      // An old-mesh rank with the same (d, c).
      RankSpec twin = old_spec;
      twin.rank = (coord.d * 2 + coord.c) * 2;
      ASSERT_EQ(project(twin), coord);
      auto base = ConsumerClient::create(store, "ns", "base", twin, {}, manual_opts());
      RemapReader reader(store, "ns", spec, remap(old_spec, spec, {}), manual_opts());
      for (int k = 0; k < 4; ++k) {
        auto a = base.next_batch();
        auto b = reader.next_batch();
        ASSERT_TRUE(a.ok() && b.ok());
        EXPECT_EQ(a.data, b.data);
      }
    }
  }
}

TEST(Remap, RejectsNonPowerOfTwoRatios) {
  auto from = spec_of(0, 2, 2);
  EXPECT_EQ(code_of([&] { remap(from, spec_of(0, 3, 2), {}); }), Errc::kUnsupportedRemap);
  EXPECT_EQ(code_of([&] { remap(from, spec_of(0, 6, 2), {}); }), Errc::kUnsupportedRemap);
  EXPECT_EQ(code_of([&] { remap(spec_of(0, 3, 1), spec_of(0, 2, 1), {}); }), Errc::kUnsupportedRemap);
  EXPECT_EQ(code_of([&] { remap(from, spec_of(0, 2, 3), {}); }), Errc::kUnsupportedRemap);
  EXPECT_NO_THROW(remap(from, spec_of(0, 8, 1), {}));
}

TEST(Remap, WaitsForMissingTgbsAndChecksLayout) {
  auto store = std::make_shared<MemoryStore>();
  produce_tagged(store, "ns", {2, 1}, 0, 1, 32);
  auto spec = spec_of(3, 4, 1);
  RemapReader reader(store, "ns", spec, remap(spec_of(0, 2, 1), spec, {}), manual_opts());
  EXPECT_EQ(reader.next_batch().status, BatchStatus::kNotYetAvailable);
  produce_tagged(store, "ns", {1, 1}, 1, 1, 32, 1, "p1");
  EXPECT_EQ(code_of([&] { reader.next_batch(); }), Errc::kInvalidTopology);
}
