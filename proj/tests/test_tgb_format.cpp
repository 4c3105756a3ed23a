#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"
#include "tgbplane/memory_store.hpp"
#include "tgbplane/tgb_format.hpp"

using namespace tgbplane;

namespace {

std::vector<Bytes> slices_of_lengths(const std::vector<std::size_t>& lens) {
  std::vector<Bytes> out;
  char ch = 'a';
  for (auto n : lens) out.emplace_back(n, static_cast<std::uint8_t>(ch++));
  return out;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kInvalidArgument;  // sentinel: nothing thrown
}

// Offsets by running sum, independent of the encoder.
std::vector<std::uint64_t> prefix_offsets(const std::vector<std::size_t>& lens) {
  std::vector<std::uint64_t> off(lens.size(), 0);
  std::exclusive_scan(lens.begin(), lens.end(), off.begin(), std::uint64_t{0});
  return off;
}

}  // namespace

TEST(TgbFormat, SingleSlice) {
  auto f = make_footer({1, 1}, {3});
  ASSERT_EQ(f.entries.size(), 1u);
  EXPECT_EQ(f.entries[0].d, 0u);
  EXPECT_EQ(f.entries[0].c, 0u);
  EXPECT_EQ(f.entries[0].offset, 0u);
  EXPECT_EQ(f.entries[0].length, 3u);
}

TEST(TgbFormat, RowMajorOffsets) {
  auto f = make_footer({2, 2}, {1, 2, 3, 4});
  std::vector<std::uint64_t> got;
  for (auto& e : f.entries) got.push_back(e.offset);
  EXPECT_EQ(got, prefix_offsets({1, 2, 3, 4}));
  EXPECT_EQ(got, (std::vector<std::uint64_t>{0, 1, 3, 6}));
  EXPECT_EQ(slice_range(f, 1, 0), std::make_pair(std::uint64_t{3}, std::uint64_t{3}));
  EXPECT_EQ(slice_range(f, 0, 0), std::make_pair(std::uint64_t{0}, std::uint64_t{1}));
  EXPECT_EQ(code_of([&] { slice_range(f, 2, 0); }), Errc::kCoordinateOutOfMesh);
  EXPECT_EQ(code_of([&] { slice_range(f, 0, 2); }), Errc::kCoordinateOutOfMesh);
}

TEST(TgbFormat, EmptySliceKeepsLaterOffsets) {
  auto f = make_footer({1, 3}, {4, 0, 5});
  EXPECT_EQ(f.entries[1].length, 0u);
  EXPECT_EQ(f.entries[1].offset, 4u);
  EXPECT_EQ(f.entries[2].offset, 4u);
}

TEST(TgbFormat, ShapeMismatch) {
  EXPECT_EQ(code_of([] { encode_tgb(slices_of_lengths({1, 2, 3}), {2, 2}); }), Errc::kShapeMismatch);
  EXPECT_EQ(code_of([] { encode_tgb({}, {0, 1}); }), Errc::kShapeMismatch);
}

TEST(TgbFormat, TrailerLayout) {
  auto blob = encode_tgb(slices_of_lengths({1, 2, 3, 4}), {2, 2});
  const std::uint64_t footer_len = 8 + 16 * 4;
  ASSERT_EQ(blob.size(), 10 + footer_len + 12);
  // Body bytes in slice order.
  EXPECT_EQ(blob[0], 'a');
  EXPECT_EQ(blob[1], 'b');
  EXPECT_EQ(blob[3], 'c');
  EXPECT_EQ(blob[6], 'd');
  // Footer starts with dp, cp as u32 LE.
  EXPECT_EQ(blob[10], 2);
  EXPECT_EQ(blob[14], 2);
  // Trailer: footer length u64 LE then "TGB1".
  const std::size_t t = blob.size() - 12;
  EXPECT_EQ(blob[t], footer_len);
  for (int i = 1; i < 8; ++i) EXPECT_EQ(blob[t + i], 0);
  EXPECT_EQ(std::string(blob.end() - 4, blob.end()), "TGB1");
}

TEST(TgbFormat, DecodeErrors) {
  auto blob = encode_tgb(slices_of_lengths({2, 2}), {2, 1});
  auto bad = blob;
  bad.back() ^= 0xff;
  EXPECT_EQ(code_of([&] { decode_footer(bad); }), Errc::kBadMagic);
  EXPECT_EQ(code_of([&] { decode_footer(ByteView(blob).last(11)); }), Errc::kTruncatedFooter);
  // Trailer claims more footer than the tail holds.
  EXPECT_EQ(code_of([&] { decode_footer(ByteView(blob).last(20)); }), Errc::kTruncatedFooter);
  // Mesh that disagrees with the footer length.
  auto corrupt = blob;
  corrupt[4] = 9;  // dp := 9
  EXPECT_EQ(code_of([&] { decode_footer(corrupt); }), Errc::kCorruptFooter);
}

TEST(TgbFormat, RoundTripProperty) {
  std::mt19937_64 rng(42);
  for (int iter = 0; iter < 300; ++iter) {
    MeshSpec mesh{static_cast<std::uint32_t>(1 + rng() % 6), static_cast<std::uint32_t>(1 + rng() % 6)};
    std::vector<std::size_t> lens;
    std::vector<Bytes> slices;
    for (std::uint32_t i = 0; i < mesh.slices(); ++i) {
      lens.push_back(rng() % 50);
      slices.push_back(tgbtest::random_bytes(rng, lens.back()));
    }
    auto blob = encode_tgb(slices, mesh);
    auto f = decode_footer(blob);
    ASSERT_EQ(f.mesh, mesh);
    auto offsets = prefix_offsets(lens);
    for (std::uint32_t d = 0; d < mesh.dp; ++d)
      for (std::uint32_t c = 0; c < mesh.cp; ++c) {
        auto [off, len] = slice_range(f, d, c);
        std::size_t i = d * mesh.cp + c;
        ASSERT_EQ(off, offsets[i]);
        ASSERT_EQ(len, lens[i]);
        ASSERT_TRUE(std::equal(slices[i].begin(), slices[i].end(), blob.begin() + static_cast<std::ptrdiff_t>(off)));
      }
    EXPECT_EQ(encoded_tgb_size(f), blob.size());
  }
}

TEST(TgbFormat, ReadFooterSmallObjectSingleFetch) {
  auto store = std::make_shared<CountingStore>(std::make_shared<MemoryStore>());
  auto key = tgb_key("ns", "p0", 0);
  auto blob = encode_tgb(slices_of_lengths({5, 6, 7, 8}), {2, 2});
  store->put(key, blob);
  store->reset_counters();
  auto fr = read_footer(*store, key);
  EXPECT_EQ(store->gets(), 1u);
  EXPECT_EQ(fr.bytes_fetched, blob.size());
  EXPECT_EQ(fr.object_size, blob.size());
  EXPECT_EQ(fr.footer.entries.size(), 4u);
}

TEST(TgbFormat, ReadFooterLargeFooterRefetches) {
  // 16x32 mesh: footer 8 + 16*512 bytes, beyond the 4 KiB probe.
  auto store = std::make_shared<CountingStore>(std::make_shared<MemoryStore>());
  MeshSpec mesh{16, 32};
  std::vector<Bytes> slices(mesh.slices(), Bytes(3, 7));
  auto key = tgb_key("ns", "p0", 1);
  store->put(key, encode_tgb(slices, mesh));
  store->reset_counters();
  auto fr = read_footer(*store, key);
  EXPECT_EQ(store->gets(), 2u);
  EXPECT_EQ(fr.footer.mesh, mesh);
  EXPECT_EQ(slice_range(fr.footer, 15, 31).first, 3u * 511);
}

TEST(TgbFormat, KeysAreFixedWidth) {
  EXPECT_EQ(tgb_key("ns", "p7", 42).str(), "ns/data/p7/000000000042.tgb");
  EXPECT_EQ(tgb_prefix("ns", "p7"), "ns/data/p7/");
}
