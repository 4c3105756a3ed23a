#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "tgbplane/object_store.hpp"

namespace tgbplane {

// Data-sharing shape of a TGB: D data-parallel replicas by C context-parallel
// ranks. TP and PP never influence layout.
struct MeshSpec {
  std::uint32_t dp = 1;
  std::uint32_t cp = 1;

  std::uint64_t slices() const noexcept { return std::uint64_t{dp} * cp; }
  bool valid() const noexcept { return dp >= 1 && cp >= 1; }
  friend bool operator==(const MeshSpec&, const MeshSpec&) = default;
};

struct SliceEntry {
  std::uint32_t d = 0;
  std::uint32_t c = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  friend bool operator==(const SliceEntry&, const SliceEntry&) = default;
};

struct FooterIndex {
  MeshSpec mesh;
  std::vector<SliceEntry> entries;  // row-major: d outer, c inner

  std::uint64_t body_size() const noexcept {
    return entries.empty() ? 0 : entries.back().offset + entries.back().length;
  }
  friend bool operator==(const FooterIndex&, const FooterIndex&) = default;
};

inline constexpr std::array<std::uint8_t, 4> kTgbMagic = {0x54, 0x47, 0x42, 0x31};  // "TGB1"
inline constexpr std::uint64_t kTrailerSize = 12;
// Tail bytes a reader fetches first; enough for D*C up to 255 without a refetch.
inline constexpr std::uint64_t kFooterProbeSize = 4096 + kTrailerSize;

inline std::uint64_t encoded_footer_size(const MeshSpec& mesh) { return 8 + 16 * mesh.slices(); }

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

// Builds the footer for slices of the given lengths laid out contiguously in
// row-major order.
inline FooterIndex make_footer(const MeshSpec& mesh, const std::vector<std::uint64_t>& lengths) {
  if (!mesh.valid()) fail(Errc::kShapeMismatch, "mesh dimensions must be >= 1");
  if (lengths.size() != mesh.slices())
    fail(Errc::kShapeMismatch, "expected " + std::to_string(mesh.slices()) + " slices, got " +
                                   std::to_string(lengths.size()));
  FooterIndex f{mesh, {}};
  f.entries.reserve(lengths.size());
  std::uint64_t offset = 0;
  for (std::uint32_t d = 0; d < mesh.dp; ++d)
    for (std::uint32_t c = 0; c < mesh.cp; ++c) {
      auto len = lengths[std::size_t{d} * mesh.cp + c];
      f.entries.push_back({d, c, offset, len});
      offset += len;
    }
  return f;
}

inline Bytes encode_footer(const FooterIndex& footer) {
  Bytes out;
  out.reserve(encoded_footer_size(footer.mesh) + kTrailerSize);
  detail::put_u32(out, footer.mesh.dp);
  detail::put_u32(out, footer.mesh.cp);
  for (const auto& e : footer.entries) {
    detail::put_u64(out, e.offset);
    detail::put_u64(out, e.length);
  }
  return out;
}

// Layout: [slice payloads, row-major][footer][footer_len: u64 LE]["TGB1"].
inline Bytes encode_tgb(const std::vector<Bytes>& slices, const MeshSpec& mesh) {
  std::vector<std::uint64_t> lengths;
  lengths.reserve(slices.size());
  for (const auto& s : slices) lengths.push_back(s.size());
  auto footer = make_footer(mesh, lengths);

  Bytes out;
  out.reserve(footer.body_size() + encoded_footer_size(mesh) + kTrailerSize);
  for (const auto& s : slices) out.insert(out.end(), s.begin(), s.end());
  auto fbytes = encode_footer(footer);
  out.insert(out.end(), fbytes.begin(), fbytes.end());
  detail::put_u64(out, fbytes.size());
  out.insert(out.end(), kTgbMagic.begin(), kTgbMagic.end());
  return out;
}

// Footer length recorded in the trailer. `tail` is any suffix of the object
// at least kTrailerSize long.
inline std::uint64_t footer_length_from_trailer(ByteView tail) {
  if (tail.size() < kTrailerSize)
    fail(Errc::kTruncatedFooter, "tail of " + std::to_string(tail.size()) + " bytes");
  const std::uint8_t* trailer = tail.data() + tail.size() - kTrailerSize;
  for (std::size_t i = 0; i < kTgbMagic.size(); ++i)
    if (trailer[8 + i] != kTgbMagic[i]) fail(Errc::kBadMagic, "trailer magic mismatch");
  return detail::get_u64(trailer);
}

// Decodes the footer from an object suffix. The suffix must contain the whole
// footer plus trailer.
inline FooterIndex decode_footer(ByteView tail) {
  std::uint64_t flen = footer_length_from_trailer(tail);
  if (flen > tail.size() - kTrailerSize)
    fail(Errc::kTruncatedFooter, "footer of " + std::to_string(flen) + " bytes, tail holds " +
                                     std::to_string(tail.size() - kTrailerSize));
  if (flen < 8 || (flen - 8) % 16 != 0)
    fail(Errc::kCorruptFooter, "footer length " + std::to_string(flen));
  const std::uint8_t* p = tail.data() + tail.size() - kTrailerSize - flen;
  FooterIndex f;
  f.mesh.dp = detail::get_u32(p);
  f.mesh.cp = detail::get_u32(p + 4);
  if (!f.mesh.valid() || f.mesh.slices() != (flen - 8) / 16)
    fail(Errc::kCorruptFooter, "mesh " + std::to_string(f.mesh.dp) + "x" +
                                   std::to_string(f.mesh.cp) + " disagrees with footer length");
  f.entries.reserve(f.mesh.slices());
  std::uint64_t expected_offset = 0;
  p += 8;
  for (std::uint32_t d = 0; d < f.mesh.dp; ++d)
    for (std::uint32_t c = 0; c < f.mesh.cp; ++c) {
      SliceEntry e{d, c, detail::get_u64(p), detail::get_u64(p + 8)};
      p += 16;
      if (e.offset != expected_offset || e.length > UINT64_MAX - e.offset)
        fail(Errc::kCorruptFooter, "slice (" + std::to_string(d) + "," + std::to_string(c) +
                                       ") is not contiguous");
      expected_offset = e.offset + e.length;
      f.entries.push_back(e);
    }
  return f;
}

// (offset, length) of slice (d, c) within the TGB object.
inline std::pair<std::uint64_t, std::uint64_t> slice_range(const FooterIndex& footer,
                                                           std::uint32_t d, std::uint32_t c) {
  if (d >= footer.mesh.dp || c >= footer.mesh.cp)
    fail(Errc::kCoordinateOutOfMesh, "(" + std::to_string(d) + "," + std::to_string(c) +
                                         ") outside " + std::to_string(footer.mesh.dp) + "x" +
                                         std::to_string(footer.mesh.cp));
  const auto& e = footer.entries[std::size_t{d} * footer.mesh.cp + c];
  return {e.offset, e.length};
}

inline std::uint64_t encoded_tgb_size(const FooterIndex& footer) {
  return footer.body_size() + encoded_footer_size(footer.mesh) + kTrailerSize;
}

struct FooterRead {
  FooterIndex footer;
  std::uint64_t object_size = 0;
  std::uint64_t bytes_fetched = 0;
};

// One tail read of min(size, kFooterProbeSize) bytes, plus a second read
// when the footer is larger than the probe. Verifies the footer accounts for
// the whole object.
inline FooterRead read_footer(ObjectStore& store, const ObjectKey& key) {
  FooterRead r;
  r.object_size = store.size(key);
  std::uint64_t probe = std::min(r.object_size, kFooterProbeSize);
  auto tail = store.get_range(key, r.object_size - probe, probe);
  r.bytes_fetched = tail.size();
  std::uint64_t flen = footer_length_from_trailer(tail);
  if (flen + kTrailerSize > r.object_size)
    fail(Errc::kCorruptFooter, key.str() + ": footer longer than object");
  if (flen + kTrailerSize > tail.size()) {
    tail = store.get_range(key, r.object_size - flen - kTrailerSize, flen + kTrailerSize);
    r.bytes_fetched += tail.size();
  }
  r.footer = decode_footer(tail);
  if (encoded_tgb_size(r.footer) != r.object_size)
    fail(Errc::kCorruptFooter, key.str() + ": footer describes " +
                                   std::to_string(encoded_tgb_size(r.footer)) +
                                   " bytes, object has " + std::to_string(r.object_size));
  return r;
}

// `<ns>/data/<producer_id>/<producer_seq, 12 digits>.tgb`
inline ObjectKey tgb_key(std::string_view ns, std::string_view producer_id, std::uint64_t seq) {
  if (seq > 999'999'999'999ULL) fail(Errc::kVersionOverflow, "producer_seq exceeds 12 digits");
  char buf[24];
  std::snprintf(buf, sizeof buf, "%012llu", static_cast<unsigned long long>(seq));
  return ObjectKey(std::string(ns) + "/data/" + std::string(producer_id) + "/" + buf + ".tgb");
}

inline std::string tgb_prefix(std::string_view ns, std::string_view producer_id) {
  return std::string(ns) + "/data/" + std::string(producer_id) + "/";
}

}  // namespace tgbplane
