#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "tgbplane/manifest.hpp"
#include "tgbplane/watermark.hpp"

namespace tgbplane {

struct ReclaimReport {
  std::optional<std::uint64_t> w_global;
  std::uint64_t trimmed_to_step = 0;
  std::optional<std::uint64_t> trim_version;  // version of the trim commit, if one was made
  std::uint64_t manifests_deleted = 0;
  std::uint64_t tgb_objects_deleted = 0;
  std::uint64_t bytes_freed = 0;
  bool dry_run = false;

  std::string to_json_line() const {
    nlohmann::json j = {{"record", "reclaim"},
                        {"w_global", w_global ? nlohmann::json(*w_global) : nlohmann::json(nullptr)},
                        {"trimmed_to_step", trimmed_to_step},
                        {"trim_version", trim_version ? nlohmann::json(*trim_version) : nlohmann::json(nullptr)},
                        {"manifests_deleted", manifests_deleted},
                        {"tgb_objects_deleted", tgb_objects_deleted},
                        {"bytes_freed", bytes_freed},
                        {"dry_run", dry_run}};
    return j.dump();
  }
};

struct ReclaimOptions {
  bool dry_run = false;
  int max_trim_attempts = 64;
};

namespace detail {

// Parses `<ns>/data/<producer>/<seq>.tgb` back into (producer, seq).
inline std::optional<std::pair<std::string, std::uint64_t>> parse_tgb_key(std::string_view ns,
                                                                           const ObjectKey& key) {
  std::string_view s = key.str();
  std::string prefix = std::string(ns) + "/data/";
  if (!s.starts_with(prefix)) return std::nullopt;
  s.remove_prefix(prefix.size());
  auto slash = s.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  std::string producer(s.substr(0, slash));
  std::string_view file = s.substr(slash + 1);
  if (file.size() != 16 || !file.ends_with(".tgb")) return std::nullopt;
  std::uint64_t seq = 0;
  for (char ch : file.substr(0, 12)) {
    if (ch < '0' || ch > '9') return std::nullopt;
    seq = seq * 10 + static_cast<std::uint64_t>(ch - '0');
  }
  return std::make_pair(std::move(producer), seq);
}

}  // namespace detail

// Checkpoint-aligned reclamation. Restartable at any point:
//   1. W_global = min watermark version, T* = min watermark step.
//   2. Trim commit dropping steps below T* (ordinary conditional put).
//   3. Delete manifest objects with version < W_global, ascending.
//   4. Delete TGB objects that are committed (seq <= producer offset) but no
//      longer referenced by the latest manifest.
// Every crash point leaves only unreferenced garbage behind.
inline ReclaimReport reclaim(ObjectStore& store, std::string_view ns, ReclaimOptions opts = {}) {
  validate_namespace(ns);
  ReclaimReport report;
  report.dry_run = opts.dry_run;
  auto watermarks = read_all_watermarks(store, ns);
  report.w_global = global_watermark(watermarks);
  if (!report.w_global) return report;
  const std::uint64_t trim_to = *min_watermark_step(watermarks);

  auto current = latest(store, ns);
  if (!current) return report;

  // Trim.
  Manifest head = *current;
  for (int attempt = 0; head.trim_floor < trim_to && head.end_step() > head.trim_floor; ++attempt) {
    if (attempt >= opts.max_trim_attempts) fail(Errc::kTransientIo, "trim commit kept conflicting");
    Manifest cand = build_trim_candidate(head, trim_to);
    if (cand.trim_floor == head.trim_floor) break;
    if (opts.dry_run) {
      head = std::move(cand);
      break;
    }
    auto out = try_commit(store, ns, cand);
    if (out.committed()) {
      report.trim_version = cand.version;
      head = std::move(cand);
      break;
    }
    head = latest_from(store, ns, head);
  }
  report.trimmed_to_step = head.trim_floor;

  // Manifests strictly below W_global.
  for (auto v : list_manifest_versions(store, ns)) {
    if (v >= *report.w_global) break;
    auto key = manifest_key(ns, v);
    try {
      report.bytes_freed += store.size(key);
    } catch (const Error& e) {
      if (e.code() != Errc::kNotFound) throw;
      continue;
    }
    if (!opts.dry_run) store.remove(key);
    ++report.manifests_deleted;
  }

  // Committed-but-unreferenced TGB objects. Re-read the head so that TGBs
  // committed after the trim are recognized as referenced.
  if (!opts.dry_run) head = latest_from(store, ns, head);
  std::set<std::string> referenced;
  for (const auto& d : head.tgb_list)
    for (const auto& k : d.object_keys) referenced.insert(k.str());
  for (const auto& key : store.list(std::string(ns) + "/data/")) {
    auto parsed = detail::parse_tgb_key(ns, key);
    if (!parsed || referenced.contains(key.str())) continue;
    auto off = head.committed_offset(parsed->first);
    if (!off || parsed->second > *off) continue;  // staged, not yet committed
    try {
      report.bytes_freed += store.size(key);
    } catch (const Error& e) {
      if (e.code() != Errc::kNotFound) throw;
      continue;
    }
    if (!opts.dry_run) store.remove(key);
    ++report.tgb_objects_deleted;
  }
  return report;
}

struct StorageCensus {
  std::uint64_t manifest_bytes = 0;
  std::uint64_t tgb_bytes = 0;
  std::uint64_t watermark_bytes = 0;
  std::uint64_t other_bytes = 0;
  std::uint64_t manifest_objects = 0;
  std::uint64_t tgb_objects = 0;
  std::uint64_t watermark_objects = 0;

  std::uint64_t total_bytes() const noexcept {
    return manifest_bytes + tgb_bytes + watermark_bytes + other_bytes;
  }

  std::string to_json_line() const {
    nlohmann::json j = {{"record", "census"},
                        {"manifest_bytes", manifest_bytes},
                        {"tgb_bytes", tgb_bytes},
                        {"watermark_bytes", watermark_bytes},
                        {"other_bytes", other_bytes},
                        {"manifest_objects", manifest_objects},
                        {"tgb_objects", tgb_objects},
                        {"watermark_objects", watermark_objects},
                        {"total_bytes", total_bytes()}};
    return j.dump();
  }
};

inline StorageCensus storage_census(ObjectStore& store, std::string_view ns) {
  validate_namespace(ns);
  StorageCensus c;
  const std::string mprefix = manifest_prefix(ns);
  const std::string dprefix = std::string(ns) + "/data/";
  const std::string wprefix = watermark_prefix(ns);
  for (const auto& key : store.list(std::string(ns) + "/")) {
    std::uint64_t size = 0;
    try {
      size = store.size(key);
    } catch (const Error& e) {
      if (e.code() == Errc::kNotFound) continue;
      throw;
    }
    const auto& s = key.str();
    if (s.starts_with(mprefix)) {
      c.manifest_bytes += size;
      ++c.manifest_objects;
    } else if (s.starts_with(dprefix)) {
      c.tgb_bytes += size;
      ++c.tgb_objects;
    } else if (s.starts_with(wprefix)) {
      c.watermark_bytes += size;
      ++c.watermark_objects;
    } else {
      c.other_bytes += size;
    }
  }
  return c;
}

}  // namespace tgbplane
