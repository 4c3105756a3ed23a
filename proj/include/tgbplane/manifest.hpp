#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgbplane/object_store.hpp"
#include "tgbplane/tgb_format.hpp"

namespace tgbplane {

// Producer id reserved for the reclaimer's trim commits.
inline constexpr std::string_view kGcProducerId = "__gc__";
inline constexpr std::uint64_t kMaxManifestVersion = 99'999'999;

struct TgbDescriptor {
  std::uint64_t step_index = 0;
  std::vector<ObjectKey> object_keys;
  MeshSpec mesh;
  std::uint64_t total_bytes = 0;
  std::string producer_id;
  std::uint64_t producer_seq = 0;

  friend bool operator==(const TgbDescriptor&, const TgbDescriptor&) = default;
};

struct ProducerState {
  // Highest producer_seq committed; absent until the first TGB lands.
  std::optional<std::uint64_t> committed_offset;
  std::uint64_t last_commit_version = 0;

  friend bool operator==(const ProducerState&, const ProducerState&) = default;
};

struct Manifest {
  std::uint64_t version = 0;
  std::uint64_t trim_floor = 0;
  std::vector<TgbDescriptor> tgb_list;  // steps trim_floor, trim_floor+1, ...
  std::map<std::string, ProducerState> producer_states;

  std::uint64_t end_step() const noexcept { return trim_floor + tgb_list.size(); }

  bool has_step(std::uint64_t step) const noexcept {
    return step >= trim_floor && step < end_step();
  }

  const TgbDescriptor& at_step(std::uint64_t step) const {
    if (step < trim_floor) fail(Errc::kStepReclaimed, "step " + std::to_string(step));
    if (step >= end_step()) fail(Errc::kInvalidArgument, "step " + std::to_string(step) + " not yet committed");
    return tgb_list[step - trim_floor];
  }

  std::optional<std::uint64_t> committed_offset(const std::string& producer_id) const {
    auto it = producer_states.find(producer_id);
    if (it == producer_states.end()) return std::nullopt;
    return it->second.committed_offset;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// The implicit version-0 state every namespace starts from. Never stored.
inline Manifest genesis_manifest() { return Manifest{}; }

inline void validate_namespace(std::string_view ns) {
  if (!ObjectKey::is_valid(ns)) fail(Errc::kInvalidKey, "namespace '" + std::string(ns) + "'");
}

inline std::string manifest_prefix(std::string_view ns) { return std::string(ns) + "/manifest/"; }

// `<ns>/manifest/<version, 8 digits>.manifest`
inline ObjectKey manifest_key(std::string_view ns, std::uint64_t version) {
  if (version > kMaxManifestVersion)
    fail(Errc::kVersionOverflow, "version " + std::to_string(version) + " exceeds 8 digits");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llu.manifest", static_cast<unsigned long long>(version));
  return ObjectKey(manifest_prefix(ns) + buf);
}

// Inverse of manifest_key on the final path component.
inline std::optional<std::uint64_t> parse_manifest_name(std::string_view name) {
  constexpr std::string_view kSuffix = ".manifest";
  if (name.size() != 8 + kSuffix.size() || !name.ends_with(kSuffix)) return std::nullopt;
  std::uint64_t v = 0;
  for (char ch : name.substr(0, 8)) {
    if (ch < '0' || ch > '9') return std::nullopt;
    v = v * 10 + static_cast<std::uint64_t>(ch - '0');
  }
  return v;
}

// ---------------------------------------------------------------------------
// Canonical encoding: compact JSON with sorted keys and integer fields only.
// ---------------------------------------------------------------------------

inline Bytes encode_manifest(const Manifest& m) {
  using nlohmann::json;
  json tgbs = json::array();
  for (const auto& d : m.tgb_list) {
    json keys = json::array();
    for (const auto& k : d.object_keys) keys.push_back(k.str());
    tgbs.push_back({{"step_index", d.step_index},
                    {"object_keys", std::move(keys)},
                    {"mesh", {{"dp", d.mesh.dp}, {"cp", d.mesh.cp}}},
                    {"total_bytes", d.total_bytes},
                    {"producer_id", d.producer_id},
                    {"producer_seq", d.producer_seq}});
  }
  json producers = json::object();
  for (const auto& [id, st] : m.producer_states) {
    json s = {{"last_commit_version", st.last_commit_version}};
    if (st.committed_offset) s["committed_offset"] = *st.committed_offset;
    producers[id] = std::move(s);
  }
  json doc = {{"version", m.version},
              {"trim_floor", m.trim_floor},
              {"tgbs", std::move(tgbs)},
              {"producer_states", std::move(producers)}};
  return to_bytes(doc.dump());
}

namespace detail {

using nlohmann::json;

inline void require_fields(const json& obj, std::initializer_list<std::string_view> required,
                           std::initializer_list<std::string_view> optional, std::string_view what) {
  if (!obj.is_object()) fail(Errc::kSchemaViolation, std::string(what) + " is not an object");
  for (auto f : required)
    if (!obj.contains(f)) fail(Errc::kSchemaViolation, std::string(what) + " lacks '" + std::string(f) + "'");
  for (const auto& [k, _] : obj.items()) {
    bool known = false;
    for (auto f : required) known |= (k == f);
    for (auto f : optional) known |= (k == f);
    if (!known) fail(Errc::kSchemaViolation, std::string(what) + " has unknown field '" + k + "'");
  }
}

inline std::uint64_t as_u64(const json& v, std::string_view what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    fail(Errc::kSchemaViolation, std::string(what) + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::uint32_t as_dim(const json& v, std::string_view what) {
  auto x = as_u64(v, what);
  if (x < 1 || x > UINT32_MAX) fail(Errc::kSchemaViolation, std::string(what) + " out of range");
  return static_cast<std::uint32_t>(x);
}

inline std::string as_id(const json& v, std::string_view what) {
  if (!v.is_string()) fail(Errc::kSchemaViolation, std::string(what) + " must be a string");
  auto s = v.get<std::string>();
  if (!ObjectKey::is_valid_component(s))
    fail(Errc::kSchemaViolation, std::string(what) + " '" + s + "' is not a valid key component");
  return s;
}

}  // namespace detail

// Checks every structural invariant of a manifest value.
inline void validate_manifest(const Manifest& m) {
  std::set<std::pair<std::string, std::uint64_t>> seen;
  for (std::size_t i = 0; i < m.tgb_list.size(); ++i) {
    const auto& d = m.tgb_list[i];
    if (d.step_index != m.trim_floor + i)
      fail(Errc::kSchemaViolation, "step indices not dense at position " + std::to_string(i));
    if (d.object_keys.empty()) fail(Errc::kSchemaViolation, "descriptor without object keys");
    if (!d.mesh.valid()) fail(Errc::kSchemaViolation, "descriptor mesh must be >= 1x1");
    if (!seen.emplace(d.producer_id, d.producer_seq).second)
      fail(Errc::kSchemaViolation, "duplicate (" + d.producer_id + ", " +
                                       std::to_string(d.producer_seq) + ")");
    auto off = m.committed_offset(d.producer_id);
    if (!off || *off < d.producer_seq)
      fail(Errc::kSchemaViolation, "producer state for " + d.producer_id +
                                       " does not cover seq " + std::to_string(d.producer_seq));
  }
  for (const auto& [id, st] : m.producer_states) {
    if (!ObjectKey::is_valid_component(id) || id == kGcProducerId)
      fail(Errc::kSchemaViolation, "bad producer id '" + id + "'");
    if (st.last_commit_version > m.version)
      fail(Errc::kSchemaViolation, "producer " + id + " committed after this version");
  }
}

inline Manifest decode_manifest(ByteView bytes, std::optional<std::uint64_t> expected_version = {}) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(Errc::kSchemaViolation, std::string("manifest is not valid JSON: ") + e.what());
  }
  detail::require_fields(doc, {"version", "trim_floor", "tgbs", "producer_states"}, {}, "manifest");
  Manifest m;
  m.version = detail::as_u64(doc["version"], "version");
  m.trim_floor = detail::as_u64(doc["trim_floor"], "trim_floor");
  if (!doc["tgbs"].is_array()) fail(Errc::kSchemaViolation, "tgbs must be an array");
  for (const auto& t : doc["tgbs"]) {
    detail::require_fields(t, {"step_index", "object_keys", "mesh", "total_bytes", "producer_id", "producer_seq"},
                           {}, "descriptor");
    TgbDescriptor d;
    d.step_index = detail::as_u64(t["step_index"], "step_index");
    if (!t["object_keys"].is_array()) fail(Errc::kSchemaViolation, "object_keys must be an array");
    for (const auto& k : t["object_keys"]) {
      if (!k.is_string() || !ObjectKey::is_valid(k.get<std::string>()))
        fail(Errc::kSchemaViolation, "invalid object key in descriptor");
      d.object_keys.emplace_back(k.get<std::string>());
    }
    detail::require_fields(t["mesh"], {"dp", "cp"}, {}, "mesh");
    d.mesh.dp = detail::as_dim(t["mesh"]["dp"], "mesh.dp");
    d.mesh.cp = detail::as_dim(t["mesh"]["cp"], "mesh.cp");
    d.total_bytes = detail::as_u64(t["total_bytes"], "total_bytes");
    d.producer_id = detail::as_id(t["producer_id"], "producer_id");
    d.producer_seq = detail::as_u64(t["producer_seq"], "producer_seq");
    m.tgb_list.push_back(std::move(d));
  }
  if (!doc["producer_states"].is_object()) fail(Errc::kSchemaViolation, "producer_states must be an object");
  for (const auto& [id, s] : doc["producer_states"].items()) {
    detail::require_fields(s, {"last_commit_version"}, {"committed_offset"}, "producer state");
    ProducerState st;
    st.last_commit_version = detail::as_u64(s["last_commit_version"], "last_commit_version");
    if (s.contains("committed_offset"))
      st.committed_offset = detail::as_u64(s["committed_offset"], "committed_offset");
    m.producer_states.emplace(id, st);
  }
  validate_manifest(m);
  if (expected_version && *expected_version != m.version)
    fail(Errc::kSchemaViolation, "object for version " + std::to_string(*expected_version) +
                                     " holds version " + std::to_string(m.version));
  return m;
}

// ---------------------------------------------------------------------------
// Discovery
// ---------------------------------------------------------------------------

inline std::optional<Manifest> read_manifest(ObjectStore& store, std::string_view ns,
                                             std::uint64_t version) {
  try {
    return decode_manifest(store.get(manifest_key(ns, version)), version);
  } catch (const Error& e) {
    if (e.code() == Errc::kNotFound) return std::nullopt;
    throw;
  }
}

// Versions currently stored, ascending.
inline std::vector<std::uint64_t> list_manifest_versions(ObjectStore& store, std::string_view ns) {
  std::vector<std::uint64_t> out;
  for (const auto& k : store.list(manifest_prefix(ns)))
    if (auto v = parse_manifest_name(k.name())) out.push_back(*v);
  return out;
}

// Highest committed manifest at some instant during the call, or nullopt for
// a namespace nobody has committed to. One list, then forward probes.
inline std::optional<Manifest> latest(ObjectStore& store, std::string_view ns) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    auto versions = list_manifest_versions(store, ns);
    if (versions.empty()) return std::nullopt;
    std::uint64_t v = versions.back();
    while (v < kMaxManifestVersion && store.exists(manifest_key(ns, v + 1))) ++v;
    if (auto m = read_manifest(store, ns, v)) return m;
    // Reclaimed between list and read; start over.
  }
  fail(Errc::kTransientIo, "could not pin a stable latest manifest");
}

// Latest manifest starting from a known version: probes v+1, v+2, ... and
// falls back to a listing when the known version has been reclaimed.
// Reclaimers delete in ascending version order, so a present `known` with a
// missing successor means the successor was never written.
inline Manifest latest_from(ObjectStore& store, std::string_view ns, const Manifest& known) {
  if (known.version == 0 || !store.exists(manifest_key(ns, known.version))) {
    auto m = latest(store, ns);
    if (!m) return known;
    return m->version >= known.version ? std::move(*m) : known;
  }
  std::uint64_t v = known.version;
  while (v < kMaxManifestVersion && store.exists(manifest_key(ns, v + 1))) ++v;
  if (v == known.version) return known;
  if (auto m = read_manifest(store, ns, v)) return std::move(*m);
  auto m = latest(store, ns);
  return m ? std::move(*m) : known;
}

// ---------------------------------------------------------------------------
// Commit protocol
// ---------------------------------------------------------------------------

// Next manifest: base plus new_tgbs appended with dense step indices, and the
// producer's committed_offset advanced to the highest new seq.
inline Manifest build_candidate(const Manifest& base, const std::vector<TgbDescriptor>& new_tgbs,
                                const std::string& producer_id) {
  if (!ObjectKey::is_valid_component(producer_id) || producer_id == kGcProducerId)
    fail(Errc::kInvalidArgument, "producer id '" + producer_id + "'");
  auto committed = base.committed_offset(producer_id);
  for (std::size_t i = 0; i < new_tgbs.size(); ++i) {
    const auto& d = new_tgbs[i];
    if (d.producer_id != producer_id)
      fail(Errc::kInvalidArgument, "descriptor from " + d.producer_id + " in batch of " + producer_id);
    if (committed && d.producer_seq <= *committed)
      fail(Errc::kStaleSequence, producer_id + " seq " + std::to_string(d.producer_seq) +
                                     " already covered by committed offset " + std::to_string(*committed));
    if (i > 0 && d.producer_seq != new_tgbs[i - 1].producer_seq + 1)
      fail(Errc::kInvalidArgument, "producer seqs must be consecutive");
  }
  if (base.version + 1 > kMaxManifestVersion) fail(Errc::kVersionOverflow, "manifest versions exhausted");

  Manifest cand = base;
  cand.version = base.version + 1;
  std::uint64_t step = base.end_step();
  for (auto d : new_tgbs) {
    d.step_index = step++;
    cand.tgb_list.push_back(std::move(d));
  }
  auto& st = cand.producer_states[producer_id];
  if (!new_tgbs.empty()) st.committed_offset = new_tgbs.back().producer_seq;
  st.last_commit_version = cand.version;
  return cand;
}

// Drops local TGBs the winner already covers, then builds on the winner.
inline std::vector<TgbDescriptor> uncommitted(const Manifest& m, const std::vector<TgbDescriptor>& local,
                                              const std::string& producer_id) {
  auto committed = m.committed_offset(producer_id);
  std::vector<TgbDescriptor> out;
  for (const auto& d : local)
    if (!committed || d.producer_seq > *committed) out.push_back(d);
  return out;
}

inline Manifest rebase(const Manifest& winner, const std::vector<TgbDescriptor>& local_tgbs,
                       const std::string& producer_id) {
  return build_candidate(winner, uncommitted(winner, local_tgbs, producer_id), producer_id);
}

// Trim commit: same list with every step below trim_to dropped.
inline Manifest build_trim_candidate(const Manifest& base, std::uint64_t trim_to) {
  if (base.version + 1 > kMaxManifestVersion) fail(Errc::kVersionOverflow, "manifest versions exhausted");
  Manifest cand = base;
  cand.version = base.version + 1;
  std::uint64_t floor = std::clamp(trim_to, base.trim_floor, base.end_step());
  cand.tgb_list.erase(cand.tgb_list.begin(),
                      cand.tgb_list.begin() + static_cast<std::ptrdiff_t>(floor - base.trim_floor));
  cand.trim_floor = floor;
  return cand;
}

struct CommitOutcome {
  enum class Kind { kCommitted, kConflict } kind = Kind::kConflict;
  std::uint64_t version = 0;
  bool ambiguous = false;  // resolved from a TransientIo by re-reading

  bool committed() const noexcept { return kind == Kind::kCommitted; }
};

// Conditional put of the candidate under its version's name. A TransientIo
// leaves the outcome unknown; the object is then re-read and byte equality
// with the candidate decides success.
inline CommitOutcome try_commit(ObjectStore& store, std::string_view ns, const Manifest& candidate,
                                int reread_attempts = 4) {
  auto key = manifest_key(ns, candidate.version);
  auto bytes = encode_manifest(candidate);
  try {
    auto put = store.put_if_absent(key, bytes);
    return {put == PutOutcome::kCreated ? CommitOutcome::Kind::kCommitted : CommitOutcome::Kind::kConflict,
            candidate.version, false};
  } catch (const Error& e) {
    if (e.code() != Errc::kTransientIo) throw;
  }
  for (int i = 0;; ++i) {
    try {
      auto stored = store.get(key);
      return {stored == bytes ? CommitOutcome::Kind::kCommitted : CommitOutcome::Kind::kConflict,
              candidate.version, true};
    } catch (const Error& e) {
      if (e.code() == Errc::kNotFound) return {CommitOutcome::Kind::kConflict, candidate.version, true};
      if (e.code() != Errc::kTransientIo || i + 1 >= reread_attempts) throw;
    }
  }
}

}  // namespace tgbplane
