#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgbplane/manifest.hpp"

namespace tgbplane {

// Result of replaying every stored manifest version of a namespace.
struct HistoryAudit {
  std::uint64_t versions_checked = 0;
  std::uint64_t latest_version = 0;
  std::uint64_t descriptors = 0;         // in the latest manifest
  std::uint64_t unique_descriptors = 0;  // distinct (producer_id, seq) in the latest manifest
  std::map<std::string, std::uint64_t> per_producer;  // descriptors per producer, latest manifest
  std::vector<std::string> violations;

  bool ok() const noexcept { return violations.empty(); }

  std::string to_json_line() const {
    nlohmann::json j = {{"record", "audit"},
                        {"ok", ok()},
                        {"versions_checked", versions_checked},
                        {"latest_version", latest_version},
                        {"descriptors", descriptors},
                        {"unique_descriptors", unique_descriptors},
                        {"violations", violations}};
    return j.dump();
  }
};

// Checks, for every stored version:
//  - decodes under its own key, steps dense from trim_floor, (producer, seq) unique;
//  - the predecessor's retained descriptors are a prefix of it (skipped
//    where the predecessor was reclaimed);
//  - producer offsets never move backward and trim_floor never decreases.
// For the latest version each producer's seqs must be exactly 0..offset when
// nothing was trimmed.
inline HistoryAudit audit_history(ObjectStore& store, std::string_view ns) {
  HistoryAudit a;
  auto note = [&](std::uint64_t v, const std::string& what) {
    a.violations.push_back("v" + std::to_string(v) + ": " + what);
  };
  Manifest prev = genesis_manifest();
  bool have_prev = true;  // genesis is implicit
  for (auto v : list_manifest_versions(store, ns)) {
    std::optional<Manifest> cur;
    try {
      cur = read_manifest(store, ns, v);
    } catch (const Error& e) {
      note(v, std::string("unreadable: ") + e.what());
      have_prev = false;
      continue;
    }
    if (!cur) continue;
    ++a.versions_checked;
    if (have_prev && cur->version == prev.version + 1) {
      if (cur->trim_floor < prev.trim_floor) note(v, "trim_floor decreased");
      std::size_t skip = 0;
      while (skip < prev.tgb_list.size() && prev.tgb_list[skip].step_index < cur->trim_floor) ++skip;
      if (prev.tgb_list.size() - skip > cur->tgb_list.size()) {
        note(v, "dropped descriptors of its predecessor");
      } else {
        for (std::size_t i = skip; i < prev.tgb_list.size(); ++i)
          if (!(prev.tgb_list[i] == cur->tgb_list[i - skip])) {
            note(v, "rewrote step " + std::to_string(prev.tgb_list[i].step_index));
            break;
          }
      }
      for (const auto& [id, st] : prev.producer_states) {
        auto it = cur->producer_states.find(id);
        if (it == cur->producer_states.end()) {
          note(v, "lost producer " + id);
          continue;
        }
        if (st.committed_offset && (!it->second.committed_offset || *it->second.committed_offset < *st.committed_offset))
          note(v, "offset of " + id + " moved backward");
      }
    }
    prev = std::move(*cur);
    have_prev = true;
  }

  a.latest_version = prev.version;
  a.descriptors = prev.tgb_list.size();
  std::set<std::pair<std::string, std::uint64_t>> seen;
  std::map<std::string, std::set<std::uint64_t>> seqs;
  for (const auto& d : prev.tgb_list) {
    seen.insert({d.producer_id, d.producer_seq});
    seqs[d.producer_id].insert(d.producer_seq);
    ++a.per_producer[d.producer_id];
  }
  a.unique_descriptors = seen.size();
  if (a.unique_descriptors != a.descriptors) note(prev.version, "duplicate (producer, seq) descriptors");
  if (prev.trim_floor == 0) {
    for (const auto& [id, st] : prev.producer_states) {
      if (!st.committed_offset) continue;
      const auto& s = seqs[id];
      if (s.size() != *st.committed_offset + 1 || (!s.empty() && *s.rbegin() != *st.committed_offset))
        note(prev.version, "producer " + id + " seqs are not exactly 0.." + std::to_string(*st.committed_offset));
    }
  }
  return a;
}

}  // namespace tgbplane
