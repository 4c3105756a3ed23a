#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgbplane/manifest.hpp"

namespace tgbplane {

struct CommitOverheadConfig {
  std::string ns = "overhead";
  std::uint32_t commits = 200;
  std::uint32_t tgbs_per_commit = 4;
  std::uint32_t producers = 8;  // round-robin over this many producer ids
  MeshSpec mesh{2, 2};
  std::uint64_t tgb_bytes = 100 * 1024;
};

struct CommitOverheadReport {
  std::uint32_t commits = 0;
  double state_mean_s = 0.0;
  double control_mean_s = 0.0;
  double state_p50_s = 0.0;
  double control_p50_s = 0.0;
  std::uint64_t state_manifest_bytes = 0;    // final manifest size
  std::uint64_t control_manifest_bytes = 0;

  double overhead_pct() const {
    return control_mean_s > 0.0 ? 100.0 * (state_mean_s - control_mean_s) / control_mean_s : 0.0;
  }

  std::string to_json_line() const {
    nlohmann::json j = {{"record", "commit_overhead"},
                        {"commits", commits},
                        {"state_mean_s", state_mean_s},
                        {"control_mean_s", control_mean_s},
                        {"state_p50_s", state_p50_s},
                        {"control_p50_s", control_p50_s},
                        {"overhead_pct", overhead_pct()},
                        {"state_manifest_bytes", state_manifest_bytes},
                        {"control_manifest_bytes", control_manifest_bytes},
                        {"timing", true}};
    return j.dump();
  }
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace detail

// Per-commit latency of the full protocol (offset check, rebase filter,
// producer-state update) against a control whose manifests carry the same
// appends but a pinned, never-updated state map of equal shape. Both run in
// sibling namespaces `<ns>-state` / `<ns>-control`, interleaved commit by
// commit on identical inputs. Single writer: no conflicts in either arm.
inline CommitOverheadReport measure_commit_overhead(ObjectStore& store, const CommitOverheadConfig& cfg) {
  validate_namespace(cfg.ns);
  if (cfg.commits < 1 || cfg.tgbs_per_commit < 1 || cfg.producers < 1)
    fail(Errc::kConfigInvalid, "commits, tgbs_per_commit and producers must be >= 1");
  const std::string ns_state = cfg.ns + "-state";
  const std::string ns_control = cfg.ns + "-control";
  using clock = std::chrono::steady_clock;

  Manifest state_view = latest(store, ns_state).value_or(genesis_manifest());
  Manifest control_view = latest(store, ns_control).value_or(genesis_manifest());
  // Pinned control state: an offset high enough to cover every seq, never touched again.
  std::map<std::string, ProducerState> pinned;
  for (std::uint32_t p = 0; p < cfg.producers; ++p)
    pinned["p" + std::to_string(p)] = ProducerState{kMaxManifestVersion, 0};
  std::vector<std::uint64_t> next_seq(cfg.producers, 0);
  for (std::uint32_t p = 0; p < cfg.producers; ++p)
    if (auto off = state_view.committed_offset("p" + std::to_string(p))) next_seq[p] = *off + 1;

  std::vector<double> state_lat, control_lat;
  for (std::uint32_t i = 0; i < cfg.commits; ++i) {
    const std::uint32_t p = i % cfg.producers;
    const std::string pid = "p" + std::to_string(p);
    std::vector<TgbDescriptor> batch;
    for (std::uint32_t k = 0; k < cfg.tgbs_per_commit; ++k) {
      std::uint64_t seq = next_seq[p]++;
      batch.push_back({0, {tgb_key(ns_state, pid, seq)}, cfg.mesh, cfg.tgb_bytes, pid, seq});
    }

    auto t0 = clock::now();
    {
      Manifest base = latest_from(store, ns_state, state_view);
      auto pending = uncommitted(base, batch, pid);
      Manifest cand = build_candidate(base, pending, pid);
      if (!try_commit(store, ns_state, cand).committed()) fail(Errc::kTransientIo, "unexpected conflict");
      state_view = std::move(cand);
    }
    auto t1 = clock::now();
    {
      Manifest base = latest_from(store, ns_control, control_view);
      Manifest cand = base;
      cand.version = base.version + 1;
      std::uint64_t step = base.end_step();
      for (auto d : batch) {
        d.step_index = step++;
        d.object_keys = {tgb_key(ns_control, pid, d.producer_seq)};
        cand.tgb_list.push_back(std::move(d));
      }
      cand.producer_states = pinned;
      if (!try_commit(store, ns_control, cand).committed()) fail(Errc::kTransientIo, "unexpected conflict");
      control_view = std::move(cand);
    }
    auto t2 = clock::now();
    state_lat.push_back(std::chrono::duration<double>(t1 - t0).count());
    control_lat.push_back(std::chrono::duration<double>(t2 - t1).count());
  }

  CommitOverheadReport r;
  r.commits = cfg.commits;
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  r.state_mean_s = mean(state_lat);
  r.control_mean_s = mean(control_lat);
  r.state_p50_s = detail::median(state_lat);
  r.control_p50_s = detail::median(control_lat);
  r.state_manifest_bytes = encode_manifest(state_view).size();
  r.control_manifest_bytes = encode_manifest(control_view).size();
  return r;
}

}  // namespace tgbplane
