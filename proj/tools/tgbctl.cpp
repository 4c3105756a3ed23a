// tgbctl: operator surface over the tgbplane modules.
//
// Records go to stdout as JSON lines; the human summary goes to stderr.
// Exit codes: 0 ok, 1 invariant violation, 2 usage error, 3 transient I/O.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tgbplane/audit.hpp"
#include "tgbplane/bench.hpp"
#include "tgbplane/consumer.hpp"
#include "tgbplane/file_store.hpp"
#include "tgbplane/lifecycle.hpp"
#include "tgbplane/memory_store.hpp"
#include "tgbplane/presets.hpp"
#include "tgbplane/stress.hpp"

using namespace tgbplane;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kViolation = 1, kUsage = 2, kTransient = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// memory | fs:PATH | remote:ENDPOINT
std::shared_ptr<ObjectStore> open_store(const std::string& spec) {
  if (spec == "memory") return std::make_shared<MemoryStore>();
  if (spec.starts_with("fs:") && spec.size() > 3) return std::make_shared<FileStore>(spec.substr(3));
  if (spec.starts_with("remote:")) throw UsageError("remote backends are not built into this binary");
  throw UsageError("--store must be memory, fs:PATH or remote:ENDPOINT, got '" + spec + "'");
}

int exit_code_for(Errc e) {
  switch (e) {
    case Errc::kTransientIo: return kTransient;
    case Errc::kConfigInvalid:
    case Errc::kInvalidArgument:
    case Errc::kInvalidTopology:
    case Errc::kInvalidKey:
    case Errc::kUnsupportedRemap:
    case Errc::kWatermarkMissing:
    case Errc::kNotFound:
    case Errc::kDomainError: return kUsage;
    default: return kViolation;
  }
}

void emit(const json& j) { std::cout << j.dump() << '\n'; }

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

// ---- inspect

struct InspectArgs {
  std::optional<std::uint64_t> version;
  bool descriptors = false;
  bool audit = false;
};

int cmd_inspect(ObjectStore& store, const std::string& ns, const InspectArgs& a) {
  auto m = a.version ? read_manifest(store, ns, *a.version) : latest(store, ns);
  if (!m) {
    emit({{"record", "manifest"}, {"ns", ns}, {"exists", false}});
    std::cerr << (a.version ? "manifest v" + std::to_string(*a.version) + " not found" : "no manifest") << '\n';
    return a.version ? kUsage : kOk;
  }
  json producers = json::object();
  for (const auto& [id, st] : m->producer_states) {
    producers[id] = {{"committed_offset", st.committed_offset ? json(*st.committed_offset) : json(nullptr)},
                     {"last_commit_version", st.last_commit_version}};
  }
  emit({{"record", "manifest"},   {"ns", ns},
        {"exists", true},         {"version", m->version},
        {"trim_floor", m->trim_floor}, {"end_step", m->end_step()},
        {"entries", m->tgb_list.size()}, {"producers", producers}});
  std::cerr << "v" << m->version << ": steps [" << m->trim_floor << ", " << m->end_step() << "), "
            << m->producer_states.size() << " producer(s)\n";
  if (a.descriptors) {
    for (const auto& d : m->tgb_list) {
      json keys = json::array();
      for (const auto& k : d.object_keys) keys.push_back(k.str());
      emit({{"record", "descriptor"}, {"step", d.step_index}, {"producer", d.producer_id},
            {"seq", d.producer_seq}, {"dp", d.mesh.dp}, {"cp", d.mesh.cp}, {"bytes", d.total_bytes},
            {"keys", keys}});
    }
  }
  if (a.audit) {
    auto report = audit_history(store, ns);
    std::cout << report.to_json_line() << '\n';
    if (!report.ok()) {
      std::cerr << "history audit found " << report.violations.size() << " violation(s)\n";
      return kViolation;
    }
  }
  return kOk;
}

// ---- produce

struct ProduceArgs {
  StressConfig cfg;
  std::optional<std::uint64_t> tgbs;
  bool virtual_time = false;
  bool overhead = false;
  std::uint32_t overhead_commits = 200;
};

int cmd_produce(std::shared_ptr<ObjectStore> store, const std::string& ns, ProduceArgs a) {
  if (a.overhead) {
    CommitOverheadConfig oc;
    oc.ns = ns;
    oc.commits = a.overhead_commits;
    oc.producers = a.cfg.n_producers;
    oc.mesh = a.cfg.mesh;
    oc.tgb_bytes = a.cfg.slice_bytes * a.cfg.mesh.slices();
    auto r = measure_commit_overhead(*store, oc);
    std::cout << r.to_json_line() << '\n';
    std::fprintf(stderr, "commit latency with producer state %.3g s vs %.3g s without: %+.1f%%\n", r.state_mean_s,
                 r.control_mean_s, r.overhead_pct());
    return kOk;
  }
  a.cfg.ns = ns;
  a.cfg.tgbs_per_producer = a.tgbs;
  if (a.virtual_time) a.cfg.clock = std::make_shared<VirtualClock>();
  auto r = stress_real(store, a.cfg);
  std::cout << r.to_json_lines();
  std::fprintf(stderr, "%u producer(s): %llu TGBs committed in %.2f s (%.1f TGB/s), success %.3f, conflict %.3f\n",
               a.cfg.n_producers, static_cast<unsigned long long>(r.sim.committed_tgbs), r.sim.measured_seconds,
               r.sim.throughput_tgbs_s, r.sim.success_rate, r.sim.conflict_rate);
  if (!r.census_ok()) {
    std::cerr << "census failed: " << r.audit.to_json_line() << '\n';
    return kViolation;
  }
  return kOk;
}

// ---- consume

struct ConsumeArgs {
  std::uint32_t dp = 1, cp = 1, tp = 1, pp = 1;
  std::optional<std::uint32_t> rank;
  std::optional<std::uint32_t> world_size;
  bool all_ranks = false;
  std::optional<std::uint64_t> steps;
  double duration_s = 0.0;  // 0: stop at the first uncommitted step
  std::string consumer_id = "tgbctl";
  bool restore = false;
  bool checkpoint = false;
  std::size_t prefetch = 0;
};

std::optional<std::uint32_t> env_u32(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    unsigned long x = std::stoul(v, &used);
    if (used != std::strlen(v)) throw std::invalid_argument(v);
    return static_cast<std::uint32_t>(x);
  } catch (const std::exception&) {
    throw UsageError(std::string(name) + " must be a non-negative integer");
  }
}

json consume_rank(std::shared_ptr<ObjectStore> store, const std::string& ns, const ConsumeArgs& a, RankSpec spec) {
  ConsumerOptions opts;
  opts.prefetch_depth = a.prefetch;
  opts.poll_interval = 0.05;
  const std::string id = a.consumer_id + "-rank" + std::to_string(spec.rank);
  auto c = a.restore ? ConsumerClient::restore(store, ns, id, spec, opts) : ConsumerClient::create(store, ns, id, spec, {}, opts);
  const auto start = c.cursor();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  std::uint64_t steps = 0, bytes = 0;
  while (!a.steps || steps < *a.steps) {
    auto b = c.next_batch();
    if (!b.ok()) {
      if (elapsed() >= a.duration_s) break;
      std::this_thread::sleep_for(std::chrono::duration<double>(opts.poll_interval));
      continue;
    }
    ++steps;
    bytes += b.data.size();
    if (a.duration_s > 0.0 && elapsed() >= a.duration_s) break;
  }
  const double secs = elapsed();
  if (a.checkpoint && steps > 0) c.checkpoint();
  const auto& st = c.stats();
  auto coord = project(spec);
  return {{"record", "consumer"},
          {"rank", spec.rank},
          {"d", coord.d},
          {"c", coord.c},
          {"consumer_id", id},
          {"start_step", start.step},
          {"steps", steps},
          {"payload_bytes", bytes},
          {"cursor", {{"version", c.cursor().version}, {"step", c.cursor().step}}},
          {"read_amplification", st.read_amplification()},
          {"timing",
           {{"seconds", secs},
            {"steps_per_s", secs > 0 ? static_cast<double>(steps) / secs : 0.0},
            {"bytes_per_s", secs > 0 ? static_cast<double>(bytes) / secs : 0.0},
            {"p50_read_s", percentile(st.read_latencies, 0.50)},
            {"p95_read_s", percentile(st.read_latencies, 0.95)}}}};
}

int cmd_consume(std::shared_ptr<ObjectStore> store, const std::string& ns, ConsumeArgs a) {
  const std::uint32_t product = a.dp * a.cp * a.tp * a.pp;
  if (!a.world_size) a.world_size = env_u32("WORLD_SIZE");
  const std::uint32_t world = a.world_size.value_or(product);
  if (world != product)
    throw UsageError("world size " + std::to_string(world) + " != dp*cp*tp*pp = " + std::to_string(product));
  std::vector<std::uint32_t> ranks;
  if (a.all_ranks) {
    for (std::uint32_t r = 0; r < world; ++r) ranks.push_back(r);
  } else {
    auto r = a.rank ? a.rank : env_u32("RANK");
    if (!r) throw UsageError("pass --rank, --all-ranks, or set RANK");
    ranks.push_back(*r);
  }
  std::vector<json> reports(ranks.size());
  std::vector<std::string> errors(ranks.size());
  std::vector<int> codes(ranks.size(), kOk);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        reports[i] = consume_rank(store, ns, a, {ranks[i], world, a.dp, a.cp, a.tp, a.pp});
      } catch (const Error& e) {
        errors[i] = e.what();
        codes[i] = exit_code_for(e.code());
      }
    });
  }
  for (auto& t : threads) t.join();
  int rc = kOk;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (!errors[i].empty()) {
      std::cerr << "rank " << ranks[i] << ": " << errors[i] << '\n';
      rc = std::max(rc, codes[i]);
      continue;
    }
    emit(reports[i]);
    const auto& r = reports[i];
    std::fprintf(stderr, "rank %u (d=%u c=%u): %llu step(s), amplification %.4f, p95 %.3g s\n", ranks[i],
                 r["d"].get<unsigned>(), r["c"].get<unsigned>(), r["steps"].get<unsigned long long>(),
                 r["read_amplification"].get<double>(), r["timing"]["p95_read_s"].get<double>());
  }
  return rc;
}

// ---- gc

int cmd_gc(ObjectStore& store, const std::string& ns, bool dry_run, bool census) {
  auto r = reclaim(store, ns, {.dry_run = dry_run});
  std::cout << r.to_json_line() << '\n';
  if (census) std::cout << storage_census(store, ns).to_json_line() << '\n';
  if (!r.w_global) {
    std::cerr << "no watermarks; nothing is eligible\n";
  } else {
    std::fprintf(stderr, "%sW_global v%llu: %llu manifest(s), %llu TGB object(s), %llu byte(s)\n",
                 dry_run ? "[dry run] " : "", static_cast<unsigned long long>(*r.w_global),
                 static_cast<unsigned long long>(r.manifests_deleted),
                 static_cast<unsigned long long>(r.tgb_objects_deleted),
                 static_cast<unsigned long long>(r.bytes_freed));
  }
  return kOk;
}

// ---- simulate / validate-model

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

sim::SimConfig sim_config_from(const json& j, sim::SimConfig c) {
  const std::set<std::string> known = {"n_producers", "duration_s",   "interarrival_mean_s", "interarrival_exponential",
                                       "tau0_s",      "tau_slope_s",  "tau_noise",           "seed",
                                       "warmup_s",    "payload_bytes", "series_interval_s",  "saturated",
                                       "drain",       "preset",       "policies"};
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw UsageError("unknown config field '" + k + "'");
  take(j, "n_producers", c.n_producers);
  take(j, "duration_s", c.duration_s);
  take(j, "interarrival_mean_s", c.interarrival.mean_s);
  take(j, "interarrival_exponential", c.interarrival.exponential);
  take(j, "tau0_s", c.tau0_s);
  take(j, "tau_slope_s", c.tau_slope_s);
  take(j, "tau_noise", c.tau_noise);
  take(j, "seed", c.seed);
  take(j, "warmup_s", c.warmup_s);
  take(j, "payload_bytes", c.payload_bytes);
  take(j, "series_interval_s", c.series_interval_s);
  take(j, "saturated", c.saturated);
  take(j, "drain", c.drain);
  return c;
}

// {"kind": "dac"|"naive"|"fixed"|"incr"|"aimd"|"gap", ...}
sim::PolicySpec policy_from(const json& j) {
  const auto kind = j.value("kind", std::string("dac"));
  if (kind == "naive") return sim::PolicySpec::naive();
  if (kind == "fixed") return sim::PolicySpec::fixed(j.value("k", 10u));
  if (kind == "incr") return sim::PolicySpec::incr(j.value("k", 10u));
  if (kind == "aimd") return sim::PolicySpec::aimd(j.value("addend", 1.0), j.value("factor", 0.5));
  if (kind == "gap") return sim::PolicySpec::fixed_gap(j.value("gap", 0.0), j.value("exponential", true));
  if (kind == "dac") {
    dac::DacParams p;
    take(j, "epsilon", p.epsilon);
    take(j, "delta", p.delta);
    take(j, "alpha", p.alpha);
    take(j, "rho", p.rho);
    return sim::PolicySpec::dac(p);
  }
  throw UsageError("unknown policy kind '" + kind + "'");
}

struct SimulateArgs {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  bool series = true;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.config_path.empty() == a.preset.empty()) throw UsageError("pass exactly one of --config or --preset");
  sim::SimConfig cfg;
  std::vector<sim::PolicySpec> runs;
  json j = a.config_path.empty() ? json{{"preset", a.preset}} : load_json(a.config_path);
  const auto preset = j.value("preset", std::string());
  if (preset == "budget-tracking") {
    cfg = sim::budget_tracking_config();
    runs = {sim::PolicySpec::dac()};
  } else if (preset == "ablation") {
    cfg = sim::ablation_config();
    runs = sim::ablation_policies(cfg);
  } else if (!preset.empty()) {
    throw UsageError("unknown preset '" + preset + "' (budget-tracking, ablation)");
  }
  cfg = sim_config_from(j, cfg);
  if (a.seed) cfg.seed = *a.seed;
  if (j.contains("policies")) {
    runs.clear();
    for (const auto& p : j.at("policies")) runs.push_back(policy_from(p));
  }
  if (runs.empty()) runs = {sim::PolicySpec::dac()};
  for (const auto& p : runs) {
    auto r = sim::simulate(cfg, {p});
    emit({{"record", "run"}, {"policy", p.name()}, {"n_producers", cfg.n_producers}, {"seed", cfg.seed}});
    std::istringstream lines(r.to_json_lines());
    for (std::string line; std::getline(lines, line);)
      if (a.series || line.find("\"record\":\"series\"") == std::string::npos) std::cout << line << '\n';
    std::fprintf(stderr, "%-9s throughput %8.2f TGB/s  success %.3f  conflict %.3f\n", p.name().c_str(),
                 r.throughput_tgbs_s, r.success_rate, r.conflict_rate);
  }
  return kOk;
}

struct ValidateArgs {
  std::vector<std::uint32_t> producers{8, 32};
  std::vector<double> gaps;
  std::uint64_t min_attempts = 20000;
  std::uint64_t seed = 11;
  std::optional<double> tolerance;
};

int cmd_validate_model(ValidateArgs a) {
  if (a.gaps.empty()) a.gaps = sim::default_gap_grid();
  double worst = 0.0;
  for (auto n : a.producers) {
    for (const auto& row : sim::validate_model(sim::model_validation_config(n, a.seed), a.gaps, a.min_attempts)) {
      std::cout << row.to_json_line(n) << '\n';
      worst = std::max(worst, std::abs(row.empirical - row.predicted));
      std::fprintf(stderr, "N=%-4u T=%7.2f tau  predicted %.4f  measured %.4f  failed %.4f\n", n, row.gap,
                   row.predicted, row.empirical, row.failed);
    }
  }
  std::fprintf(stderr, "largest deviation %.4f\n", worst);
  if (a.tolerance && worst > *a.tolerance) {
    std::fprintf(stderr, "deviation exceeds tolerance %.4f\n", *a.tolerance);
    return kViolation;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tgbplane operator tool"};
  app.require_subcommand(1);
  std::string store_spec = "memory";
  std::string ns = "default";

  auto add_store = [&](CLI::App* sub) {
    sub->add_option("--store", store_spec, "memory | fs:PATH | remote:ENDPOINT")->capture_default_str();
    sub->add_option("--ns", ns, "dataset namespace")->capture_default_str();
  };

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "summarize the latest (or a pinned) manifest");
  add_store(inspect);
  inspect->add_option("--version", ia.version, "pin a historical manifest version");
  inspect->add_flag("--descriptors", ia.descriptors, "dump every TGB descriptor");
  inspect->add_flag("--audit", ia.audit, "verify the whole manifest history");

  ProduceArgs pa;
  pa.cfg.write_interval_s = 0.0;
  auto* produce = app.add_subcommand("produce", "run synthetic producers against the store");
  add_store(produce);
  produce->add_option("-n,--producers", pa.cfg.n_producers)->capture_default_str()->check(CLI::PositiveNumber);
  produce->add_option("--slice-bytes", pa.cfg.slice_bytes)->capture_default_str();
  produce->add_option("--dp", pa.cfg.mesh.dp)->capture_default_str()->check(CLI::PositiveNumber);
  produce->add_option("--cp", pa.cfg.mesh.cp)->capture_default_str()->check(CLI::PositiveNumber);
  produce->add_option("--duration", pa.cfg.duration_s, "seconds of production")->capture_default_str();
  produce->add_option("--tgbs", pa.tgbs, "TGBs per producer; overrides --duration");
  produce->add_option("--write-interval", pa.cfg.write_interval_s, "mean seconds between writes")
      ->capture_default_str();
  produce->add_option("--warmup", pa.cfg.warmup_s, "seconds left out of the rates")->capture_default_str();
  produce->add_option("--epsilon", pa.cfg.dac.epsilon, "conflict budget")->capture_default_str();
  produce->add_option("--delta", pa.cfg.dac.delta, "duty budget")->capture_default_str();
  produce->add_option("--max-lag", pa.cfg.max_lag, "TGBs a producer may hold beyond the slowest watermark");
  produce->add_option("--seed", pa.cfg.seed)->capture_default_str();
  produce->add_flag("--virtual-time", pa.virtual_time, "share a simulated clock; needs --write-interval or --tgbs");
  produce->add_flag("--overhead", pa.overhead, "measure commit latency with and without producer state");
  produce->add_option("--overhead-commits", pa.overhead_commits)->capture_default_str();

  ConsumeArgs ca;
  auto* consume = app.add_subcommand("consume", "read committed steps as one or more ranks");
  add_store(consume);
  consume->add_option("--dp", ca.dp)->capture_default_str()->check(CLI::PositiveNumber);
  consume->add_option("--cp", ca.cp)->capture_default_str()->check(CLI::PositiveNumber);
  consume->add_option("--tp", ca.tp)->capture_default_str()->check(CLI::PositiveNumber);
  consume->add_option("--pp", ca.pp)->capture_default_str()->check(CLI::PositiveNumber);
  auto* rank_opt = consume->add_option("--rank", ca.rank, "defaults to $RANK");
  consume->add_option("--world-size", ca.world_size, "defaults to $WORLD_SIZE, then dp*cp*tp*pp");
  consume->add_flag("--all-ranks", ca.all_ranks, "one reader thread per rank")->excludes(rank_opt);
  consume->add_option("--steps", ca.steps, "steps per rank");
  consume->add_option("--duration", ca.duration_s, "keep polling for new steps this many seconds")
      ->capture_default_str();
  consume->add_option("--consumer-id", ca.consumer_id, "watermark id prefix; ranks append -rankN")
      ->capture_default_str();
  consume->add_flag("--restore", ca.restore, "resume from the persisted watermark");
  consume->add_flag("--checkpoint", ca.checkpoint, "persist the watermark when done");
  consume->add_option("--prefetch", ca.prefetch, "steps fetched ahead")->capture_default_str();

  bool dry_run = false, census = false;
  auto* gc = app.add_subcommand("gc", "trim and delete everything below the global watermark");
  add_store(gc);
  gc->add_flag("--dry-run", dry_run, "report without deleting");
  gc->add_flag("--census", census, "also print the storage census");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "run the commit-policy simulator");
  simulate->add_option("--config", sa.config_path, "JSON config file");
  simulate->add_option("--preset", sa.preset, "budget-tracking | ablation");
  simulate->add_option("--seed", sa.seed);
  simulate->add_flag("!--no-series", sa.series, "omit time-series records");

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate-model", "compare the contention model with simulation");
  validate->add_option("-n,--producers", va.producers)->capture_default_str();
  validate->add_option("--gaps", va.gaps, "gap multiples of the window; defaults to a log grid");
  validate->add_option("--min-attempts", va.min_attempts)->capture_default_str();
  validate->add_option("--seed", va.seed)->capture_default_str();
  validate->add_option("--tolerance", va.tolerance, "exit 1 if any row deviates more");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(sa);
    if (*validate) return cmd_validate_model(va);
    validate_namespace(ns);
    auto store = open_store(store_spec);
    if (*inspect) return cmd_inspect(*store, ns, ia);
    if (*produce) return cmd_produce(store, ns, pa);
    if (*consume) return cmd_consume(store, ns, ca);
    if (*gc) return cmd_gc(*store, ns, dry_run, census);
  } catch (const UsageError& e) {
    std::cerr << "tgbctl: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "tgbctl: " << errc_name(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "tgbctl: config: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
