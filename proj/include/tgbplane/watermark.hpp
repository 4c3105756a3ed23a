#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgbplane/object_store.hpp"

namespace tgbplane {

// A consumer's checkpointed cursor. `version` gates manifest reclamation,
// `step` is where replay resumes.
struct Watermark {
  std::string consumer_id;
  std::uint64_t version = 0;
  std::uint64_t step = 0;

  friend bool operator==(const Watermark&, const Watermark&) = default;
};

inline std::string watermark_prefix(std::string_view ns) { return std::string(ns) + "/watermarks/"; }

// `<ns>/watermarks/<consumer_id>.wm`
inline ObjectKey watermark_key(std::string_view ns, std::string_view consumer_id) {
  if (!ObjectKey::is_valid_component(consumer_id))
    fail(Errc::kInvalidKey, "consumer id '" + std::string(consumer_id) + "'");
  return ObjectKey(watermark_prefix(ns) + std::string(consumer_id) + ".wm");
}

// Canonical text: {"consumer_id":...,"step":...,"version":...}
inline Bytes encode_watermark(const Watermark& w) {
  nlohmann::json doc = {{"consumer_id", w.consumer_id}, {"version", w.version}, {"step", w.step}};
  return to_bytes(doc.dump());
}

inline Watermark decode_watermark(ByteView bytes) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(Errc::kSchemaViolation, std::string("watermark is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.size() != 3 || !doc.contains("consumer_id") || !doc.contains("version") ||
      !doc.contains("step"))
    fail(Errc::kSchemaViolation, "watermark needs exactly consumer_id, version, step");
  if (!doc["consumer_id"].is_string() || !doc["version"].is_number_unsigned() ||
      !doc["step"].is_number_unsigned())
    fail(Errc::kSchemaViolation, "watermark field types");
  return {doc["consumer_id"].get<std::string>(), doc["version"].get<std::uint64_t>(),
          doc["step"].get<std::uint64_t>()};
}

inline std::optional<Watermark> read_watermark(ObjectStore& store, std::string_view ns,
                                               std::string_view consumer_id) {
  try {
    return decode_watermark(store.get(watermark_key(ns, consumer_id)));
  } catch (const Error& e) {
    if (e.code() == Errc::kNotFound) return std::nullopt;
    throw;
  }
}

inline std::vector<Watermark> read_all_watermarks(ObjectStore& store, std::string_view ns) {
  std::vector<Watermark> out;
  for (const auto& key : store.list(watermark_prefix(ns))) {
    if (!key.name().ends_with(".wm")) continue;
    try {
      out.push_back(decode_watermark(store.get(key)));
    } catch (const Error& e) {
      if (e.code() != Errc::kNotFound) throw;
    }
  }
  return out;
}

// W_global: the minimum checkpointed version, or nullopt when nobody has
// checkpointed yet (nothing may be reclaimed).
inline std::optional<std::uint64_t> global_watermark(std::span<const Watermark> watermarks) {
  if (watermarks.empty()) return std::nullopt;
  return std::min_element(watermarks.begin(), watermarks.end(),
                          [](const auto& a, const auto& b) { return a.version < b.version; })
      ->version;
}

// Smallest checkpointed step; steps below it are never replayed.
inline std::optional<std::uint64_t> min_watermark_step(std::span<const Watermark> watermarks) {
  if (watermarks.empty()) return std::nullopt;
  return std::min_element(watermarks.begin(), watermarks.end(),
                          [](const auto& a, const auto& b) { return a.step < b.step; })
      ->step;
}

}  // namespace tgbplane
