#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "support.hpp"
#include "tgbplane/memory_store.hpp"
#include "tgbplane/producer.hpp"

namespace tgbtest {

// Commits TGBs tagged first_tag .. first_tag+count-1 from one producer,
// per_commit at a time. With a single producer, tag == step on a fresh namespace.
inline void produce_tagged(std::shared_ptr<tgbplane::ObjectStore> store, const std::string& ns,
                           tgbplane::MeshSpec mesh, std::uint64_t first_tag, std::uint64_t count,
                           std::size_t slice_bytes, std::uint64_t per_commit = 1,
                           const std::string& producer_id = "p0") {
  tgbplane::ProducerOptions opts;
  opts.clock = std::make_shared<tgbplane::ManualClock>();
  auto p = tgbplane::ProducerClient::open(std::move(store), ns, producer_id, opts);
  for (std::uint64_t i = 0; i < count; ++i) {
    p.write_tgb(tagged_tgb(first_tag + i, mesh.slices(), slice_bytes), mesh);
    if ((i + 1) % per_commit == 0) p.finalize(60.0);
  }
  p.finalize(60.0);
}

// (tag, slice) written by tagged_slice.
inline std::pair<std::uint64_t, std::uint32_t> slice_identity(const tgbplane::Bytes& b) {
  if (b.size() < 12) throw std::runtime_error("slice too short to carry an identity");
  std::uint64_t tag = 0;
  std::uint32_t slice = 0;
  for (int i = 0; i < 8; ++i) tag |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  for (int i = 0; i < 4; ++i) slice |= static_cast<std::uint32_t>(b[8 + i]) << (8 * i);
  return {tag, slice};
}

// Records every ranged read that does not end at the object's end (footer
// probes always do).
class RangeLog final : public tgbplane::ObjectStore {
 public:
  explicit RangeLog(std::shared_ptr<tgbplane::ObjectStore> inner) : inner_(std::move(inner)) {}
  tgbplane::PutOutcome put_if_absent(const tgbplane::ObjectKey& k, tgbplane::ByteView d) override { return inner_->put_if_absent(k, d); }
  void put(const tgbplane::ObjectKey& k, tgbplane::ByteView d) override { inner_->put(k, d); }
  tgbplane::Bytes get(const tgbplane::ObjectKey& k) override { return inner_->get(k); }
  tgbplane::Bytes get_range(const tgbplane::ObjectKey& k, std::uint64_t o, std::uint64_t l) override {
    if (o + l != inner_->size(k)) {
      std::lock_guard lk(mu_);
      ranges_.push_back({k.str(), o, l});
    }
    return inner_->get_range(k, o, l);
  }
  std::uint64_t size(const tgbplane::ObjectKey& k) override { return inner_->size(k); }
  std::vector<tgbplane::ObjectKey> list(std::string_view p) override { return inner_->list(p); }
  void remove(const tgbplane::ObjectKey& k) override { inner_->remove(k); }

  struct Range {
    std::string key;
    std::uint64_t offset, length;
  };
  std::vector<Range> take() {
    std::lock_guard lk(mu_);
    return std::exchange(ranges_, {});
  }

 private:
  std::shared_ptr<tgbplane::ObjectStore> inner_;
  std::mutex mu_;
  std::vector<Range> ranges_;
};

}  // namespace tgbtest
