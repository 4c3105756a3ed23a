#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "tgbplane/error.hpp"

namespace tgbplane {

// Slash-separated object path relative to a namespace root. Every component
// matches [A-Za-z0-9._-]+ and is neither "." nor "..".
class ObjectKey {
 public:
  explicit ObjectKey(std::string path) : path_(std::move(path)) {
    if (!is_valid(path_)) fail(Errc::kInvalidKey, "'" + path_ + "'");
  }

  static bool is_valid_component(std::string_view c) {
    if (c.empty() || c == "." || c == "..") return false;
    for (char ch : c) {
      bool ok = (ch >= 'A' && ch <= 'Z') || (ch >= 'a' && ch <= 'z') ||
                (ch >= '0' && ch <= '9') || ch == '.' || ch == '_' || ch == '-';
      if (!ok) return false;
    }
    return true;
  }

  static bool is_valid(std::string_view path) {
    if (path.empty() || path.front() == '/') return false;
    std::size_t start = 0;
    while (true) {
      std::size_t slash = path.find('/', start);
      std::string_view comp =
          path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
      if (!is_valid_component(comp)) return false;
      if (slash == std::string_view::npos) return true;
      start = slash + 1;
    }
  }

  const std::string& str() const noexcept { return path_; }

  // Final path component.
  std::string_view name() const noexcept {
    auto pos = path_.rfind('/');
    return pos == std::string::npos ? std::string_view(path_)
                                    : std::string_view(path_).substr(pos + 1);
  }

  friend auto operator<=>(const ObjectKey&, const ObjectKey&) = default;
  friend bool operator==(const ObjectKey&, const ObjectKey&) = default;

 private:
  std::string path_;
};

enum class PutOutcome { kCreated, kAlreadyExists };

// The three primitives everything else rests on: atomic put-if-absent,
// range reads, idempotent delete. Implementations are internally
// synchronized and never retry on their own.
class ObjectStore {
 public:
  virtual ~ObjectStore() = default;

  // Exactly one of any set of concurrent callers for a key gets kCreated.
  virtual PutOutcome put_if_absent(const ObjectKey& key, ByteView data) = 0;

  // Unconditional overwrite. Only for single-writer objects (watermarks).
  virtual void put(const ObjectKey& key, ByteView data) = 0;

  virtual Bytes get(const ObjectKey& key) = 0;

  // Throws kRangeOutOfBounds when offset + length exceeds the object size.
  virtual Bytes get_range(const ObjectKey& key, std::uint64_t offset, std::uint64_t length) = 0;

  virtual std::uint64_t size(const ObjectKey& key) = 0;

  // Keys whose path starts with prefix, in lexicographic order.
  virtual std::vector<ObjectKey> list(std::string_view prefix) = 0;

  // Deleting a missing key succeeds.
  virtual void remove(const ObjectKey& key) = 0;

  bool exists(const ObjectKey& key) {
    try {
      size(key);
      return true;
    } catch (const Error& e) {
      if (e.code() == Errc::kNotFound) return false;
      throw;
    }
  }
};

// Pass-through decorator that tallies request counts and bytes moved.
class CountingStore final : public ObjectStore {
 public:
  explicit CountingStore(std::shared_ptr<ObjectStore> inner) : inner_(std::move(inner)) {}

  PutOutcome put_if_absent(const ObjectKey& key, ByteView data) override {
    puts_.fetch_add(1, std::memory_order_relaxed);
    bytes_written_.fetch_add(data.size(), std::memory_order_relaxed);
    return inner_->put_if_absent(key, data);
  }
  void put(const ObjectKey& key, ByteView data) override {
    puts_.fetch_add(1, std::memory_order_relaxed);
    bytes_written_.fetch_add(data.size(), std::memory_order_relaxed);
    inner_->put(key, data);
  }
  Bytes get(const ObjectKey& key) override {
    auto b = inner_->get(key);
    gets_.fetch_add(1, std::memory_order_relaxed);
    bytes_read_.fetch_add(b.size(), std::memory_order_relaxed);
    return b;
  }
  Bytes get_range(const ObjectKey& key, std::uint64_t offset, std::uint64_t length) override {
    auto b = inner_->get_range(key, offset, length);
    gets_.fetch_add(1, std::memory_order_relaxed);
    bytes_read_.fetch_add(b.size(), std::memory_order_relaxed);
    return b;
  }
  std::uint64_t size(const ObjectKey& key) override { return inner_->size(key); }
  std::vector<ObjectKey> list(std::string_view prefix) override {
    lists_.fetch_add(1, std::memory_order_relaxed);
    return inner_->list(prefix);
  }
  void remove(const ObjectKey& key) override {
    deletes_.fetch_add(1, std::memory_order_relaxed);
    inner_->remove(key);
  }

  std::uint64_t bytes_read() const { return bytes_read_.load(); }
  std::uint64_t bytes_written() const { return bytes_written_.load(); }
  std::uint64_t gets() const { return gets_.load(); }
  std::uint64_t puts() const { return puts_.load(); }
  std::uint64_t lists() const { return lists_.load(); }
  std::uint64_t deletes() const { return deletes_.load(); }

  void reset_counters() {
    bytes_read_ = 0;
    bytes_written_ = 0;
    gets_ = puts_ = lists_ = deletes_ = 0;
  }

 private:
  std::shared_ptr<ObjectStore> inner_;
  std::atomic<std::uint64_t> bytes_read_{0}, bytes_written_{0};
  std::atomic<std::uint64_t> gets_{0}, puts_{0}, lists_{0}, deletes_{0};
};

}  // namespace tgbplane
