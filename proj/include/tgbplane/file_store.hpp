#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "tgbplane/object_store.hpp"

namespace tgbplane {

// Directory-backed store. A key maps to a relative file path under root.
// put_if_absent writes a temp file next to the target and publishes it with
// link(2), which fails with EEXIST if the name is taken; the one-winner
// property therefore holds across processes on one host. Temp names carry
// '#', which no valid key component can contain, so list() never sees them.
class FileStore final : public ObjectStore {
 public:
  explicit FileStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) fail(Errc::kTransientIo, "create " + root_.string() + ": " + ec.message());
  }

  const std::filesystem::path& root() const noexcept { return root_; }

  PutOutcome put_if_absent(const ObjectKey& key, ByteView data) override {
    auto target = path_of(key);
    auto tmp = write_temp(target, data);
    int rc = ::link(tmp.c_str(), target.c_str());
    int err = errno;
    ::unlink(tmp.c_str());
    if (rc == 0) return PutOutcome::kCreated;
    if (err == EEXIST) return PutOutcome::kAlreadyExists;
    fail(Errc::kTransientIo, "link " + target.string() + ": " + std::strerror(err));
  }

  void put(const ObjectKey& key, ByteView data) override {
    auto target = path_of(key);
    auto tmp = write_temp(target, data);
    if (::rename(tmp.c_str(), target.c_str()) != 0) {
      int err = errno;
      ::unlink(tmp.c_str());
      fail(Errc::kTransientIo, "rename " + target.string() + ": " + std::strerror(err));
    }
  }

  Bytes get(const ObjectKey& key) override {
    Fd fd = open_read(key);
    struct stat st {};
    if (::fstat(fd.fd, &st) != 0) fail(Errc::kTransientIo, "fstat " + key.str());
    return read_at(fd, key, 0, static_cast<std::uint64_t>(st.st_size));
  }

  Bytes get_range(const ObjectKey& key, std::uint64_t offset, std::uint64_t length) override {
    Fd fd = open_read(key);
    struct stat st {};
    if (::fstat(fd.fd, &st) != 0) fail(Errc::kTransientIo, "fstat " + key.str());
    auto size = static_cast<std::uint64_t>(st.st_size);
    if (offset > size || length > size - offset)
      fail(Errc::kRangeOutOfBounds, key.str() + " [" + std::to_string(offset) + ", +" +
                                        std::to_string(length) + ") of " + std::to_string(size));
    return read_at(fd, key, offset, length);
  }

  std::uint64_t size(const ObjectKey& key) override {
    struct stat st {};
    if (::stat(path_of(key).c_str(), &st) != 0) {
      if (errno == ENOENT || errno == ENOTDIR) fail(Errc::kNotFound, key.str());
      fail(Errc::kTransientIo, "stat " + key.str() + ": " + std::strerror(errno));
    }
    return static_cast<std::uint64_t>(st.st_size);
  }

  std::vector<ObjectKey> list(std::string_view prefix) override {
    // Walk only the deepest directory the prefix pins down.
    std::string_view dir_part;
    if (auto slash = prefix.rfind('/'); slash != std::string_view::npos)
      dir_part = prefix.substr(0, slash);
    auto start = dir_part.empty() ? root_ : root_ / std::string(dir_part);
    std::vector<ObjectKey> out;
    std::error_code ec;
    if (!std::filesystem::is_directory(start, ec)) return out;
    for (auto it = std::filesystem::recursive_directory_iterator(start, ec);
         !ec && it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
      if (!it->is_regular_file(ec)) continue;
      auto rel = std::filesystem::relative(it->path(), root_, ec).generic_string();
      if (ec || !rel.starts_with(prefix) || !ObjectKey::is_valid(rel)) continue;
      out.emplace_back(std::move(rel));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void remove(const ObjectKey& key) override {
    if (::unlink(path_of(key).c_str()) != 0 && errno != ENOENT && errno != ENOTDIR)
      fail(Errc::kTransientIo, "unlink " + key.str() + ": " + std::strerror(errno));
  }

 private:
  struct Fd {
    int fd = -1;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() {
      if (fd >= 0) ::close(fd);
    }
  };

  std::filesystem::path path_of(const ObjectKey& key) const { return root_ / key.str(); }

  Fd open_read(const ObjectKey& key) const {
    int fd = ::open(path_of(key).c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) {
      if (errno == ENOENT || errno == ENOTDIR) fail(Errc::kNotFound, key.str());
      fail(Errc::kTransientIo, "open " + key.str() + ": " + std::strerror(errno));
    }
    return Fd(fd);
  }

  static Bytes read_at(const Fd& fd, const ObjectKey& key, std::uint64_t offset,
                       std::uint64_t length) {
    Bytes out(length);
    std::uint64_t done = 0;
    while (done < length) {
      auto n = ::pread(fd.fd, out.data() + done, length - done, static_cast<off_t>(offset + done));
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(Errc::kTransientIo, "read " + key.str() + ": " + std::strerror(errno));
      }
      if (n == 0) fail(Errc::kTransientIo, "short read " + key.str());
      done += static_cast<std::uint64_t>(n);
    }
    return out;
  }

  std::filesystem::path write_temp(const std::filesystem::path& target, ByteView data) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
    if (ec) fail(Errc::kTransientIo, "mkdir " + target.parent_path().string() + ": " + ec.message());
    auto tmp = target.parent_path() /
               ("#tmp." + std::to_string(::getpid()) + "." + std::to_string(counter_++) + "." +
                target.filename().string());
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) fail(Errc::kTransientIo, "create " + tmp.string() + ": " + std::strerror(errno));
    Fd guard(fd);
    std::size_t done = 0;
    while (done < data.size()) {
      auto n = ::write(fd, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        int err = errno;
        ::unlink(tmp.c_str());
        fail(Errc::kTransientIo, "write " + tmp.string() + ": " + std::strerror(err));
      }
      done += static_cast<std::size_t>(n);
    }
    return tmp;
  }

  std::filesystem::path root_;
  std::atomic<std::uint64_t> counter_{std::random_device{}()};
};

}  // namespace tgbplane
