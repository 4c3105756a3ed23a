#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "tgbplane/error.hpp"

namespace tgbtest {

// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "tgbplane-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline tgbplane::Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  tgbplane::Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

// Slice payload whose bytes identify (tag, slice): first 8 bytes tag, next 4 slice.
inline tgbplane::Bytes tagged_slice(std::uint64_t tag, std::uint32_t slice, std::size_t n) {
  tgbplane::Bytes b(std::max<std::size_t>(n, 12), 0);
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(tag >> (8 * i));
  for (int i = 0; i < 4; ++i) b[8 + i] = static_cast<std::uint8_t>(slice >> (8 * i));
  for (std::size_t i = 12; i < b.size(); ++i) b[i] = static_cast<std::uint8_t>(tag * 31 + slice * 7 + i);
  return b;
}

inline std::vector<tgbplane::Bytes> tagged_tgb(std::uint64_t tag, std::uint32_t slices, std::size_t n) {
  std::vector<tgbplane::Bytes> out;
  for (std::uint32_t s = 0; s < slices; ++s) out.push_back(tagged_slice(tag, s, n));
  return out;
}

}  // namespace tgbtest
