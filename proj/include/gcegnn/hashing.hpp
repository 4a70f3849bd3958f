#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace gcegnn {

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(std::span<const unsigned char> bytes);
  void update(std::string_view text);
  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t value);
std::string hash_text(std::string_view text);
// Throws std::runtime_error when the file cannot be read.
std::string hash_file(const std::filesystem::path& path);

}  // namespace gcegnn
