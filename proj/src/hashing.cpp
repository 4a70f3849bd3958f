#include "gcegnn/hashing.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace gcegnn {

void Fnv1a::update(std::span<const unsigned char> bytes) {
  for (unsigned char b : bytes) {
    state_ ^= b;
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update(std::string_view text) {
  update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string Fnv1a::hex() const { return hex64(state_); }

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string hash_text(std::string_view text) {
  Fnv1a h;
  h.update(text);
  return h.hex();
}

std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Fnv1a h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto n = static_cast<std::size_t>(in.gcount());
    h.update(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(buf.data()), n));
  }
  return h.hex();
}

}  // namespace gcegnn
