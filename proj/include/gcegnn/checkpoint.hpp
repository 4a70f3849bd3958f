#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "gcegnn/model.hpp"

namespace gcegnn::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: 8-byte magic, u32 version, u64 header length, JSON header (model
// config, item count, tensor table), raw little-endian doubles per tensor,
// then the FNV-1a 64 checksum of every preceding byte.
void save(const std::filesystem::path& path, const model::Model& model);
model::Model load(const std::filesystem::path& path);

}  // namespace gcegnn::checkpoint
