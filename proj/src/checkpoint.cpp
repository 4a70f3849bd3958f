#include "gcegnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "gcegnn/config.hpp"
#include "gcegnn/hashing.hpp"

namespace gcegnn::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'C', 'E', 'G', 'N', 'N', 'C', 'K'};

template <typename T>
void put(std::vector<unsigned char>& out, const T& value) {
  const auto* p = reinterpret_cast<const unsigned char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<unsigned char>& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw CheckpointError("checkpoint is truncated");
  T value;
  std::memcpy(&value, in.data() + at, sizeof(T));
  at += sizeof(T);
  return value;
}

}  // namespace

void save(const std::filesystem::path& path, const model::Model& model) {
  nlohmann::ordered_json header;
  header["version"] = kFormatVersion;
  header["item_count"] = model.item_count();
  header["model_config"] = config::model_config_to_json(model.config());
  auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", params[i].name}, {"rows", params[i].value.rows()}, {"cols", params[i].value.cols()}});
  }
  const std::string text = header.dump();

  std::vector<unsigned char> bytes(std::begin(kMagic), std::end(kMagic));
  put(bytes, kFormatVersion);
  put(bytes, static_cast<std::uint64_t>(text.size()));
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (std::size_t i = 0; i < params.size(); ++i)
    for (double v : params[i].value.values()) put(bytes, v);
  Fnv1a h;
  h.update(bytes);
  put(bytes, h.digest());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

model::Model load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  Fnv1a h;
  h.update(std::span<const unsigned char>(bytes.data(), body));
  if (h.digest() != stored) throw CheckpointError("checkpoint checksum mismatch in " + path.string());

  std::size_t at = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, at);
  if (version != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes, at);
  if (at + header_len > body) throw CheckpointError("checkpoint header is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(at + header_len));
    at += header_len;
    if (header.at("version").get<std::uint32_t>() != version) throw CheckpointError("checkpoint version mismatch");
    const auto item_count = header.at("item_count").get<std::size_t>();
    const auto cfg = config::model_config_from_json(header.at("model_config"));
    ad::ParameterStore params;
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("rows").get<std::size_t>(), cols = t.at("cols").get<std::size_t>();
      if (at + rows * cols * sizeof(double) > body) throw CheckpointError("checkpoint tensor data is truncated");
      Matrix m(rows, cols);
      std::memcpy(m.values().data(), bytes.data() + at, rows * cols * sizeof(double));
      at += rows * cols * sizeof(double);
      params.add(t.at("name").get<std::string>(), std::move(m));
    }
    if (at != body) throw CheckpointError("checkpoint has trailing data");
    return model::Model(cfg, item_count, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
}

}  // namespace gcegnn::checkpoint
