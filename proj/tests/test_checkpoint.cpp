#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gcegnn/checkpoint.hpp"
#include "gcegnn/hashing.hpp"

namespace fs = std::filesystem;
using namespace gcegnn;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "gcegnn_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

model::Model sample_model() {
  model::ModelConfig c;
  c.dim = 5;
  c.hops = 2;
  c.aggregation = model::Aggregation::gate;
  c.max_length = 4;
  return model::Model(c, 7, 3);
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const auto path = temp_file("round.ckpt");
  const auto m = sample_model();
  checkpoint::save(path, m);
  const auto back = checkpoint::load(path);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.item_count(), 7u);
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(back.parameters()[i].name, m.parameters()[i].name);
    EXPECT_EQ(back.parameters()[i].value, m.parameters()[i].value);
  }
}

TEST(Checkpoint, SavingTwiceIsByteIdentical) {
  const auto a = temp_file("a.ckpt"), b = temp_file("b.ckpt");
  checkpoint::save(a, sample_model());
  checkpoint::save(b, sample_model());
  EXPECT_EQ(hash_file(a), hash_file(b));
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto path = temp_file("corrupt.ckpt");
  checkpoint::save(path, sample_model());
  auto bytes = read_all(path);
  bytes[bytes.size() / 2] ^= 0x01;
  write_all(path, bytes);
  EXPECT_THROW(checkpoint::load(path), checkpoint::CheckpointError);
}

TEST(Checkpoint, TruncationIsDetected) {
  const auto path = temp_file("short.ckpt");
  checkpoint::save(path, sample_model());
  auto bytes = read_all(path);
  write_all(path, bytes.substr(0, bytes.size() - 20));
  EXPECT_THROW(checkpoint::load(path), checkpoint::CheckpointError);
}

TEST(Checkpoint, WrongMagicIsDetected) {
  const auto path = temp_file("magic.ckpt");
  write_all(path, "not a checkpoint at all, definitely not");
  EXPECT_THROW(checkpoint::load(path), checkpoint::CheckpointError);
  EXPECT_THROW(checkpoint::load(temp_file("missing.ckpt")), checkpoint::CheckpointError);
}
