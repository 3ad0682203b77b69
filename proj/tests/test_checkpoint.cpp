#include <gtest/gtest.h>

#include <filesystem>

#include "logitds/checkpoint.hpp"

using namespace logitds;

namespace {

Checkpoint sample_checkpoint() { return {init_params(Architecture::lenet5(10), 21), R"({"preset":"mnist-lenet"})"}; }

}  // namespace

TEST(Fnv1a64, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint ck = sample_checkpoint();
  const auto path = std::filesystem::temp_directory_path() / "logitds_ck_roundtrip.bin";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back, ck);
  EXPECT_EQ(back.params.arch.parameter_count(), ck.params.arch.parameter_count());
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  std::filesystem::remove(path);
}

TEST(Checkpoint, DetectsCorruption) {
  const std::string good = encode_checkpoint(sample_checkpoint());

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), DataError);

  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() / 2)), DataError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, 5)), DataError);

  std::string bad_meta = good;
  bad_meta[bad_meta.size() - 2] ^= 0x20;
  EXPECT_THROW(decode_checkpoint(bad_meta), DataError);

  // First layer's "out" field: changes the architecture so the parameter count no longer fits.
  std::string bad_arch = good;
  bad_arch[8 + 8 + 8 + 12 + 4 + 8] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(bad_arch), DataError);

  EXPECT_THROW(load_checkpoint("/nonexistent/logitds.bin"), DataError);
}
