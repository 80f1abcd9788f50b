#include <gtest/gtest.h>

#include "moescore/mfv.hpp"
#include "oracles.hpp"
#include "property_suites.hpp"

using namespace moescore;

TEST(Mfv, RankOneFileSize) {
  oracle::TempDir dir("mfv");
  write_mfv(dir.path() / "v.mfv", Tensor::vector({1.0, 2.0}));
  EXPECT_EQ(std::filesystem::file_size(dir.path() / "v.mfv"), 17u);
  EXPECT_EQ(mfv_encoded_size({2}), 17u);
}

TEST(Mfv, ExactByteLayout) {
  const auto bytes = encode_mfv(Tensor::vector({1.0, 2.0}));
  EXPECT_EQ(bytes, suites::assemble_mfv({2}, {1.0f, 2.0f}));
  // 1.0f is 0x3F800000 little-endian.
  EXPECT_EQ(bytes[9], 0x00);
  EXPECT_EQ(bytes[12], 0x3F);
  EXPECT_EQ(bytes[11], 0x80);
}

TEST(Mfv, MatrixRoundTripAfterFloatRounding) {
  oracle::TempDir dir("mfv");
  std::mt19937_64 gen(5);
  const Tensor x = oracle::random_tensor({3, 4}, gen);
  write_mfv(dir.path() / "m.mfv", x);
  const Tensor y = read_mfv(dir.path() / "m.mfv");
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], static_cast<double>(static_cast<float>(x[i])));
}

TEST(Mfv, BadMagicAtOffsetZero) {
  auto bytes = encode_mfv(Tensor::vector({1.0}));
  bytes[3] = '2';
  try {
    decode_mfv(bytes);
    FAIL();
  } catch (const MfvFormatError& e) {
    EXPECT_EQ(e.kind(), MfvErrorKind::kBadMagic);
    EXPECT_EQ(e.offset(), 0u);
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST(Mfv, RankFourCannotBeWritten) { EXPECT_THROW(encode_mfv(Tensor({1, 1, 1, 1})), DimensionError); }

TEST(Mfv, MissingFileIsIoError) { EXPECT_THROW(read_mfv("/nonexistent/x.mfv"), IoError); }

TEST(Mfv, RandomRoundTripsAndMalformedCases) {
  oracle::TempDir dir("mfv");
  const auto s = suites::mfv_round_trips(dir.path(), 200);
  EXPECT_EQ(s.byte_mismatches, 0u);
  EXPECT_EQ(s.value_mismatches, 0u);
  EXPECT_GE(s.malformed_cases, 10u);
  EXPECT_EQ(s.malformed_misclassified, 0u);
  for (const auto& f : s.failures) ADD_FAILURE() << f;
}
