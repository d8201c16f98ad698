#include <gtest/gtest.h>

#include "memoria/error.hpp"
#include "memoria/hashing.hpp"
#include "memoria/timestamp.hpp"

using namespace memoria;

TEST(Timestamp, ParsesCanonicalForm) {
  const auto t = Timestamp::parse("2025-03-01 12:10");
  EXPECT_EQ(t.str(), "2025-03-01 12:10");
  EXPECT_EQ(t, Timestamp::from_civil(2025, 3, 1, 12, 10));
  EXPECT_EQ(Timestamp::parse("1970-01-01 00:00").minutes(), 0);
  EXPECT_EQ(Timestamp::parse("1970-01-02 00:01").minutes(), 1441);
}

TEST(Timestamp, RejectsNonCanonicalText) {
  for (const char* bad : {"2025-3-01 12:10", "2025-03-01T12:10", "2025-02-30 10:00", "2025-03-01 24:00",
                          "2025-03-01 12:60", "2025-03-01 12:10:00", "", "null", " 2025-03-01 12:10"}) {
    EXPECT_FALSE(Timestamp::try_parse(bad)) << bad;
    EXPECT_THROW(Timestamp::parse(bad), Error) << bad;
  }
  EXPECT_TRUE(Timestamp::try_parse("2024-02-29 23:59"));
}

TEST(Timestamp, ArithmeticAndOrdering) {
  const auto a = Timestamp::parse("2025-12-31 23:30");
  const auto b = a.plus_minutes(45);
  EXPECT_EQ(b.str(), "2026-01-01 00:15");
  EXPECT_EQ(b.minutes_since(a), 45);
  EXPECT_LT(a, b);
}

TEST(Duration, Units) {
  EXPECT_EQ(parse_duration_minutes("90m"), 90);
  EXPECT_EQ(parse_duration_minutes("2h"), 120);
  EXPECT_EQ(parse_duration_minutes("1d"), 1440);
  EXPECT_EQ(parse_duration_minutes("15"), 15);
  EXPECT_THROW(parse_duration_minutes("h"), Error);
  EXPECT_THROW(parse_duration_minutes("3w"), Error);
  EXPECT_THROW(parse_duration_minutes(""), Error);
}

TEST(Hashing, Fnv1aReferenceValues) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Hashing, Base64) {
  EXPECT_EQ(base64_encode(""), "");
  EXPECT_EQ(base64_encode("f"), "Zg==");
  EXPECT_EQ(base64_encode("fo"), "Zm8=");
  EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

TEST(Error, CarriesCodeAndLocation) {
  try {
    fail(ErrorCode::corrupt_state, "checksum mismatch", "semantic.log");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::corrupt_state);
    EXPECT_EQ(e.location(), "semantic.log");
    EXPECT_NE(std::string(e.what()).find("semantic.log"), std::string::npos);
  }
}
