#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "memoria/error.hpp"
#include "memoria/pem.hpp"

using namespace memoria;

TEST(Lambda, ScheduleValues) {
  EXPECT_NEAR(lambda_schedule(0), 0.5, 1e-12);
  EXPECT_NEAR(lambda_schedule(25), 0.7, 1e-12);
  EXPECT_NEAR(lambda_schedule(50), 0.9, 1e-12);
  EXPECT_NEAR(lambda_schedule(500), 0.9, 1e-12);
}

TEST(Lambda, MonotoneAndFlatAfterFifty) {
  for (std::uint64_t m = 0; m < 200; ++m) {
    EXPECT_LE(lambda_schedule(m), lambda_schedule(m + 1)) << m;
    if (m >= 50) EXPECT_EQ(lambda_schedule(m), lambda_schedule(50));
  }
}

TEST(Evolve, FirstStepIsMidpoint) {
  const auto p = evolve(PersonalityProfile{}, TurnPersonality{{5, 3, 3, 3, 3}});
  EXPECT_DOUBLE_EQ(p.traits[0], 4.0);
  for (int i = 1; i < 5; ++i) EXPECT_DOUBLE_EQ(p.traits[i], 3.0);
  EXPECT_EQ(p.turns, 1u);
}

TEST(Evolve, NeutralSkipsButCounts) {
  PersonalityProfile p;
  p.traits = {4.25, 1.5, 3.3, 2.0, 4.9};
  p.turns = 17;
  const auto q = evolve(p, TurnPersonality{});
  EXPECT_EQ(q.traits, p.traits);
  EXPECT_EQ(q.turns, 18u);
  EXPECT_EQ(skip_turn(p).turns, 18u);
  EXPECT_EQ(skip_turn(p).traits, p.traits);
}

TEST(Evolve, RejectsOutOfRange) {
  EXPECT_THROW(evolve(PersonalityProfile{}, TurnPersonality{{0, 3, 3, 3, 3}}), Error);
  EXPECT_THROW(evolve(PersonalityProfile{}, TurnPersonality{{3, 3, 3, 3, 6}}), Error);
  PersonalityProfile bad;
  bad.traits[2] = 5.5;
  EXPECT_THROW(evolve(bad, TurnPersonality{{5, 3, 3, 3, 3}}), Error);
}

TEST(Evolve, MatchesScalarRecurrence) {
  PersonalityProfile p;
  double o = 3.0;
  for (std::uint64_t m = 0; m < 300; ++m) {
    const double l = 0.7 - 0.2 * std::cos(static_cast<double>(std::min<std::uint64_t>(m, 50)) / 50.0 * M_PI);
    o = l * o + (1 - l) * 5.0;
    p = evolve(p, TurnPersonality{{5, 3, 3, 3, 3}});
    ASSERT_NEAR(p.traits[0], o, 1e-12);
  }
  EXPECT_NEAR(p.traits[0], 5.0, 1e-6);
}

// Property: each component lands between the old value and the new score.
TEST(Property, ConvexCombination) {
  std::mt19937 rng(42);
  std::uniform_int_distribution<int> score(1, 5);
  PersonalityProfile p;
  for (int step = 0; step < 2000; ++step) {
    TurnPersonality t;
    for (auto& s : t.scores) s = score(rng);
    const auto q = evolve(p, t);
    for (int i = 0; i < 5; ++i) {
      const double lo = std::min(p.traits[i], double(t.scores[i]));
      const double hi = std::max(p.traits[i], double(t.scores[i]));
      ASSERT_GE(q.traits[i], lo);
      ASSERT_LE(q.traits[i], hi);
      ASSERT_GE(q.traits[i], 1.0);
      ASSERT_LE(q.traits[i], 5.0);
    }
    ASSERT_EQ(q.turns, p.turns + 1);
    p = q;
  }
}

TEST(Property, OrderSensitive) {
  const TurnPersonality a{{5, 1, 3, 3, 3}}, b{{1, 5, 3, 3, 3}};
  const auto ab = evolve(evolve(PersonalityProfile{}, a), b);
  const auto ba = evolve(evolve(PersonalityProfile{}, b), a);
  EXPECT_NE(ab.traits, ba.traits);
}

TEST(Render, BucketsAndFormat) {
  EXPECT_EQ(trait_bucket(2.49), "low");
  EXPECT_EQ(trait_bucket(2.5), "moderate");
  EXPECT_EQ(trait_bucket(3.5), "moderate");
  EXPECT_EQ(trait_bucket(3.51), "high");
  EXPECT_EQ(render_trait(4.2), "4.20 (high)");
  EXPECT_EQ(render_trait(1.0), "1.00 (low)");
  PersonalityProfile p;
  EXPECT_EQ(render_profile(p),
            "openness: 3.00 (moderate)\nconscientiousness: 3.00 (moderate)\nextraversion: 3.00 (moderate)\n"
            "agreeableness: 3.00 (moderate)\nneuroticism: 3.00 (moderate)");
  p.traits[0] = 4.2;
  p.traits[4] = 1.0;
  const auto text = render_profile(p);
  EXPECT_NE(text.find("openness: 4.20 (high)"), std::string::npos);
  EXPECT_NE(text.find("neuroticism: 1.00 (low)"), std::string::npos);
}
