#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace memoria {

// Big Five trait order used everywhere: O, C, E, A, N.
inline constexpr std::array<std::string_view, 5> kTraitNames = {
    "openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism"};

struct PersonalityProfile {
  std::array<double, 5> traits{3.0, 3.0, 3.0, 3.0, 3.0};
  std::uint64_t turns = 0;  // global completed-turn counter, never reset
  bool operator==(const PersonalityProfile&) const = default;
};

// Per-turn integer inference, each component in 1..5.
struct TurnPersonality {
  std::array<int, 5> scores{3, 3, 3, 3, 3};
  bool is_neutral() const;
  bool operator==(const TurnPersonality&) const = default;
};

// Weight on the previous profile at turn m: 0.7 - 0.2 cos(min(m, 50) / 50 * pi).
double lambda_schedule(std::uint64_t m);

// One EMA step. An all-neutral inference leaves the traits untouched; the turn
// counter advances either way. Throws reject_invalid on out-of-range input.
PersonalityProfile evolve(const PersonalityProfile& profile, const TurnPersonality& turn);

// Advances the counter without touching traits (used when inference fails).
PersonalityProfile skip_turn(const PersonalityProfile& profile);

std::string_view trait_bucket(double score);
// "4.20 (high)"
std::string render_trait(double score);
// One "name: score (bucket)" line per trait, newline separated.
std::string render_profile(const PersonalityProfile& profile);

}  // namespace memoria
