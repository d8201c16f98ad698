#include "memoria/pem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "memoria/error.hpp"

namespace memoria {

bool TurnPersonality::is_neutral() const {
  return std::all_of(scores.begin(), scores.end(), [](int s) { return s == 3; });
}

double lambda_schedule(std::uint64_t m) {
  constexpr std::uint64_t kRampTurns = 50;
  const double progress = static_cast<double>(std::min(m, kRampTurns)) / kRampTurns;
  return 0.7 - 0.2 * std::cos(progress * std::numbers::pi);
}

PersonalityProfile evolve(const PersonalityProfile& profile, const TurnPersonality& turn) {
  for (int s : turn.scores) {
    if (s < 1 || s > 5) fail(ErrorCode::reject_invalid, "personality score outside 1..5");
  }
  for (double p : profile.traits) {
    if (!(p >= 1.0 && p <= 5.0)) fail(ErrorCode::reject_invalid, "profile trait outside [1, 5]");
  }
  PersonalityProfile next = profile;
  next.turns = profile.turns + 1;
  if (turn.is_neutral()) return next;

  const double lambda = lambda_schedule(profile.turns);
  for (std::size_t i = 0; i < next.traits.size(); ++i) {
    const double blended = lambda * profile.traits[i] + (1.0 - lambda) * turn.scores[i];
    // Rounding can step a hair outside the convex hull of the two inputs.
    const double lo = std::min<double>(profile.traits[i], turn.scores[i]);
    const double hi = std::max<double>(profile.traits[i], turn.scores[i]);
    next.traits[i] = std::clamp(blended, lo, hi);
  }
  return next;
}

PersonalityProfile skip_turn(const PersonalityProfile& profile) {
  PersonalityProfile next = profile;
  ++next.turns;
  return next;
}

std::string_view trait_bucket(double score) {
  if (score < 2.5) return "low";
  if (score <= 3.5) return "moderate";
  return "high";
}

std::string render_trait(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", score);
  return std::string(buf) + " (" + std::string(trait_bucket(score)) + ")";
}

std::string render_profile(const PersonalityProfile& profile) {
  std::string out;
  for (std::size_t i = 0; i < kTraitNames.size(); ++i) {
    if (i) out += '\n';
    out += kTraitNames[i];
    out += ": ";
    out += render_trait(profile.traits[i]);
  }
  return out;
}

}  // namespace memoria
