#pragma once

// Feedback vocabulary shared by human and scripted teachers, and its
// translation into rated samples and learner/exploration/speed actions.

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "metateach/errors.hpp"
#include "metateach/pibb2.hpp"
#include "metateach/promp.hpp"

namespace metateach {

enum class Choice { First, Second, Both, None };
enum class Target { First, Second };

inline constexpr int kNumLevels = 5;
inline constexpr int kNeutralLevel = 3;
inline constexpr std::array<double, kNumLevels> kExplorationMultipliers{0.25, 0.5, 1.0, 2.0, 4.0};
inline constexpr std::array<double, kNumLevels> kSpeedFactors{0.5, 0.75, 1.0, 1.5, 2.0};

// Slider position 1..5.
class Level {
 public:
  constexpr Level() = default;
  explicit Level(int value) : value_(value) {
    if (value < 1 || value > kNumLevels) {
      throw ValidationError("level " + std::to_string(value) + " outside 1.." +
                            std::to_string(kNumLevels));
    }
  }
  constexpr int value() const { return value_; }
  constexpr std::size_t index() const { return static_cast<std::size_t>(value_ - 1); }
  bool operator==(const Level&) const = default;

 private:
  int value_ = kNeutralLevel;
};

namespace event {
struct Preference { Choice choice; };
struct GuidanceMark { Target target; };
struct CorrectionMark { Target target; };
struct Demonstration { Trajectory trajectory; };
struct ExplorationLevel { Level level; };
struct SpeedLevel { Level level; };
struct FallbackSave { Target target; };
struct FallbackLoad {};
}  // namespace event

using FeedbackEvent =
    std::variant<event::Preference, event::GuidanceMark, event::CorrectionMark, event::Demonstration,
                 event::ExplorationLevel, event::SpeedLevel, event::FallbackSave, event::FallbackLoad>;

inline bool is_meta(const FeedbackEvent& e) { return !std::holds_alternative<event::Preference>(e); }

// Modality name for a meta event; "preference" for the base modality.
inline std::string_view modality_name(const FeedbackEvent& e) {
  return std::visit(
      [](const auto& ev) -> std::string_view {
        using T = std::decay_t<decltype(ev)>;
        if constexpr (std::is_same_v<T, event::Preference>) return "preference";
        else if constexpr (std::is_same_v<T, event::GuidanceMark>) return "guidance";
        else if constexpr (std::is_same_v<T, event::CorrectionMark>) return "correction";
        else if constexpr (std::is_same_v<T, event::Demonstration>) return "demonstration";
        else if constexpr (std::is_same_v<T, event::ExplorationLevel>) return "exploration";
        else if constexpr (std::is_same_v<T, event::SpeedLevel>) return "speed";
        else if constexpr (std::is_same_v<T, event::FallbackSave>) return "fallback_save";
        else return "fallback_load";
      },
      e);
}

inline constexpr std::array<std::string_view, 7> kMetaModalities{
    "guidance", "correction", "demonstration", "exploration", "speed", "fallback_save", "fallback_load"};

// Everything a teacher says about one presented pair.
struct TrialFeedback {
  Choice preference = Choice::None;
  std::optional<Target> guidance_target;
  std::optional<Target> correction_target;
  std::optional<Target> fallback_save_target;
  Level exploration_level;
  Level speed_level;
  std::optional<Trajectory> demonstration;
  bool fallback_load = false;

  void validate() const {
    if (guidance_target && correction_target && *guidance_target == *correction_target) {
      throw ValidationError("guidance and correction cannot target the same movement");
    }
    if (fallback_save_target && correction_target && *fallback_save_target == *correction_target) {
      throw ValidationError("a fallback (guidance) and a correction cannot target the same movement");
    }
    if (demonstration && fallback_load) {
      throw ValidationError("demonstration and fallback load are mutually exclusive in one trial");
    }
  }

  // True when anything beyond the preference differs from the given levels.
  bool uses_meta(Level current_exploration, Level current_speed) const {
    return guidance_target || correction_target || fallback_save_target || demonstration ||
           fallback_load || exploration_level != current_exploration || speed_level != current_speed;
  }
};

// Event list for one trial. Level events are emitted only when the level
// changes relative to the current session levels.
inline std::vector<FeedbackEvent> to_events(const TrialFeedback& fb, Level current_exploration,
                                            Level current_speed) {
  std::vector<FeedbackEvent> events{event::Preference{fb.preference}};
  if (fb.guidance_target) events.emplace_back(event::GuidanceMark{*fb.guidance_target});
  if (fb.correction_target) events.emplace_back(event::CorrectionMark{*fb.correction_target});
  if (fb.fallback_save_target) events.emplace_back(event::FallbackSave{*fb.fallback_save_target});
  if (fb.exploration_level != current_exploration) {
    events.emplace_back(event::ExplorationLevel{fb.exploration_level});
  }
  if (fb.speed_level != current_speed) events.emplace_back(event::SpeedLevel{fb.speed_level});
  if (fb.demonstration) events.emplace_back(event::Demonstration{*fb.demonstration});
  if (fb.fallback_load) events.emplace_back(event::FallbackLoad{});
  return events;
}

inline TrialFeedback from_events(const std::vector<FeedbackEvent>& events, Level current_exploration,
                                 Level current_speed) {
  TrialFeedback fb;
  fb.exploration_level = current_exploration;
  fb.speed_level = current_speed;
  bool have_preference = false;
  auto once = [](bool& seen, const char* what) {
    if (seen) throw ValidationError(std::string("duplicate ") + what + " event in one trial");
    seen = true;
  };
  bool g = false, c = false, d = false, x = false, s = false, fs = false, fl = false;
  for (const auto& e : events) {
    std::visit(
        [&](const auto& ev) {
          using T = std::decay_t<decltype(ev)>;
          if constexpr (std::is_same_v<T, event::Preference>) {
            once(have_preference, "preference");
            fb.preference = ev.choice;
          } else if constexpr (std::is_same_v<T, event::GuidanceMark>) {
            once(g, "guidance");
            fb.guidance_target = ev.target;
          } else if constexpr (std::is_same_v<T, event::CorrectionMark>) {
            once(c, "correction");
            fb.correction_target = ev.target;
          } else if constexpr (std::is_same_v<T, event::Demonstration>) {
            once(d, "demonstration");
            fb.demonstration = ev.trajectory;
          } else if constexpr (std::is_same_v<T, event::ExplorationLevel>) {
            once(x, "exploration");
            fb.exploration_level = ev.level;
          } else if constexpr (std::is_same_v<T, event::SpeedLevel>) {
            once(s, "speed");
            fb.speed_level = ev.level;
          } else if constexpr (std::is_same_v<T, event::FallbackSave>) {
            once(fs, "fallback_save");
            fb.fallback_save_target = ev.target;
          } else {
            once(fl, "fallback_load");
            fb.fallback_load = true;
          }
        },
        e);
  }
  if (!have_preference) throw ValidationError("every trial needs exactly one preference event");
  fb.validate();
  return fb;
}

inline std::pair<double, double> preference_rewards(Choice choice, double reward = 100.0) {
  switch (choice) {
    case Choice::First: return {reward, -reward};
    case Choice::Second: return {-reward, reward};
    case Choice::Both: return {reward, reward};
    case Choice::None: break;
  }
  return {-reward, -reward};
}

// Two rated samples for one trial. Guidance (and a saved fallback) lifts a
// movement's reward to +reward_meta; a correction sinks it to -reward_meta.
inline std::array<Sample, 2> build_samples(const TrialFeedback& trial, const WeightVector& first,
                                           const WeightVector& second, int trial_index,
                                           const LearnerConstants& constants = {}) {
  trial.validate();
  const auto [reward_a, reward_b] = preference_rewards(trial.preference, constants.reward_pref);
  std::array<Sample, 2> out{Sample{first, reward_a, reward_a, false, false, trial_index},
                            Sample{second, reward_b, reward_b, false, false, trial_index}};
  auto mark_guidance = [&](Target t) {
    Sample& s = out[t == Target::First ? 0 : 1];
    s.is_guidance = true;
    s.reward = s.original_reward = constants.reward_meta;
  };
  if (trial.guidance_target) mark_guidance(*trial.guidance_target);
  if (trial.fallback_save_target) mark_guidance(*trial.fallback_save_target);
  if (trial.correction_target) {
    Sample& s = out[*trial.correction_target == Target::First ? 0 : 1];
    s.is_correction = true;
    s.reward = s.original_reward = -constants.reward_meta;
  }
  return out;
}

// Sampling spread for the next pair. The clamp against the previous
// effective spread keeps exploration non-increasing whatever the slider says.
inline Eigen::VectorXd effective_sigma(const Eigen::VectorXd& dist_sigma, Level exploration_level,
                                       const std::optional<Eigen::VectorXd>& previous_effective) {
  Eigen::VectorXd candidate = dist_sigma * kExplorationMultipliers[exploration_level.index()];
  if (!previous_effective) return candidate;
  if (previous_effective->size() != candidate.size()) {
    throw DimensionError("previous effective sigma has the wrong length");
  }
  return candidate.cwiseMin(*previous_effective);
}

inline double speed_factor(Level level) { return kSpeedFactors[level.index()]; }

struct FallbackSlot {
  std::optional<WeightVector> weights;

  bool occupied() const { return weights.has_value(); }
  friend bool operator==(const FallbackSlot& a, const FallbackSlot& b) {
    if (a.occupied() != b.occupied()) return false;
    return !a.occupied() || exactly_equal(*a.weights, *b.weights);
  }
};

// The single slot is overwritten on every save. The guidance flag on the
// saved sample itself comes from build_samples.
inline FallbackSlot fallback_save(const Sample& sample) { return FallbackSlot{sample.weights}; }

inline LearnerState fallback_load(const LearnerState& state, const FallbackSlot& slot) {
  if (!slot.occupied()) throw NoFallbackError("no fallback movement has been saved");
  return apply_demonstration(state, *slot.weights);
}

}  // namespace metateach
