#include <random>

#include <gtest/gtest.h>

#include "metateach/feedback.hpp"
#include "metateach/json_io.hpp"

using namespace metateach;

namespace {

WeightVector filled(double v) { return WeightVector::Constant(16, v); }

LearnerState learner() { return LearnerState::fresh(WeightVector::Zero(16), 0.08); }

}  // namespace

TEST(Feedback, PreferenceRewards) {
  EXPECT_EQ(preference_rewards(Choice::First), std::make_pair(100.0, -100.0));
  EXPECT_EQ(preference_rewards(Choice::Second), std::make_pair(-100.0, 100.0));
  EXPECT_EQ(preference_rewards(Choice::Both), std::make_pair(100.0, 100.0));
  EXPECT_EQ(preference_rewards(Choice::None), std::make_pair(-100.0, -100.0));
}

TEST(Feedback, MarksOverrideRewards) {
  TrialFeedback fb;
  fb.preference = Choice::Second;
  fb.guidance_target = Target::Second;
  fb.correction_target = Target::First;
  const auto s = build_samples(fb, filled(1), filled(2), 7);
  EXPECT_EQ(s[0].reward, -150.0);
  EXPECT_TRUE(s[0].is_correction);
  EXPECT_EQ(s[1].reward, 150.0);
  EXPECT_TRUE(s[1].is_guidance);
  EXPECT_EQ(s[1].trial_index, 7);
  EXPECT_TRUE(exactly_equal(s[1].weights, filled(2)));
}

TEST(Feedback, FallbackSaveCountsAsGuidance) {
  TrialFeedback fb;
  fb.preference = Choice::First;
  fb.fallback_save_target = Target::First;
  const auto s = build_samples(fb, filled(1), filled(2), 0);
  EXPECT_TRUE(s[0].is_guidance);
  EXPECT_EQ(s[0].reward, 150.0);
  EXPECT_EQ(fallback_save(s[0]).weights.value(), filled(1));
}

TEST(Feedback, ConflictingMarksRejected) {
  TrialFeedback fb;
  fb.guidance_target = Target::First;
  fb.correction_target = Target::First;
  EXPECT_THROW(fb.validate(), ValidationError);
  fb.guidance_target.reset();
  fb.fallback_save_target = Target::First;
  EXPECT_THROW(fb.validate(), ValidationError);
  fb = {};
  fb.demonstration = Trajectory{};
  fb.fallback_load = true;
  EXPECT_THROW(fb.validate(), ValidationError);
}

TEST(Feedback, LevelRange) {
  EXPECT_THROW(Level(0), ValidationError);
  EXPECT_THROW(Level(6), ValidationError);
  EXPECT_EQ(Level().value(), 3);
  EXPECT_EQ(Level(5).index(), 4u);
}

TEST(Feedback, EventsRoundTrip) {
  TrialFeedback fb;
  fb.preference = Choice::Both;
  fb.guidance_target = Target::Second;
  fb.correction_target = Target::First;
  fb.exploration_level = Level(2);
  fb.speed_level = Level(4);
  fb.fallback_load = true;
  const auto events = to_events(fb, Level(3), Level(4));
  // speed is unchanged, so no speed event
  EXPECT_EQ(events.size(), 5u);
  const auto json = events_to_json(events);
  const TrialFeedback back = from_events(events_from_json(json), Level(3), Level(4));
  EXPECT_EQ(back.preference, Choice::Both);
  EXPECT_EQ(back.guidance_target, Target::Second);
  EXPECT_EQ(back.correction_target, Target::First);
  EXPECT_EQ(back.exploration_level, Level(2));
  EXPECT_EQ(back.speed_level, Level(4));
  EXPECT_TRUE(back.fallback_load);
  EXPECT_EQ(events_to_json(to_events(back, Level(3), Level(4))), json);
}

TEST(Feedback, EventListNeedsOnePreference) {
  EXPECT_THROW(from_events({event::GuidanceMark{Target::First}}, Level(), Level()), ValidationError);
  EXPECT_THROW(from_events({event::Preference{Choice::First}, event::Preference{Choice::None}}, Level(), Level()),
               ValidationError);
  EXPECT_THROW(feedback_event_from_json(Json{{"kind", "telepathy"}}), ValidationError);
  EXPECT_THROW(feedback_event_from_json(Json{{"kind", "speed"}, {"level", 9}}), ValidationError);
}

TEST(Feedback, UsesMetaSeesLevelChanges) {
  TrialFeedback fb;
  EXPECT_FALSE(fb.uses_meta(Level(), Level()));
  fb.speed_level = Level(4);
  EXPECT_TRUE(fb.uses_meta(Level(), Level()));
  EXPECT_FALSE(fb.uses_meta(Level(), Level(4)));
}

TEST(Feedback, ExplorationMultipliers) {
  const Eigen::VectorXd sigma = Eigen::VectorXd::Constant(4, 0.08);
  const double expected[] = {0.02, 0.04, 0.08, 0.16, 0.32};
  for (int level = 1; level <= 5; ++level) {
    EXPECT_DOUBLE_EQ(effective_sigma(sigma, Level(level), std::nullopt)[0], expected[level - 1]);
  }
  // Raising the slider never widens the spread beyond the previous trial.
  const Eigen::VectorXd prev = Eigen::VectorXd::Constant(4, 0.05);
  EXPECT_DOUBLE_EQ(effective_sigma(sigma, Level(5), prev)[0], 0.05);
  EXPECT_THROW(effective_sigma(sigma, Level(3), Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST(Feedback, EffectiveSigmaNonIncreasingForAnyLevelSequence) {
  std::mt19937_64 rng(77);
  for (int run = 0; run < 200; ++run) {
    LearnerConstants c;
    std::optional<Eigen::VectorXd> prev;
    for (int t = 0; t < 40; ++t) {
      const Eigen::VectorXd sigma = sigma_schedule(c, 0.08, 16, t);
      const Level level(1 + static_cast<int>(rng() % 5));
      const Eigen::VectorXd eff = effective_sigma(sigma, level, prev);
      if (prev) EXPECT_TRUE((eff.array() <= prev->array()).all());
      prev = eff;
    }
  }
}

TEST(Feedback, SpeedFactors) {
  const double expected[] = {0.5, 0.75, 1.0, 1.5, 2.0};
  for (int level = 1; level <= 5; ++level) EXPECT_EQ(speed_factor(Level(level)), expected[level - 1]);
}

TEST(Feedback, FallbackLoadEqualsDemonstration) {
  LearnerState s = learner();
  TrialFeedback fb;
  fb.preference = Choice::First;
  s = update(s, build_samples(fb, filled(0.3), filled(-0.1), 0));
  FallbackSlot slot;
  EXPECT_THROW(fallback_load(s, slot), NoFallbackError);
  slot.weights = filled(0.7);
  EXPECT_EQ(fallback_load(s, slot), apply_demonstration(s, filled(0.7)));
}

TEST(Feedback, CorrectionSuppressesMovement) {
  // Same pair, same preference; marking the loser as a correction shrinks
  // its weight and leaves the other rewards alone.
  TrialFeedback plain;
  plain.preference = Choice::First;
  TrialFeedback corrected = plain;
  corrected.correction_target = Target::Second;
  LearnerState base = learner();
  base = update(base, build_samples(plain, filled(0.2), filled(0.1), 0));
  const LearnerState a = update(base, build_samples(plain, filled(0.5), filled(-1.0), 1));
  const LearnerState b = update(base, build_samples(corrected, filled(0.5), filled(-1.0), 1));
  const auto wa = pibb2_weights(normalize_rewards(a.history, a.constants));
  const auto wb = pibb2_weights(normalize_rewards(b.history, b.constants));
  EXPECT_LT(wb[3], wa[3]);
  EXPECT_EQ(b.history[3].reward, -150.0);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(b.history[i].reward, a.history[i].reward);
}
