#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "metateach/session.hpp"

using namespace metateach;

namespace {

Session make(Mode mode = Mode::FullModality, Seed seed = 7) { return Session("s", mode, seed, SessionConfig{}); }

TrialFeedback prefer(Choice c) {
  TrialFeedback fb;
  fb.preference = c;
  return fb;
}

std::string dump(const SessionLog& log) {
  std::ostringstream out;
  write_log(out, log);
  return out.str();
}

}  // namespace

TEST(Session, StartsFresh) {
  Session s = make(Mode::PreferenceOnly);
  const SessionState& st = s.state();
  EXPECT_EQ(st.trial_index, 0);
  EXPECT_EQ(st.phase, Phase::ReadyToSample);
  EXPECT_TRUE(st.learner.history.empty());
  EXPECT_TRUE(st.learner.dist.mean.isZero(0.0));
  EXPECT_EQ(st.learner.dist.sigma[0], 0.08);
  EXPECT_EQ(s.records().size(), 1u);
  EXPECT_EQ(s.records()[0].kind, "session_start");
}

TEST(Session, Capabilities) {
  const auto full = capabilities(Mode::FullModality);
  for (const char* m : {"preference", "guidance", "correction", "demonstration", "exploration", "speed", "fallback"}) {
    EXPECT_NE(std::find(full.begin(), full.end(), m), full.end()) << m;
  }
  EXPECT_EQ(capabilities(Mode::PreferenceOnly), std::vector<std::string>{"preference"});
}

TEST(Session, SameSeedSamePair) {
  Session a = make(Mode::FullModality, 3), b = make(Mode::FullModality, 3), c = make(Mode::FullModality, 4);
  const PresentedPair pa = a.present_pair(), pb = b.present_pair(), pc = c.present_pair();
  EXPECT_TRUE(exactly_equal(pa.theta_a, pb.theta_a));
  EXPECT_TRUE(exactly_equal(pa.theta_b, pb.theta_b));
  EXPECT_FALSE(exactly_equal(pa.theta_a, pa.theta_b));
  EXPECT_FALSE(exactly_equal(pa.theta_a, pc.theta_a));
  EXPECT_EQ(pa.out_a, pb.out_a);
}

TEST(Session, PhaseErrors) {
  Session s = make();
  EXPECT_THROW(s.submit_feedback(prefer(Choice::First)), PhaseError);
  s.present_pair();
  EXPECT_THROW(s.present_pair(), PhaseError);
  s.submit_feedback(prefer(Choice::First));
  EXPECT_THROW(s.submit_feedback(prefer(Choice::First)), PhaseError);
}

TEST(Session, PreferenceMovesMeanTowardChosen) {
  Session s = make();
  const PresentedPair p = s.present_pair();
  s.submit_feedback(prefer(Choice::First));
  const LearnerState& l = s.state().learner;
  EXPECT_EQ(l.history.size(), 2u);
  const double wa = 1.0 / (1.0 + std::exp(-10.0));  // 0.99995
  EXPECT_LT((l.dist.mean - (wa * p.theta_a + (1.0 - wa) * p.theta_b)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((l.dist.mean - p.theta_a).norm(), (l.dist.mean - p.theta_b).norm());
  EXPECT_EQ(s.state().trial_index, 1);
  EXPECT_EQ(s.state().phase, Phase::ReadyToSample);
}

TEST(Session, PreferenceOnlyRejectsMetaAndStaysPut) {
  Session s = make(Mode::PreferenceOnly);
  s.present_pair();
  const LearnerState before = s.state().learner;
  const std::size_t records = s.records().size();
  TrialFeedback fb = prefer(Choice::First);
  fb.guidance_target = Target::First;
  EXPECT_THROW(s.submit_feedback(fb), CapabilityError);
  fb = prefer(Choice::First);
  fb.speed_level = Level(5);
  EXPECT_THROW(s.submit_feedback(fb), CapabilityError);
  EXPECT_EQ(s.state().learner, before);
  EXPECT_EQ(s.records().size(), records);
  EXPECT_EQ(s.state().phase, Phase::AwaitingFeedback);
  EXPECT_NO_THROW(s.submit_feedback(prefer(Choice::Second)));
}

TEST(Session, DemonstrationBecomesTheMean) {
  Session s = make();
  s.present_pair();
  const BasisConfig basis;
  WeightVector demo_w(16);
  for (int i = 0; i < 16; ++i) demo_w[i] = 0.05 * (i % 8) - 0.2;
  TrialFeedback fb = prefer(Choice::First);
  fb.demonstration = generate_trajectory(demo_w, basis);
  s.submit_feedback(fb);
  const LearnerState& l = s.state().learner;
  EXPECT_TRUE(exactly_equal(l.dist.mean, fit_weights(*fb.demonstration, basis)));
  EXPECT_TRUE(l.history.empty());
  EXPECT_EQ(l.update_count, 1);

  // The next pair is drawn around the demonstration.
  const PresentedPair next = s.present_pair();
  const double spread = next.effective_sigma.maxCoeff();
  EXPECT_LT((next.theta_a - l.dist.mean).cwiseAbs().maxCoeff(), 6.0 * spread);
  EXPECT_LT((next.theta_b - l.dist.mean).cwiseAbs().maxCoeff(), 6.0 * spread);
}

TEST(Session, FallbackLoadWithoutSaveLeavesStateAlone) {
  Session s = make();
  s.present_pair();
  TrialFeedback fb = prefer(Choice::First);
  fb.fallback_load = true;
  EXPECT_THROW(s.submit_feedback(fb), NoFallbackError);
  EXPECT_EQ(s.state().phase, Phase::AwaitingFeedback);
  EXPECT_TRUE(s.state().learner.history.empty());
}

TEST(Session, FallbackSaveThenLoad) {
  Session s = make();
  const PresentedPair p = s.present_pair();
  TrialFeedback save = prefer(Choice::First);
  save.fallback_save_target = Target::First;
  s.submit_feedback(save);
  EXPECT_TRUE(exactly_equal(*s.state().fallback_slot.weights, p.theta_a));
  s.present_pair();
  TrialFeedback load = prefer(Choice::None);
  load.fallback_load = true;
  const LearnerState before = s.state().learner;
  s.submit_feedback(load);
  EXPECT_TRUE(exactly_equal(s.state().learner.dist.mean, p.theta_a));
  EXPECT_TRUE(s.state().learner.history.empty());
}

TEST(Session, FinishesAfterBudget) {
  Session s = make(Mode::PreferenceOnly);
  for (int t = 0; t < 40; ++t) {
    s.present_pair();
    s.submit_feedback(prefer(t % 2 ? Choice::First : Choice::Second));
  }
  EXPECT_EQ(s.state().phase, Phase::Finished);
  EXPECT_THROW(s.present_pair(), PhaseError);
  EXPECT_EQ(s.records().back().kind, "session_end");
  EXPECT_TRUE(validate_log(s.records()).empty());
}

TEST(Session, ScriptedRunIsByteIdentical) {
  const SessionLog a = run_scripted_session(Mode::FullModality, TeacherConfig{}, SessionConfig{}, 7);
  const SessionLog b = run_scripted_session(Mode::FullModality, TeacherConfig{}, SessionConfig{}, 7);
  EXPECT_EQ(dump(a), dump(b));
  EXPECT_NE(dump(a), dump(run_scripted_session(Mode::FullModality, TeacherConfig{}, SessionConfig{}, 8)));
}

TEST(Session, ScriptedLogIsWellFormedAndReplays) {
  for (Mode mode : {Mode::PreferenceOnly, Mode::FullModality}) {
    const SessionLog log = run_scripted_session(mode, TeacherConfig{}, SessionConfig{}, 7);
    const auto problems = validate_log(log);
    EXPECT_TRUE(problems.empty()) << problems.front();
    const auto pairs = std::count_if(log.begin(), log.end(), [](const LogRecord& r) { return r.kind == "pair_presented"; });
    EXPECT_EQ(pairs, 40);
    const ReplayReport replay = replay_log(log);
    EXPECT_TRUE(replay.ok());
    EXPECT_EQ(replay.snapshots_checked, 40);
  }
}

TEST(Session, EffectiveSigmaNeverGrows) {
  const SessionLog log = run_scripted_session(Mode::FullModality, TeacherConfig{}, SessionConfig{}, 11);
  std::optional<Eigen::VectorXd> prev;
  for (const LogRecord& r : log) {
    if (r.kind != "pair_presented") continue;
    const Eigen::VectorXd eff = vector_from_json(r.payload["effective_sigma"]);
    if (prev) EXPECT_TRUE((eff.array() <= prev->array()).all()) << "trial " << r.trial_index;
    prev = eff;
  }
}

TEST(Session, PreferenceOnlyLogsHaveNoMeta) {
  TeacherConfig full_teacher;
  full_teacher.mode = Mode::FullModality;  // overridden by the session mode
  const SessionLog log = run_scripted_session(Mode::PreferenceOnly, full_teacher, SessionConfig{}, 5);
  for (const LogRecord& r : log) {
    if (r.kind != "feedback") continue;
    ASSERT_EQ(r.payload["events"].size(), 1u);
    EXPECT_EQ(r.payload["events"][0]["kind"], "preference");
  }
}

TEST(Session, JsonlRoundTrip) {
  const SessionLog log = run_scripted_session(Mode::FullModality, TeacherConfig{}, SessionConfig{}, 2);
  std::istringstream in(dump(log));
  const SessionLog back = read_log(in);
  EXPECT_EQ(dump(back), dump(log));
  EXPECT_TRUE(replay_log(back).ok());
}

TEST(Session, ReplayCatchesTampering) {
  SessionLog log = run_scripted_session(Mode::FullModality, TeacherConfig{}, SessionConfig{}, 2);
  for (LogRecord& r : log) {
    // trial 14 is a plain preference; a fallback load (as on trial 12) would mask the edit
    if (r.kind == "feedback" && r.trial_index == 14) {
      const std::string pick = r.payload["events"][0]["choice"];
      r.payload["events"][0]["choice"] = pick == "first" ? "second" : "first";
    }
  }
  const ReplayReport replay = replay_log(log);
  ASSERT_FALSE(replay.ok());
  EXPECT_EQ(*replay.first_mismatch_trial, 14);
}

TEST(Session, ValidationFindsStructuralProblems) {
  const SessionLog good = run_scripted_session(Mode::PreferenceOnly, TeacherConfig{}, SessionConfig{}, 2);
  SessionLog truncated(good.begin(), good.begin() + 30);
  EXPECT_FALSE(validate_log(truncated).empty());
  EXPECT_TRUE(validate_log(truncated, false).empty());

  SessionLog dropped = good;
  dropped.erase(dropped.begin() + 5);  // loses one record of trial 1
  EXPECT_FALSE(validate_log(dropped).empty());

  SessionLog fake_hit = good;
  for (LogRecord& r : fake_hit) {
    if (r.kind == "outcome" && r.trial_index == 3) r.payload["first"]["hit"] = true;
  }
  EXPECT_FALSE(validate_log(fake_hit).empty());

  SessionLog meta = good;
  for (LogRecord& r : meta) {
    if (r.kind == "feedback" && r.trial_index == 0) r.payload["events"].push_back({{"kind", "fallback_load"}});
  }
  EXPECT_FALSE(validate_log(meta).empty());
}

TEST(Session, TruncationMarker) {
  Session s = make();
  s.present_pair();
  s.truncate("SIGTERM");
  s.truncate("again");
  EXPECT_EQ(s.records().back().kind, "truncated");
  EXPECT_EQ(std::count_if(s.records().begin(), s.records().end(),
                          [](const LogRecord& r) { return r.kind == "truncated"; }),
            1);
  EXPECT_FALSE(log_finished(s.records()));
}

TEST(Session, RandomOperationSequencesRespectPhases) {
  std::mt19937_64 rng(99);
  for (int run = 0; run < 20; ++run) {
    const Mode mode = run % 2 ? Mode::FullModality : Mode::PreferenceOnly;
    Session s("p", mode, rng(), SessionConfig{});
    int accepted_feedback = 0;
    for (int step = 0; step < 150 && s.state().phase != Phase::Finished; ++step) {
      const Phase before = s.state().phase;
      const int op = static_cast<int>(rng() % 3);
      try {
        if (op == 0) {
          s.present_pair();
          EXPECT_EQ(before, Phase::ReadyToSample);
        } else {
          TrialFeedback fb = prefer(static_cast<Choice>(rng() % 4));
          if (op == 2) fb.exploration_level = Level(1 + static_cast<int>(rng() % 5));
          s.submit_feedback(fb);
          EXPECT_EQ(before, Phase::AwaitingFeedback);
          ++accepted_feedback;
        }
      } catch (const PhaseError&) {
        EXPECT_EQ(s.state().phase, before);
      } catch (const CapabilityError&) {
        EXPECT_EQ(mode, Mode::PreferenceOnly);
      }
    }
    EXPECT_EQ(s.state().trial_index, accepted_feedback);
    EXPECT_TRUE(validate_log(s.records(), false).empty());
    EXPECT_TRUE(replay_log(s.records()).ok());
  }
}
