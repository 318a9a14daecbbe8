#pragma once

// Scripted stand-ins for study participants. The preference-only teacher
// judges pairs by distance to the hole; the full-modality teacher also
// marks, tunes sliders and manages the fallback slot by fixed rules.

#include <algorithm>
#include <cmath>
#include <random>

#include "metateach/errors.hpp"
#include "metateach/feedback.hpp"
#include "metateach/minigolf.hpp"

namespace metateach {

enum class Mode { PreferenceOnly, FullModality };

struct TeacherConfig {
  Mode mode = Mode::PreferenceOnly;
  double noise_temperature = 0.0;  // meters; 0 = oracle
  double both_threshold = 0.08;
  double none_threshold = 0.6;
  double guidance_margin = 0.05;
  double correction_margin = 0.3;
  double aim_tolerance = 0.35;  // radians; speed is only judged on shots aimed at the cup
  double speed_dead_band = 0.2;  // meters around the cup line that count as "right length"
  Seed seed = 0;

  static constexpr double kHumanLikeNoise = 0.05;
  static constexpr int kFallbackPatience = 5;
  static constexpr double kFallbackBadFactor = 2.0;

  void validate() const {
    if (!(noise_temperature >= 0.0)) throw ValidationError("noise_temperature must be >= 0");
    if (!(both_threshold > 0.0) || !(none_threshold > 0.0)) throw ValidationError("thresholds must be > 0");
    if (!(guidance_margin > 0.0) || !(correction_margin > 0.0)) throw ValidationError("margins must be > 0");
  }
};

// What the teacher remembers about the session so far.
struct SessionSummary {
  double best_distance = 0.0;
  int hit_trials = 0;
  int consecutive_bad_trials = 0;
  bool fallback_saved = false;
  Level exploration_level;
  Level speed_level;

  static SessionSummary start(const CourseConfig& course) {
    SessionSummary s;
    s.best_distance = course.start_distance();
    return s;
  }
};

inline Choice choose_preference(const EnvOutcome& first, const EnvOutcome& second,
                                const SessionSummary& summary, const TeacherConfig& cfg,
                                Seed noise_seed = 0) {
  const double da = first.distance_to_hole;
  const double db = second.distance_to_hole;
  if ((first.hit && second.hit) || (da < cfg.both_threshold && db < cfg.both_threshold)) {
    return Choice::Both;
  }
  if (da > cfg.none_threshold && db > cfg.none_threshold && da >= summary.best_distance &&
      db >= summary.best_distance) {
    return Choice::None;
  }
  Choice choice = da <= db ? Choice::First : Choice::Second;
  if (cfg.noise_temperature > 0.0) {
    const double flip = 1.0 / (1.0 + std::exp(std::abs(da - db) / cfg.noise_temperature));
    std::mt19937_64 engine(noise_seed);
    if (std::uniform_real_distribution<double>(0.0, 1.0)(engine) < flip) {
      choice = choice == Choice::First ? Choice::Second : Choice::First;
    }
  }
  return choice;
}

// Signed position of the ball along the tee-to-cup line, relative to the cup.
inline double along_hole_line(const EnvOutcome& out, const CourseConfig& course) {
  const Vec2 axis = (course.hole_center - course.ball_start).normalized();
  return (out.ball_final - course.ball_start).dot(axis) - course.start_distance();
}

// Angle between the launch direction and the tee-to-cup axis.
inline double aim_error(const EnvOutcome& out, const CourseConfig& course) {
  if (!out.contact_made) return M_PI;
  const Vec2 axis = (course.hole_center - course.ball_start).normalized();
  const double c = std::clamp(out.launch_velocity.normalized().dot(axis), -1.0, 1.0);
  return std::acos(c);
}

// Adds the full-modality teacher's meta feedback to a preference judgment.
inline TrialFeedback meta_actions(const EnvOutcome& first, const EnvOutcome& second, Choice preference,
                                  const SessionSummary& summary, const TeacherConfig& cfg,
                                  const CourseConfig& course) {
  if (cfg.mode != Mode::FullModality) throw ModeError("meta actions need the full-modality teacher");
  TrialFeedback fb;
  fb.preference = preference;
  fb.exploration_level = summary.exploration_level;
  fb.speed_level = summary.speed_level;

  const double da = first.distance_to_hole;
  const double db = second.distance_to_hole;
  const Target better = da <= db ? Target::First : Target::Second;
  const Target worse = better == Target::First ? Target::Second : Target::First;
  const double best_now = std::min(da, db);
  const double worst_now = std::max(da, db);
  const EnvOutcome& reference = better == Target::First ? first : second;

  // (a) guidance on a clearly improved preferred movement
  const bool preferred_better = preference == Choice::Both ||
                                (preference == Choice::First && better == Target::First) ||
                                (preference == Choice::Second && better == Target::Second);
  if (preferred_better && best_now < summary.best_distance - cfg.guidance_margin) {
    fb.guidance_target = better;
  }
  // (b) correction on a clearly bad movement
  if (worst_now > summary.best_distance + cfg.correction_margin) fb.correction_target = worse;

  // (c) speed nudges from the better shot
  if (reference.contact_made && !reference.hit && aim_error(reference, course) <= cfg.aim_tolerance) {
    const double along = along_hole_line(reference, course);
    if (along < -cfg.speed_dead_band) {
      fb.speed_level = Level(std::min(kNumLevels, summary.speed_level.value() + 1));
    } else if (along > cfg.speed_dead_band) {
      fb.speed_level = Level(std::max(1, summary.speed_level.value() - 1));
    }
  }

  // (d) narrow the search once the cup has been found
  const int hits = summary.hit_trials + ((first.hit || second.hit) ? 1 : 0);
  if (hits >= 3) {
    fb.exploration_level = Level(1);
  } else if (hits >= 1) {
    fb.exploration_level = Level(std::min(2, summary.exploration_level.value()));
  }

  // (e) fallback: save every new session best, reload after a bad streak
  const bool new_best = best_now < summary.best_distance;
  if (new_best) fb.fallback_save_target = better;
  const bool bad_trial = !new_best && best_now >= TeacherConfig::kFallbackBadFactor * summary.best_distance;
  const int streak = bad_trial ? summary.consecutive_bad_trials + 1 : 0;
  if (streak >= TeacherConfig::kFallbackPatience && summary.fallback_saved) fb.fallback_load = true;
  return fb;
}

// Advances the summary after a trial's feedback has been decided.
inline SessionSummary observe_trial(SessionSummary summary, const EnvOutcome& first,
                                    const EnvOutcome& second, const TrialFeedback& fb) {
  const double best_now = std::min(first.distance_to_hole, second.distance_to_hole);
  const bool new_best = best_now < summary.best_distance;
  const bool bad_trial = !new_best && best_now >= TeacherConfig::kFallbackBadFactor * summary.best_distance;
  summary.consecutive_bad_trials = (bad_trial && !fb.fallback_load) ? summary.consecutive_bad_trials + 1 : 0;
  if (first.hit || second.hit) ++summary.hit_trials;
  if (new_best) summary.best_distance = best_now;
  if (fb.fallback_save_target) summary.fallback_saved = true;
  summary.exploration_level = fb.exploration_level;
  summary.speed_level = fb.speed_level;
  return summary;
}

class ScriptedTeacher {
 public:
  ScriptedTeacher(TeacherConfig cfg, CourseConfig course)
      : cfg_(cfg), course_(std::move(course)), summary_(SessionSummary::start(course_)) {
    cfg_.validate();
  }

  TrialFeedback respond(const EnvOutcome& first, const EnvOutcome& second, int trial_index) {
    const Choice choice =
        choose_preference(first, second, summary_, cfg_, derive_seed(cfg_.seed, 0x7ea, trial_index));
    TrialFeedback fb;
    if (cfg_.mode == Mode::FullModality) {
      fb = meta_actions(first, second, choice, summary_, cfg_, course_);
    } else {
      fb.preference = choice;
    }
    summary_ = observe_trial(summary_, first, second, fb);
    return fb;
  }

  const SessionSummary& summary() const { return summary_; }
  const TeacherConfig& config() const { return cfg_; }

 private:
  TeacherConfig cfg_;
  CourseConfig course_;
  SessionSummary summary_;
};

}  // namespace metateach
