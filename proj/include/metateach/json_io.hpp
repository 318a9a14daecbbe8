#pragma once

// JSON mapping of the domain types, shared by the session log and the wire
// protocol. Doubles are written in shortest round-trip form, so a value read
// back compares bit-equal to the one written.

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "metateach/errors.hpp"
#include "metateach/feedback.hpp"
#include "metateach/minigolf.hpp"
#include "metateach/pibb2.hpp"
#include "metateach/promp.hpp"
#include "metateach/teacher.hpp"

namespace metateach {

using Json = nlohmann::json;

namespace detail {
template <typename T>
T require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad field '") + key + "': " + e.what());
  }
}
}  // namespace detail

inline Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("expected a number array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError("expected a number array");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline Json vec2_to_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }
inline Vec2 vec2_from_json(const Json& j) {
  const Eigen::VectorXd v = vector_from_json(j);
  if (v.size() != 2) throw ValidationError("expected a 2-D point");
  return {v[0], v[1]};
}

// --- enums -----------------------------------------------------------------

inline std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::First: return "first";
    case Choice::Second: return "second";
    case Choice::Both: return "both";
    case Choice::None: break;
  }
  return "none";
}

inline Choice choice_from_string(std::string_view s) {
  if (s == "first") return Choice::First;
  if (s == "second") return Choice::Second;
  if (s == "both") return Choice::Both;
  if (s == "none") return Choice::None;
  throw ValidationError("unknown preference choice '" + std::string(s) + "'");
}

inline std::string_view to_string(Target t) { return t == Target::First ? "first" : "second"; }

inline Target target_from_string(std::string_view s) {
  if (s == "first") return Target::First;
  if (s == "second") return Target::Second;
  throw ValidationError("unknown movement target '" + std::string(s) + "'");
}

inline std::string_view to_string(Mode m) {
  return m == Mode::FullModality ? "full" : "preference-only";
}

inline Mode mode_from_string(std::string_view s) {
  if (s == "full") return Mode::FullModality;
  if (s == "preference-only") return Mode::PreferenceOnly;
  throw ValidationError("unknown mode '" + std::string(s) + "'");
}

// --- promp -----------------------------------------------------------------

inline Json to_json(const BasisConfig& c) {
  return {{"num_basis", c.num_basis}, {"num_dof", c.num_dof}, {"width", c.effective_width()},
          {"duration", c.duration}, {"num_timesteps", c.num_timesteps}};
}

inline BasisConfig basis_config_from_json(const Json& j) {
  BasisConfig c;
  c.num_basis = detail::require<int>(j, "num_basis");
  c.num_dof = detail::require<int>(j, "num_dof");
  c.width = detail::require<double>(j, "width");
  c.duration = detail::require<double>(j, "duration");
  c.num_timesteps = detail::require<int>(j, "num_timesteps");
  c.validate();
  return c;
}

inline Json to_json(const Trajectory& t) {
  Json positions = Json::array();
  for (Eigen::Index r = 0; r < t.positions.rows(); ++r) {
    positions.push_back(vector_to_json(t.positions.row(r).transpose()));
  }
  return {{"timestamps", vector_to_json(t.timestamps)}, {"positions", std::move(positions)},
          {"speed_factor", t.speed_factor}};
}

inline Trajectory trajectory_from_json(const Json& j) {
  Trajectory t;
  t.timestamps = vector_from_json(detail::require<Json>(j, "timestamps"));
  const Json rows = detail::require<Json>(j, "positions");
  if (!rows.is_array() || rows.size() != static_cast<std::size_t>(t.timestamps.size())) {
    throw ValidationError("positions must have one row per timestamp");
  }
  const Eigen::Index dof = rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size());
  t.positions.resize(t.timestamps.size(), dof);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Eigen::VectorXd row = vector_from_json(rows[r]);
    if (row.size() != dof) throw ValidationError("ragged positions matrix");
    t.positions.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  t.speed_factor = j.value("speed_factor", 1.0);
  return t;
}

// Drawn demonstration points [[t, x, y], ...].
inline Trajectory trajectory_from_points(const Json& points) {
  if (!points.is_array()) throw ValidationError("points must be an array of [t, x, y]");
  Trajectory t;
  t.timestamps.resize(static_cast<Eigen::Index>(points.size()));
  t.positions.resize(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::VectorXd p = vector_from_json(points[i]);
    if (p.size() != 3) throw ValidationError("each point must be [t, x, y]");
    const auto r = static_cast<Eigen::Index>(i);
    t.timestamps[r] = p[0];
    t.positions(r, 0) = p[1];
    t.positions(r, 1) = p[2];
  }
  return t;
}

// --- learner ---------------------------------------------------------------

inline Json to_json(const LearnerConstants& c) {
  return {{"eliteness_h", c.eliteness_h},
          {"reward_decay", c.reward_decay},
          {"covariance_decay", c.covariance_decay},
          {"guidance_decay", c.guidance_decay},
          {"guidance_eliteness_multiplier", c.guidance_eliteness_multiplier},
          {"reward_pref", c.reward_pref},
          {"reward_meta", c.reward_meta}};
}

inline LearnerConstants learner_constants_from_json(const Json& j) {
  LearnerConstants c;
  c.eliteness_h = detail::require<double>(j, "eliteness_h");
  c.reward_decay = detail::require<double>(j, "reward_decay");
  c.covariance_decay = detail::require<double>(j, "covariance_decay");
  c.guidance_decay = detail::require<double>(j, "guidance_decay");
  c.guidance_eliteness_multiplier = detail::require<double>(j, "guidance_eliteness_multiplier");
  c.reward_pref = detail::require<double>(j, "reward_pref");
  c.reward_meta = detail::require<double>(j, "reward_meta");
  c.validate();
  return c;
}

inline Json to_json(const Sample& s) {
  return {{"weights", vector_to_json(s.weights)}, {"reward", s.reward},
          {"original_reward", s.original_reward}, {"is_guidance", s.is_guidance},
          {"is_correction", s.is_correction}, {"trial_index", s.trial_index}};
}

inline Sample sample_from_json(const Json& j) {
  Sample s;
  s.weights = vector_from_json(detail::require<Json>(j, "weights"));
  s.reward = detail::require<double>(j, "reward");
  s.original_reward = detail::require<double>(j, "original_reward");
  s.is_guidance = detail::require<bool>(j, "is_guidance");
  s.is_correction = detail::require<bool>(j, "is_correction");
  s.trial_index = detail::require<int>(j, "trial_index");
  return s;
}

inline Json to_json(const LearnerState& s) {
  Json history = Json::array();
  for (const Sample& sample : s.history) history.push_back(to_json(sample));
  return {{"mean", vector_to_json(s.dist.mean)},
          {"sigma", vector_to_json(s.dist.sigma)},
          {"base_sigma", s.dist.base_sigma},
          {"update_count", s.update_count},
          {"constants", to_json(s.constants)},
          {"history", std::move(history)}};
}

inline LearnerState learner_state_from_json(const Json& j) {
  LearnerState s;
  s.dist.mean = vector_from_json(detail::require<Json>(j, "mean"));
  s.dist.sigma = vector_from_json(detail::require<Json>(j, "sigma"));
  s.dist.base_sigma = detail::require<double>(j, "base_sigma");
  s.update_count = detail::require<int>(j, "update_count");
  s.constants = learner_constants_from_json(detail::require<Json>(j, "constants"));
  for (const Json& sample : detail::require<Json>(j, "history")) {
    s.history.push_back(sample_from_json(sample));
  }
  return s;
}

// --- environment -----------------------------------------------------------

inline Json to_json(const CourseConfig& c) {
  return {{"ball_start", vec2_to_json(c.ball_start)},
          {"hole_center", vec2_to_json(c.hole_center)},
          {"hole_radius", c.hole_radius},
          {"ball_radius", c.ball_radius},
          {"club_radius", c.club_radius},
          {"friction_decel", c.friction_decel},
          {"restitution", c.restitution},
          {"max_sim_time", c.max_sim_time},
          {"timestep", c.timestep},
          {"capture_speed", c.capture_speed},
          {"club_address", vec2_to_json(c.club_address)}};
}

inline CourseConfig course_config_from_json(const Json& j) {
  CourseConfig c;
  c.ball_start = vec2_from_json(detail::require<Json>(j, "ball_start"));
  c.hole_center = vec2_from_json(detail::require<Json>(j, "hole_center"));
  c.hole_radius = detail::require<double>(j, "hole_radius");
  c.ball_radius = detail::require<double>(j, "ball_radius");
  c.club_radius = detail::require<double>(j, "club_radius");
  c.friction_decel = detail::require<double>(j, "friction_decel");
  c.restitution = detail::require<double>(j, "restitution");
  c.max_sim_time = detail::require<double>(j, "max_sim_time");
  c.timestep = detail::require<double>(j, "timestep");
  c.capture_speed = detail::require<double>(j, "capture_speed");
  if (j.contains("club_address")) c.club_address = vec2_from_json(j.at("club_address"));
  c.validate();
  return c;
}

inline Json to_json(const EnvOutcome& o) {
  return {{"ball_final", vec2_to_json(o.ball_final)}, {"hit", o.hit},
          {"distance_to_hole", o.distance_to_hole}, {"impact_speed", o.impact_speed},
          {"contact_made", o.contact_made}, {"contact_time", o.contact_time},
          {"launch_velocity", vec2_to_json(o.launch_velocity)}, {"rest_time", o.rest_time}};
}

inline EnvOutcome env_outcome_from_json(const Json& j) {
  EnvOutcome o;
  o.ball_final = vec2_from_json(detail::require<Json>(j, "ball_final"));
  o.hit = detail::require<bool>(j, "hit");
  o.distance_to_hole = detail::require<double>(j, "distance_to_hole");
  o.impact_speed = detail::require<double>(j, "impact_speed");
  o.contact_made = detail::require<bool>(j, "contact_made");
  o.contact_time = j.value("contact_time", 0.0);
  if (j.contains("launch_velocity")) o.launch_velocity = vec2_from_json(j.at("launch_velocity"));
  o.rest_time = j.value("rest_time", 0.0);
  return o;
}

inline Json to_json(const TeacherConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"noise_temperature", c.noise_temperature},
          {"both_threshold", c.both_threshold},
          {"none_threshold", c.none_threshold},
          {"guidance_margin", c.guidance_margin},
          {"correction_margin", c.correction_margin},
          {"aim_tolerance", c.aim_tolerance},
          {"speed_dead_band", c.speed_dead_band},
          {"seed", c.seed}};
}

// --- feedback events -------------------------------------------------------

inline Json to_json(const FeedbackEvent& e) {
  return std::visit(
      [](const auto& ev) -> Json {
        using T = std::decay_t<decltype(ev)>;
        Json j{{"kind", modality_name(FeedbackEvent{ev})}};
        if constexpr (std::is_same_v<T, event::Preference>) {
          j["choice"] = to_string(ev.choice);
        } else if constexpr (std::is_same_v<T, event::GuidanceMark> ||
                             std::is_same_v<T, event::CorrectionMark> ||
                             std::is_same_v<T, event::FallbackSave>) {
          j["target"] = to_string(ev.target);
        } else if constexpr (std::is_same_v<T, event::Demonstration>) {
          j["trajectory"] = to_json(ev.trajectory);
        } else if constexpr (std::is_same_v<T, event::ExplorationLevel> ||
                             std::is_same_v<T, event::SpeedLevel>) {
          j["level"] = ev.level.value();
        }
        return j;
      },
      e);
}

inline FeedbackEvent feedback_event_from_json(const Json& j) {
  const auto kind = detail::require<std::string>(j, "kind");
  if (kind == "preference") return event::Preference{choice_from_string(detail::require<std::string>(j, "choice"))};
  if (kind == "guidance") return event::GuidanceMark{target_from_string(detail::require<std::string>(j, "target"))};
  if (kind == "correction") return event::CorrectionMark{target_from_string(detail::require<std::string>(j, "target"))};
  if (kind == "fallback_save") return event::FallbackSave{target_from_string(detail::require<std::string>(j, "target"))};
  if (kind == "fallback_load") return event::FallbackLoad{};
  if (kind == "exploration") return event::ExplorationLevel{Level(detail::require<int>(j, "level"))};
  if (kind == "speed") return event::SpeedLevel{Level(detail::require<int>(j, "level"))};
  if (kind == "demonstration") {
    return event::Demonstration{trajectory_from_json(detail::require<Json>(j, "trajectory"))};
  }
  throw ValidationError("unknown feedback event kind '" + kind + "'");
}

inline Json events_to_json(const std::vector<FeedbackEvent>& events) {
  Json out = Json::array();
  for (const auto& e : events) out.push_back(to_json(e));
  return out;
}

inline std::vector<FeedbackEvent> events_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("events must be an array");
  std::vector<FeedbackEvent> out;
  for (const Json& e : j) out.push_back(feedback_event_from_json(e));
  return out;
}

}  // namespace metateach
