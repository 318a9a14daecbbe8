#pragma once

// Experiment config file (INI). Every key is optional; missing keys keep
// their built-in defaults. See docs/config.md for the key list.

#include <set>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "metateach/errors.hpp"
#include "metateach/session.hpp"
#include "metateach/teacher.hpp"

namespace metateach {

struct ExperimentConfig {
  SessionConfig session;
  TeacherConfig teacher;
};

namespace detail {

inline Vec2 parse_point(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  double x = 0.0, y = 0.0;
  char comma = 0;
  if (!(in >> x >> comma >> y) || comma != ',') {
    throw ConfigError(key + ": expected 'x, y', got '" + text + "'");
  }
  return {x, y};
}

class IniReader {
 public:
  explicit IniReader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <typename T>
  void read(const std::string& key, T& value) {
    seen_.insert(key);
    const auto node = tree_.get_optional<std::string>(key);
    if (!node) return;
    std::istringstream in(*node);
    T parsed{};
    if (!(in >> parsed) || !(in >> std::ws).eof()) {
      throw ConfigError(key + ": cannot parse '" + *node + "'");
    }
    value = parsed;
  }

  void read_point(const std::string& key, Vec2& value) {
    seen_.insert(key);
    if (const auto node = tree_.get_optional<std::string>(key)) value = parse_point(*node, key);
  }

  // Unknown keys are almost always typos, so they are rejected.
  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) throw ConfigError("key '" + section + "' outside any section");
      for (const auto& [key, ignored] : body) {
        const std::string full = section + "." + key;
        if (!seen_.count(full)) throw ConfigError("unknown config key '" + full + "'");
      }
    }
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(e.what());
  }
  ExperimentConfig c;
  detail::IniReader r(tree);
  SessionConfig& s = c.session;

  r.read_point("course.ball_start", s.course.ball_start);
  r.read_point("course.hole_center", s.course.hole_center);
  r.read_point("course.club_address", s.course.club_address);
  r.read("course.hole_radius", s.course.hole_radius);
  r.read("course.ball_radius", s.course.ball_radius);
  r.read("course.club_radius", s.course.club_radius);
  r.read("course.friction_decel", s.course.friction_decel);
  r.read("course.restitution", s.course.restitution);
  r.read("course.max_sim_time", s.course.max_sim_time);
  r.read("course.timestep", s.course.timestep);
  r.read("course.capture_speed", s.course.capture_speed);

  r.read("learner.eliteness_h", s.constants.eliteness_h);
  r.read("learner.reward_decay", s.constants.reward_decay);
  r.read("learner.covariance_decay", s.constants.covariance_decay);
  r.read("learner.guidance_decay", s.constants.guidance_decay);
  r.read("learner.guidance_eliteness_multiplier", s.constants.guidance_eliteness_multiplier);
  r.read("learner.reward_pref", s.constants.reward_pref);
  r.read("learner.reward_meta", s.constants.reward_meta);
  r.read("learner.base_sigma", s.base_sigma);

  r.read("promp.num_basis", s.basis.num_basis);
  r.read("promp.num_dof", s.basis.num_dof);
  r.read("promp.width", s.basis.width);
  r.read("promp.duration", s.basis.duration);
  r.read("promp.num_timesteps", s.basis.num_timesteps);

  r.read("session.num_trials", s.num_trials);

  r.read("teacher.noise_temperature", c.teacher.noise_temperature);
  r.read("teacher.both_threshold", c.teacher.both_threshold);
  r.read("teacher.none_threshold", c.teacher.none_threshold);
  r.read("teacher.guidance_margin", c.teacher.guidance_margin);
  r.read("teacher.correction_margin", c.teacher.correction_margin);
  r.read("teacher.aim_tolerance", c.teacher.aim_tolerance);
  r.read("teacher.speed_dead_band", c.teacher.speed_dead_band);
  r.reject_unknown();

  try {
    s.validate();
    c.teacher.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

}  // namespace metateach
