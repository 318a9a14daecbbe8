#pragma once

// Deterministic planar minigolf. The club head follows a trajectory; the
// first time it enters the contact disc around the ball while approaching
// it, the ball is launched along the contact normal and then rolls under
// constant friction until it stops, drops into the cup, or time runs out.

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "metateach/errors.hpp"
#include "metateach/promp.hpp"

namespace metateach {

using Vec2 = Eigen::Vector2d;

struct CourseConfig {
  Vec2 ball_start{0.0, 0.0};
  Vec2 hole_center{1.2, 0.0};
  double hole_radius = 0.054;
  double ball_radius = 0.021;
  double club_radius = 0.3;
  double friction_decel = 0.6;
  double restitution = 0.9;
  double max_sim_time = 10.0;
  double timestep = 0.005;
  double capture_speed = 0.5;
  Vec2 club_address{0.0, 0.0};  // trajectory positions are offsets from here

  double contact_radius() const { return club_radius + ball_radius; }
  double start_distance() const { return (hole_center - ball_start).norm(); }

  void validate() const {
    if (!(hole_radius > 0.0) || !(ball_radius > 0.0) || !(club_radius > 0.0)) {
      throw ValidationError("course radii must be > 0");
    }
    if (!(friction_decel > 0.0)) throw ValidationError("friction_decel must be > 0");
    if (!(restitution > 0.0 && restitution <= 1.0)) throw ValidationError("restitution must lie in (0, 1]");
    if (!(max_sim_time > 0.0) || !(timestep > 0.0)) throw ValidationError("times must be > 0");
    if (!(capture_speed >= 0.0)) throw ValidationError("capture_speed must be >= 0");
    if (!(start_distance() > hole_radius)) throw ValidationError("ball starts inside the hole");
  }

  friend bool operator==(const CourseConfig& a, const CourseConfig& b) {
    return a.ball_start == b.ball_start && a.hole_center == b.hole_center &&
           a.hole_radius == b.hole_radius && a.ball_radius == b.ball_radius &&
           a.club_radius == b.club_radius && a.friction_decel == b.friction_decel &&
           a.restitution == b.restitution && a.max_sim_time == b.max_sim_time &&
           a.timestep == b.timestep && a.capture_speed == b.capture_speed &&
           a.club_address == b.club_address;
  }
};

struct EnvOutcome {
  Vec2 ball_final{0.0, 0.0};
  bool hit = false;
  double distance_to_hole = 0.0;
  double impact_speed = 0.0;  // ball launch speed, 0 without contact
  bool contact_made = false;
  double contact_time = 0.0;
  Vec2 launch_velocity{0.0, 0.0};
  double rest_time = 0.0;  // when the ball stopped or was captured

  friend bool operator==(const EnvOutcome& a, const EnvOutcome& b) {
    return a.ball_final == b.ball_final && a.hit == b.hit && a.distance_to_hole == b.distance_to_hole &&
           a.impact_speed == b.impact_speed && a.contact_made == b.contact_made &&
           a.contact_time == b.contact_time && a.launch_velocity == b.launch_velocity &&
           a.rest_time == b.rest_time;
  }
};

inline void validate_trajectory(const Trajectory& trajectory) {
  if (trajectory.size() < 2) throw InvalidTrajectoryError("trajectory needs at least 2 timesteps");
  if (trajectory.positions.rows() != trajectory.size()) {
    throw InvalidTrajectoryError("trajectory positions/timestamps length mismatch");
  }
  if (trajectory.positions.cols() != 2) throw InvalidTrajectoryError("club trajectory must be planar");
  for (Eigen::Index i = 1; i < trajectory.size(); ++i) {
    if (!(trajectory.timestamps[i] > trajectory.timestamps[i - 1])) {
      throw InvalidTrajectoryError("timestamps must be strictly increasing");
    }
  }
  if (!trajectory.positions.allFinite() || !trajectory.timestamps.allFinite()) {
    throw InvalidTrajectoryError("trajectory contains non-finite values");
  }
}

struct Contact {
  double time;
  Vec2 ball_velocity;
};

// First approaching entry of the club head into the contact disc, searched
// segment by segment along the piecewise-linear club path.
inline std::optional<Contact> find_contact(const Trajectory& traj, const CourseConfig& course) {
  const double radius = course.contact_radius();
  const Vec2 ball = course.ball_start - course.club_address;
  for (Eigen::Index k = 1; k < traj.size(); ++k) {
    const Vec2 p0 = traj.positions.row(k - 1).transpose();
    const Vec2 p1 = traj.positions.row(k).transpose();
    const double dt = traj.timestamps[k] - traj.timestamps[k - 1];
    const Vec2 step = p1 - p0;
    const Vec2 velocity = step / dt;

    // Smallest s in [0, 1] with |p0 + s * step - ball| <= radius.
    const Vec2 rel = p0 - ball;
    double s = 0.0;
    if (rel.squaredNorm() > radius * radius) {
      const double a = step.squaredNorm();
      if (a == 0.0) continue;
      const double b = 2.0 * rel.dot(step);
      const double c = rel.squaredNorm() - radius * radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) continue;
      s = (-b - std::sqrt(disc)) / (2.0 * a);
      if (s < 0.0 || s > 1.0) continue;
    }
    const Vec2 contact_point = p0 + s * step;
    Vec2 normal = ball - contact_point;
    const double n = normal.norm();
    if (n > 1e-12) {
      normal /= n;
    } else {
      const double speed = velocity.norm();
      if (speed == 0.0) continue;
      normal = velocity / speed;
    }
    const double approach = velocity.dot(normal);
    if (approach <= 0.0) continue;
    return Contact{traj.timestamps[k - 1] + s * dt, course.restitution * approach * normal};
  }
  return std::nullopt;
}

inline EnvOutcome simulate(const Trajectory& trajectory, const CourseConfig& course) {
  validate_trajectory(trajectory);
  EnvOutcome out;
  out.ball_final = course.ball_start;
  out.distance_to_hole = course.start_distance();

  const auto contact = find_contact(trajectory, course);
  if (!contact) return out;

  out.contact_made = true;
  out.contact_time = contact->time;
  out.launch_velocity = contact->ball_velocity;
  out.impact_speed = contact->ball_velocity.norm();

  const double a = course.friction_decel;
  const double dt = course.timestep;
  const Vec2 direction = contact->ball_velocity / out.impact_speed;
  Vec2 position = course.ball_start;
  double speed = out.impact_speed;
  double t = contact->time;

  auto captured = [&] {
    return (position - course.hole_center).norm() <= course.hole_radius && speed <= course.capture_speed;
  };
  while (!captured()) {
    if (speed <= 0.0 || t >= course.max_sim_time) break;
    if (speed <= a * dt) {
      // Exact remaining travel of uniform deceleration.
      position += direction * (speed * speed / (2.0 * a));
      t += speed / a;
      speed = 0.0;
    } else {
      position += direction * (speed * dt - 0.5 * a * dt * dt);
      speed -= a * dt;
      t += dt;
    }
  }
  out.rest_time = t;
  if (captured()) {
    out.hit = true;
    out.ball_final = course.hole_center;
    out.distance_to_hole = 0.0;
  } else {
    out.ball_final = position;
    out.distance_to_hole = (position - course.hole_center).norm();
  }
  return out;
}

}  // namespace metateach
