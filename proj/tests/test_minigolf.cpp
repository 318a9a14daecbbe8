#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "metateach/minigolf.hpp"
#include "oracles.hpp"

using namespace metateach;

namespace {

// Club moving at constant velocity from `from`, sampled at n points over `duration`.
Trajectory straight(Vec2 from, Vec2 velocity, double duration = 2.0, int n = 100) {
  Trajectory t;
  t.timestamps = Eigen::VectorXd::LinSpaced(n, 0.0, duration);
  t.positions.resize(n, 2);
  for (int i = 0; i < n; ++i) t.positions.row(i) = (from + velocity * t.timestamps[i]).transpose();
  return t;
}

// Club speed that makes the ball roll exactly `distance` along +x.
double club_speed_for(double distance, const CourseConfig& c) {
  return std::sqrt(2.0 * c.friction_decel * distance) / c.restitution;
}

}  // namespace

TEST(Minigolf, HeadOnStrikeTravelsClosedFormDistance) {
  const CourseConfig c;
  const double v = club_speed_for(0.7, c);
  const EnvOutcome o = simulate(straight({-0.5, 0.0}, {v, 0.0}), c);
  ASSERT_TRUE(o.contact_made);
  EXPECT_FALSE(o.hit);
  EXPECT_NEAR(o.impact_speed, c.restitution * v, 1e-12);
  EXPECT_NEAR(o.ball_final.x(), 0.7, 1e-9);
  EXPECT_NEAR(o.ball_final.y(), 0.0, 1e-12);
  EXPECT_NEAR(o.distance_to_hole, 0.5, 1e-9);
  EXPECT_NEAR(o.contact_time, (0.5 - c.contact_radius()) / v, 1e-9);
}

TEST(Minigolf, RollingToTheCupIsCaptured) {
  const CourseConfig c;
  const EnvOutcome o = simulate(straight({-0.5, 0.0}, {club_speed_for(1.2, c), 0.0}), c);
  EXPECT_TRUE(o.hit);
  EXPECT_EQ(o.distance_to_hole, 0.0);
  EXPECT_TRUE(o.ball_final.isApprox(c.hole_center));
}

TEST(Minigolf, TooFastRollsOverTheCup) {
  const CourseConfig c;
  const EnvOutcome o = simulate(straight({-0.5, 0.0}, {club_speed_for(3.0, c), 0.0}), c);
  EXPECT_FALSE(o.hit);
  EXPECT_NEAR(o.ball_final.x(), 3.0, 1e-9);
}

TEST(Minigolf, MissedClubLeavesBallAtRest) {
  const CourseConfig c;
  const EnvOutcome o = simulate(straight({-0.5, 1.0}, {0.5, 0.0}), c);
  EXPECT_FALSE(o.contact_made);
  EXPECT_FALSE(o.hit);
  EXPECT_EQ(o.ball_final, c.ball_start);
  EXPECT_DOUBLE_EQ(o.distance_to_hole, 1.2);
  EXPECT_EQ(o.impact_speed, 0.0);
}

TEST(Minigolf, RetreatingClubDoesNotStrike) {
  const CourseConfig c;
  // Starts inside the contact disc and moves away.
  const EnvOutcome o = simulate(straight({-0.1, 0.0}, {-0.5, 0.0}), c);
  EXPECT_FALSE(o.contact_made);
}

TEST(Minigolf, TimeLimitStopsTheRoll) {
  CourseConfig c;
  c.max_sim_time = 0.5;
  const EnvOutcome o = simulate(straight({-0.5, 0.0}, {club_speed_for(3.0, c), 0.0}), c);
  EXPECT_LE(o.rest_time, 0.5 + c.timestep);
  EXPECT_LT(o.ball_final.x(), 3.0);
}

TEST(Minigolf, InvalidTrajectories) {
  const CourseConfig c;
  Trajectory one = straight({0, 0}, {1, 0}, 1.0, 1);
  EXPECT_THROW(simulate(one, c), InvalidTrajectoryError);
  Trajectory backwards = straight({0, 0}, {1, 0});
  backwards.timestamps[10] = backwards.timestamps[9];
  EXPECT_THROW(simulate(backwards, c), InvalidTrajectoryError);
  Trajectory spatial;
  spatial.timestamps = Eigen::VectorXd::LinSpaced(5, 0, 1);
  spatial.positions = Eigen::MatrixXd::Zero(5, 3);
  EXPECT_THROW(simulate(spatial, c), InvalidTrajectoryError);
  Trajectory nan = straight({0, 0}, {1, 0});
  nan.positions(3, 1) = std::nan("");
  EXPECT_THROW(simulate(nan, c), InvalidTrajectoryError);
}

TEST(Minigolf, Deterministic) {
  const CourseConfig c;
  const Trajectory t = straight({-0.4, 0.05}, {0.9, -0.02});
  EXPECT_EQ(simulate(t, c), simulate(t, c));
}

TEST(Minigolf, RandomStrikesMatchKinematics) {
  CourseConfig c;
  c.max_sim_time = 100.0;  // let every ball come to rest
  std::mt19937_64 rng(500);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI), offset(-0.25, 0.25), speed(0.2, 3.0);
  int strikes = 0;
  while (strikes < 300) {
    const double a = angle(rng);
    const Vec2 dir(std::cos(a), std::sin(a));
    const Vec2 normal(-dir.y(), dir.x());
    const Vec2 from = c.ball_start - 0.6 * dir + offset(rng) * normal;
    const Vec2 v = speed(rng) * dir;
    const auto launch = oracle::straight_strike(from.x(), from.y(), v.x(), v.y(), c.ball_start.x(),
                                                c.ball_start.y(), c.contact_radius(), c.restitution);
    if (!launch) continue;
    const EnvOutcome o = simulate(straight(from, v), c);
    ASSERT_TRUE(o.contact_made);
    const double s = std::hypot(launch->vx, launch->vy);
    EXPECT_NEAR(o.launch_velocity.x(), launch->vx, 1e-9);
    EXPECT_NEAR(o.launch_velocity.y(), launch->vy, 1e-9);
    if (o.hit) {
      EXPECT_LE(o.distance_to_hole, c.hole_radius);
    } else {
      const double travel = (o.ball_final - c.ball_start).norm();
      EXPECT_NEAR(travel, oracle::stopping_distance(s, c.friction_decel), s * c.timestep);
    }
    ++strikes;
  }
}
