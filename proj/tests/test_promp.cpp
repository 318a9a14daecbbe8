#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "metateach/promp.hpp"

using namespace metateach;

TEST(Promp, AdjacentBasesCrossAtConfiguredActivation) {
  const BasisConfig cfg;
  const double w = cfg.effective_width();
  const double half_spacing = 0.5 * (cfg.center(1) - cfg.center(0));
  EXPECT_NEAR(std::exp(-0.5 * half_spacing * half_spacing / (w * w)), 0.55, 1e-12);
}

TEST(Promp, BasisRowsArePartitionOfUnity) {
  const BasisConfig cfg;
  const Eigen::MatrixXd phi = basis_matrix(cfg);
  ASSERT_EQ(phi.rows(), 100);
  ASSERT_EQ(phi.cols(), 8);
  for (Eigen::Index r = 0; r < phi.rows(); ++r) {
    EXPECT_NEAR(phi.row(r).sum(), 1.0, 1e-12);
    EXPECT_TRUE((phi.row(r).array() > 0.0).all());
  }
}

TEST(Promp, GenerateShapeAndTimeAxis) {
  const BasisConfig cfg;
  const Trajectory t = generate_trajectory(WeightVector::Zero(16), cfg);
  EXPECT_EQ(t.positions.rows(), 100);
  EXPECT_EQ(t.positions.cols(), 2);
  EXPECT_DOUBLE_EQ(t.timestamps[0], 0.0);
  EXPECT_DOUBLE_EQ(t.timestamps[99], 2.0);
  EXPECT_TRUE(t.positions.isZero(0.0));
}

TEST(Promp, ConstantWeightsGiveConstantPositions) {
  // Normalized bases sum to one, so equal weights reproduce that value.
  const BasisConfig cfg;
  WeightVector w(16);
  w << Eigen::VectorXd::Constant(8, 0.3), Eigen::VectorXd::Constant(8, -0.7);
  const Trajectory t = generate_trajectory(w, cfg);
  EXPECT_NEAR((t.positions.col(0).array() - 0.3).abs().maxCoeff(), 0.0, 1e-14);
  EXPECT_NEAR((t.positions.col(1).array() + 0.7).abs().maxCoeff(), 0.0, 1e-14);
}

TEST(Promp, SpeedRescalesTimeOnly) {
  const BasisConfig cfg;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  WeightVector w(16);
  for (auto& v : w) v = n(rng);
  const Trajectory base = generate_trajectory(w, cfg, 1.0);
  for (double s : {0.5, 0.75, 1.5, 2.0}) {
    const Trajectory fast = generate_trajectory(w, cfg, s);
    EXPECT_TRUE(exactly_equal(fast.positions, base.positions));
    EXPECT_DOUBLE_EQ(fast.timestamps[99], 2.0 / s);
    EXPECT_EQ(fast.speed_factor, s);
  }
}

TEST(Promp, FitRoundTrip) {
  const BasisConfig cfg;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.5);
  for (int k = 0; k < 20; ++k) {
    WeightVector w(16);
    for (auto& v : w) v = n(rng);
    const Trajectory t = generate_trajectory(w, cfg);
    const Trajectory again = generate_trajectory(fit_weights(t, cfg), cfg);
    EXPECT_LT((again.positions - t.positions).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Promp, FitAcceptsIrregularSampling) {
  // A drawn stroke: 30 points at uneven times over 1.3 s, starting at t=4.
  const BasisConfig cfg;
  Trajectory stroke;
  stroke.timestamps.resize(30);
  stroke.positions.resize(30, 2);
  for (int i = 0; i < 30; ++i) {
    const double u = std::pow(i / 29.0, 1.4);
    stroke.timestamps[i] = 4.0 + 1.3 * u;
    stroke.positions(i, 0) = -0.5 + 0.8 * u;
    stroke.positions(i, 1) = 0.1 * std::sin(3.0 * u);
  }
  const Trajectory fitted = generate_trajectory(fit_weights(stroke, cfg), cfg);
  // Eight normalized Gaussians bend slightly at the ends, so the endpoints are
  // only good to about a percent of the stroke.
  EXPECT_NEAR(fitted.positions(0, 0), -0.5, 1e-2);
  EXPECT_NEAR(fitted.positions(99, 0), 0.3, 1e-2);
  EXPECT_NEAR(fitted.positions(99, 1), 0.1 * std::sin(3.0), 1e-2);
  EXPECT_NEAR(fitted.positions(50, 0), -0.1, 2e-2);
}

TEST(Promp, FitErrors) {
  const BasisConfig cfg;
  Trajectory short_one = generate_trajectory(WeightVector::Zero(16), BasisConfig{8, 2, 0.0, 2.0, 5});
  EXPECT_THROW(fit_weights(short_one, cfg), UnderdeterminedError);
  Trajectory three_d;
  three_d.timestamps = Eigen::VectorXd::LinSpaced(20, 0.0, 1.0);
  three_d.positions = Eigen::MatrixXd::Zero(20, 3);
  EXPECT_THROW(fit_weights(three_d, cfg), DimensionError);
  Trajectory frozen;
  frozen.timestamps = Eigen::VectorXd::Zero(20);
  frozen.positions = Eigen::MatrixXd::Zero(20, 2);
  EXPECT_THROW(fit_weights(frozen, cfg), InvalidTrajectoryError);
}

TEST(Promp, WrongWeightLength) {
  EXPECT_THROW(generate_trajectory(WeightVector::Zero(15), BasisConfig{}), DimensionError);
}

TEST(Promp, SamplingIsSeededAndMatchesMoments) {
  const PolicyDistribution dist = PolicyDistribution::isotropic(WeightVector::Constant(16, 0.2), 0.1);
  EXPECT_TRUE(exactly_equal(sample_weights(dist, 5), sample_weights(dist, 5)));
  EXPECT_FALSE(exactly_equal(sample_weights(dist, 5), sample_weights(dist, 6)));

  const int n = 20000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(16), sq = Eigen::VectorXd::Zero(16);
  for (int i = 0; i < n; ++i) {
    const WeightVector w = sample_weights(dist, derive_seed(1, i));
    sum += w;
    sq += w.cwiseProduct(w);
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd sd = (sq / n - mean.cwiseProduct(mean)).cwiseSqrt();
  // 5 standard errors
  EXPECT_LT((mean.array() - 0.2).abs().maxCoeff(), 5 * 0.1 / std::sqrt(n));
  EXPECT_LT((sd.array() - 0.1).abs().maxCoeff(), 5 * 0.1 / std::sqrt(2.0 * n));
}

TEST(Promp, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0, 1), derive_seed(1, 0, 2));
  EXPECT_NE(derive_seed(1, 1, 1), derive_seed(1, 0, 1));
  EXPECT_NE(derive_seed(1, 0, 1), derive_seed(2, 0, 1));
  EXPECT_EQ(derive_seed(9, 4, 2), derive_seed(9, 4, 2));
}
