#pragma once

// Probabilistic movement primitives: a movement is a weight vector over
// normalized Gaussian time-basis functions, one block of weights per degree
// of freedom. Only the diagonal-covariance weight distribution is modeled.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "metateach/errors.hpp"

namespace metateach {

using Seed = std::uint64_t;
using WeightVector = Eigen::VectorXd;

// Exact (bitwise for finite values) equality that tolerates size mismatch.
template <typename A, typename B>
bool exactly_equal(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

// Activation of two neighbouring basis functions where they cross.
inline constexpr double kBasisCrossingActivation = 0.55;
inline constexpr double kFitRidge = 1e-6;

struct BasisConfig {
  int num_basis = 8;
  int num_dof = 2;
  double width = 0.0;  // phase units; 0 selects default_width(num_basis)
  double duration = 2.0;
  int num_timesteps = 100;

  // Width such that adjacent bases cross at kBasisCrossingActivation.
  static double default_width(int num_basis) {
    const double spacing = 1.0 / (num_basis - 1);
    return 0.5 * spacing / std::sqrt(2.0 * std::log(1.0 / kBasisCrossingActivation));
  }

  double effective_width() const { return width > 0.0 ? width : default_width(num_basis); }
  int weight_count() const { return num_basis * num_dof; }
  double center(int b) const { return static_cast<double>(b) / (num_basis - 1); }

  void validate() const {
    if (num_basis < 2) throw ValidationError("num_basis must be >= 2");
    if (num_dof < 1) throw ValidationError("num_dof must be >= 1");
    if (width < 0.0 || !std::isfinite(width)) throw ValidationError("width must be > 0");
    if (!(duration > 0.0) || !std::isfinite(duration)) throw ValidationError("duration must be > 0");
    if (num_timesteps < 2) throw ValidationError("num_timesteps must be >= 2");
  }
};

struct PolicyDistribution {
  WeightVector mean;
  Eigen::VectorXd sigma;
  double base_sigma = 0.15;

  static PolicyDistribution isotropic(const WeightVector& mean, double base_sigma) {
    return {mean, Eigen::VectorXd::Constant(mean.size(), base_sigma), base_sigma};
  }

  friend bool operator==(const PolicyDistribution& a, const PolicyDistribution& b) {
    return exactly_equal(a.mean, b.mean) && exactly_equal(a.sigma, b.sigma) &&
           a.base_sigma == b.base_sigma;
  }
};

struct Trajectory {
  Eigen::VectorXd timestamps;
  Eigen::MatrixXd positions;  // rows = timesteps, cols = dof
  double speed_factor = 1.0;

  Eigen::Index size() const { return timestamps.size(); }
  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return exactly_equal(a.timestamps, b.timestamps) && exactly_equal(a.positions, b.positions) &&
           a.speed_factor == b.speed_factor;
  }
};

// Normalized activations of every basis function at one phase in [0, 1].
inline Eigen::RowVectorXd basis_row(const BasisConfig& config, double phase) {
  const double width = config.effective_width();
  Eigen::RowVectorXd row(config.num_basis);
  for (int b = 0; b < config.num_basis; ++b) {
    const double d = phase - config.center(b);
    row[b] = std::exp(-0.5 * d * d / (width * width));
  }
  return row / row.sum();
}

inline Eigen::MatrixXd basis_matrix(const BasisConfig& config) {
  config.validate();
  Eigen::MatrixXd phi(config.num_timesteps, config.num_basis);
  for (int r = 0; r < config.num_timesteps; ++r) {
    phi.row(r) = basis_row(config, static_cast<double>(r) / (config.num_timesteps - 1));
  }
  return phi;
}

inline void check_weight_length(const WeightVector& weights, const BasisConfig& config) {
  if (weights.size() != config.weight_count()) {
    throw DimensionError("weight vector has " + std::to_string(weights.size()) +
                         " entries, expected " + std::to_string(config.weight_count()));
  }
}

// Positions do not depend on speed_factor; only the time axis is rescaled.
inline Trajectory generate_trajectory(const WeightVector& weights, const BasisConfig& config,
                                      double speed_factor = 1.0) {
  check_weight_length(weights, config);
  if (!(speed_factor > 0.0)) throw ValidationError("speed_factor must be > 0");
  const Eigen::MatrixXd phi = basis_matrix(config);

  Trajectory traj;
  traj.speed_factor = speed_factor;
  traj.positions.resize(config.num_timesteps, config.num_dof);
  for (int d = 0; d < config.num_dof; ++d) {
    traj.positions.col(d) = phi * weights.segment(d * config.num_basis, config.num_basis);
  }
  traj.timestamps.resize(config.num_timesteps);
  for (int r = 0; r < config.num_timesteps; ++r) {
    const double nominal = config.duration * r / (config.num_timesteps - 1);
    traj.timestamps[r] = nominal / speed_factor;
  }
  return traj;
}

inline WeightVector sample_weights(const PolicyDistribution& dist, Seed seed) {
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  WeightVector out(dist.mean.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = dist.mean[i] + dist.sigma[i] * normal(engine);
  }
  return out;
}

// Ridge least-squares fit. Each point is regressed against the basis
// evaluated at its normalized phase, so arbitrary timestamps are accepted.
inline WeightVector fit_weights(const Trajectory& trajectory, const BasisConfig& config) {
  config.validate();
  const Eigen::Index n = trajectory.size();
  if (trajectory.positions.rows() != n) {
    throw DimensionError("trajectory positions/timestamps length mismatch");
  }
  if (trajectory.positions.cols() != config.num_dof) {
    throw DimensionError("trajectory has " + std::to_string(trajectory.positions.cols()) +
                         " dof, expected " + std::to_string(config.num_dof));
  }
  if (n < config.num_basis) {
    throw UnderdeterminedError("trajectory has " + std::to_string(n) + " points but " +
                               std::to_string(config.num_basis) + " basis functions");
  }
  const double t0 = trajectory.timestamps[0];
  const double span = trajectory.timestamps[n - 1] - t0;
  if (!(span > 0.0)) throw InvalidTrajectoryError("trajectory has zero duration");

  Eigen::MatrixXd phi(n, config.num_basis);
  for (Eigen::Index r = 0; r < n; ++r) {
    phi.row(r) = basis_row(config, (trajectory.timestamps[r] - t0) / span);
  }
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += kFitRidge;
  const Eigen::LDLT<Eigen::MatrixXd> solver(gram);

  WeightVector weights(config.weight_count());
  for (int d = 0; d < config.num_dof; ++d) {
    weights.segment(d * config.num_basis, config.num_basis) =
        solver.solve(phi.transpose() * trajectory.positions.col(d));
  }
  return weights;
}

// Mixes a base seed with stream identifiers (splitmix64 finalizer).
inline Seed derive_seed(Seed base, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

}  // namespace metateach
