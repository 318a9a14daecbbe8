#pragma once

// Sample-wise PIBB² policy improvement over a diagonal Gaussian weight
// distribution.
//
// One update runs: decay of past rewards (sparing the most recent guidance
// sample), append of the newly rated samples, eliteness-scaled min/max
// normalization of all rewards, exponentiation, normalization by the weight
// sum, weighted averaging of the stored weight vectors into the new mean, and
// a fixed multiplicative shrink of the exploration spread.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "metateach/errors.hpp"
#include "metateach/promp.hpp"

namespace metateach {

struct LearnerConstants {
  double eliteness_h = 10.0;
  double reward_decay = 0.9;
  double covariance_decay = 0.973;
  double guidance_decay = 0.5;
  double guidance_eliteness_multiplier = 1.3;
  double reward_pref = 100.0;
  double reward_meta = 150.0;

  void validate() const {
    auto unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!(eliteness_h > 0.0)) throw ValidationError("eliteness_h must be > 0");
    if (!unit(reward_decay)) throw ValidationError("reward_decay must lie in (0, 1)");
    if (!unit(covariance_decay)) throw ValidationError("covariance_decay must lie in (0, 1)");
    if (!unit(guidance_decay)) throw ValidationError("guidance_decay must lie in (0, 1)");
    if (!(guidance_eliteness_multiplier > 1.0)) {
      throw ValidationError("guidance_eliteness_multiplier must be > 1");
    }
    if (!(reward_pref > 0.0) || !(reward_meta > 0.0)) throw ValidationError("rewards must be > 0");
  }

  bool operator==(const LearnerConstants&) const = default;
};

struct Sample {
  WeightVector weights;
  double reward = 0.0;  // current, possibly decayed
  double original_reward = 0.0;
  bool is_guidance = false;
  bool is_correction = false;
  int trial_index = 0;

  bool flagged() const { return is_guidance || is_correction; }

  friend bool operator==(const Sample& a, const Sample& b) {
    return exactly_equal(a.weights, b.weights) && a.reward == b.reward &&
           a.original_reward == b.original_reward && a.is_guidance == b.is_guidance &&
           a.is_correction == b.is_correction && a.trial_index == b.trial_index;
  }
};

struct LearnerState {
  PolicyDistribution dist;
  std::vector<Sample> history;
  LearnerConstants constants;
  int update_count = 0;

  static LearnerState fresh(const WeightVector& mean, double base_sigma,
                            const LearnerConstants& constants = {}) {
    constants.validate();
    return {PolicyDistribution::isotropic(mean, base_sigma), {}, constants, 0};
  }

  bool operator==(const LearnerState&) const = default;
};

inline std::optional<std::size_t> last_guidance_index(std::span<const Sample> history) {
  for (std::size_t i = history.size(); i-- > 0;) {
    if (history[i].is_guidance) return i;
  }
  return std::nullopt;
}

// Every reward shrinks by reward_decay except the most recent guidance
// sample. When the incoming samples carry guidance, everything except that
// spared sample shrinks by guidance_decay as well.
inline std::vector<Sample> decay_rewards(std::span<const Sample> history,
                                         const LearnerConstants& constants,
                                         bool new_samples_contain_guidance) {
  std::vector<Sample> out(history.begin(), history.end());
  const auto spared = last_guidance_index(history);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (spared && *spared == i) continue;
    out[i].reward *= constants.reward_decay;
    if (new_samples_contain_guidance) out[i].reward *= constants.guidance_decay;
  }
  return out;
}

// (r_n)_i = -h_i * (1 - (r_i - min) / range), with h_i boosted for guidance
// and correction samples. A zero range maps everything to 0.
inline std::vector<double> normalize_rewards(std::span<const Sample> history,
                                             const LearnerConstants& constants) {
  if (history.empty()) throw EmptyHistoryError("cannot normalize an empty history");
  const auto [lo, hi] = std::minmax_element(
      history.begin(), history.end(),
      [](const Sample& a, const Sample& b) { return a.reward < b.reward; });
  const double min_reward = lo->reward;
  const double range = hi->reward - min_reward;

  std::vector<double> normalized(history.size(), 0.0);
  if (range == 0.0) return normalized;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double h = history[i].flagged()
                         ? constants.eliteness_h * constants.guidance_eliteness_multiplier
                         : constants.eliteness_h;
    normalized[i] = -h * (1.0 - (history[i].reward - min_reward) / range);
  }
  return normalized;
}

inline std::vector<double> pibb2_weights(std::span<const double> normalized) {
  if (normalized.empty()) throw EmptyHistoryError("cannot weight an empty history");
  std::vector<double> w(normalized.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(normalized[i]);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

inline Eigen::VectorXd sigma_schedule(const LearnerConstants& constants, double base_sigma,
                                      Eigen::Index size, int update_count) {
  return Eigen::VectorXd::Constant(size,
                                   base_sigma * std::pow(constants.covariance_decay, update_count));
}

inline LearnerState update(const LearnerState& state, std::span<const Sample> new_samples) {
  if (new_samples.empty() || new_samples.size() > 2) {
    throw ValidationError("an update takes one or two rated samples");
  }
  const Eigen::Index dim = state.dist.mean.size();
  for (const Sample& s : new_samples) {
    if (s.weights.size() != dim) {
      throw DimensionError("sample weight vector has " + std::to_string(s.weights.size()) +
                           " entries, expected " + std::to_string(dim));
    }
  }
  const bool guidance_arrives =
      std::any_of(new_samples.begin(), new_samples.end(), [](const Sample& s) { return s.is_guidance; });

  LearnerState next = state;
  next.history = decay_rewards(state.history, state.constants, guidance_arrives);
  next.history.insert(next.history.end(), new_samples.begin(), new_samples.end());

  const std::vector<double> weights = pibb2_weights(normalize_rewards(next.history, state.constants));
  WeightVector mean = WeightVector::Zero(dim);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    mean += weights[i] * next.history[i].weights;
  }
  next.dist.mean = std::move(mean);
  next.update_count = state.update_count + 1;
  next.dist.sigma = sigma_schedule(state.constants, state.dist.base_sigma, dim, next.update_count);
  return next;
}

// The demonstrated weights become the mean and all past samples are dropped.
// The exploration schedule is left where it is.
inline LearnerState apply_demonstration(const LearnerState& state, const WeightVector& demo_weights) {
  if (demo_weights.size() != state.dist.mean.size()) {
    throw DimensionError("demonstration weight vector has " + std::to_string(demo_weights.size()) +
                         " entries, expected " + std::to_string(state.dist.mean.size()));
  }
  LearnerState next = state;
  next.dist.mean = demo_weights;
  next.history.clear();
  return next;
}

}  // namespace metateach
